#include <array>
#include <bit>
#include <fstream>
#include <string_view>

#include "activetherm/errors.hpp"
#include "activetherm/groundtruth.hpp"

namespace activetherm::groundtruth {

namespace {

constexpr std::string_view kMagic = "ATHERMLT";
constexpr std::uint32_t kFlagRespectWindow = 1u;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  void u32(std::uint32_t v) { bytes(v, 4); }
  void i32(std::int32_t v) { bytes(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void i64(std::int64_t v) { bytes(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { bytes(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  void bytes(std::uint64_t v, int n) {
    std::array<char, 8> buf{};
    for (int i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out_.write(buf.data(), n);
  }
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(bytes(4))); }
  std::uint64_t u64() { return bytes(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(bytes(8)); }
  double f64() { return std::bit_cast<double>(bytes(8)); }
  std::string raw(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) truncated();
    return s;
  }

  // Guards allocations against counts that cannot fit in the remaining file.
  void expect_available(std::uint64_t n_bytes, std::uint64_t file_size) {
    const auto pos = static_cast<std::uint64_t>(in_.tellg());
    if (n_bytes > file_size - pos) truncated();
  }

  [[noreturn]] void truncated() const { throw IoError(path_ + ": truncated lookup table"); }

 private:
  std::uint64_t bytes(int n) {
    std::array<unsigned char, 8> buf{};
    in_.read(reinterpret_cast<char*>(buf.data()), n);
    if (in_.gcount() != n) truncated();
    std::uint64_t v = 0;
    for (int i = n; i-- > 0;) v = (v << 8) | buf[static_cast<std::size_t>(i)];
    return v;
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

std::uint64_t lookup_table_header_size(std::uint64_t points, const dynamics::DepositionSchedule& deposition,
                                       std::uint64_t rows) {
  std::uint64_t size = kMagic.size() + 4 + 4 + 8 + 8 + 8 + 8 + 4 + 4 + 8 + 8;
  size += points * 3 * 8;
  for (const dynamics::Layer& layer : deposition.layers) size += 8 + 8 + 8 + 8 * layer.point_ids.size();
  size += rows * 8;
  return size;
}

void save_table(const GroundTruthField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write lookup table " + path.string());
  Writer w(out);
  const auto points = static_cast<std::uint64_t>(field.point_count());
  const auto rows = static_cast<std::uint64_t>(field.stored_steps().size());
  const auto& deposition = field.deposition();

  w.raw(kMagic);
  w.u32(kLookupTableVersion);
  w.u32(field.respect_active_window() ? kFlagRespectWindow : 0u);
  w.u64(points);
  w.u64(rows);
  w.u64(deposition.layers.size());
  w.f64(field.dt());
  w.i32(field.substeps());
  w.i32(0);
  w.f64(field.ambient_temp());
  w.u64(deposition.active_window);
  const Points& pts = field.fine_points();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    w.f64(pts(i, 0));
    w.f64(pts(i, 1));
    w.f64(pts(i, 2));
  }
  for (const dynamics::Layer& layer : deposition.layers) {
    w.i64(layer.activation_step);
    w.f64(layer.deposition_temp);
    w.u64(layer.point_ids.size());
    for (PointId id : layer.point_ids) w.u64(id);
  }
  for (Step s : field.stored_steps()) w.i64(s);
  const Eigen::MatrixXd& temps = field.temps();
  for (Eigen::Index r = 0; r < temps.rows(); ++r)
    for (Eigen::Index c = 0; c < temps.cols(); ++c) w.f64(temps(r, c));
  out.flush();
  if (!out) throw IoError("error writing lookup table " + path.string());
}

GroundTruthField load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open lookup table " + path.string());
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat lookup table " + path.string());
  Reader r(in, path.string());

  if (r.raw(kMagic.size()) != kMagic) throw IoError(path.string() + ": not an activetherm lookup table");
  const std::uint32_t version = r.u32();
  if (version != kLookupTableVersion)
    throw IoError(path.string() + ": unsupported lookup table version " + std::to_string(version) + " (expected " +
                  std::to_string(kLookupTableVersion) + ")");
  const std::uint32_t flags = r.u32();
  const std::uint64_t points = r.u64();
  const std::uint64_t rows = r.u64();
  const std::uint64_t layers = r.u64();
  const double dt = r.f64();
  const std::int32_t substeps = r.i32();
  r.i32();
  const double ambient = r.f64();

  dynamics::DepositionSchedule deposition;
  deposition.active_window = static_cast<std::size_t>(r.u64());

  r.expect_available(points * 24, file_size);
  Points pts(static_cast<Eigen::Index>(points), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    pts(i, 0) = r.f64();
    pts(i, 1) = r.f64();
    pts(i, 2) = r.f64();
  }
  r.expect_available(layers * 24, file_size);
  for (std::uint64_t l = 0; l < layers; ++l) {
    dynamics::Layer layer;
    layer.activation_step = r.i64();
    layer.deposition_temp = r.f64();
    const std::uint64_t count = r.u64();
    r.expect_available(count * 8, file_size);
    layer.point_ids.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) layer.point_ids.push_back(static_cast<PointId>(r.u64()));
    deposition.layers.push_back(std::move(layer));
  }
  r.expect_available(rows * 8, file_size);
  std::vector<Step> steps(rows);
  for (auto& s : steps) s = r.i64();
  r.expect_available(rows * points * 8, file_size);
  Eigen::MatrixXd temps(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(points));
  for (Eigen::Index row = 0; row < temps.rows(); ++row)
    for (Eigen::Index c = 0; c < temps.cols(); ++c) temps(row, c) = r.f64();
  if (in.peek() != std::ifstream::traits_type::eof()) throw IoError(path.string() + ": trailing bytes in lookup table");

  try {
    return GroundTruthField(std::move(pts), std::move(deposition), std::move(steps), std::move(temps), dt, substeps,
                            ambient, (flags & kFlagRespectWindow) != 0);
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": inconsistent lookup table: " + e.what());
  }
}

}  // namespace activetherm::groundtruth
