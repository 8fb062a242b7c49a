#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "activetherm/errors.hpp"
#include "activetherm/geometry.hpp"

namespace activetherm::geometry {

namespace {

[[noreturn]] void fail(std::string_view source, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << source << ":" << line << ": " << what;
  throw IoError(msg.str());
}

double parse_double(std::string_view token, std::string_view source, std::size_t line) {
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) fail(source, line, "invalid number '" + std::string(token) + "'");
  return value;
}

long parse_index(std::string_view token, std::string_view source, std::size_t line) {
  token = token.substr(0, token.find('/'));
  long value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size() || value == 0)
    fail(source, line, "invalid face index '" + std::string(token) + "'");
  return value;
}

}  // namespace

TriMesh parse_obj(std::istream& in, std::string_view source_name) {
  std::vector<Vec3> vertices;
  std::vector<std::array<long, 3>> raw_faces;
  std::vector<std::size_t> face_lines;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string tag;
    if (!(tokens >> tag) || tag[0] == '#') continue;

    std::vector<std::string> args;
    for (std::string t; tokens >> t;) args.push_back(std::move(t));

    if (tag == "v") {
      if (args.size() != 3 && args.size() != 4) fail(source_name, line_no, "vertex needs 3 coordinates");
      vertices.emplace_back(parse_double(args[0], source_name, line_no),
                            parse_double(args[1], source_name, line_no),
                            parse_double(args[2], source_name, line_no));
    } else if (tag == "f") {
      if (args.size() != 3)
        fail(source_name, line_no,
             "only triangular faces are supported (got " + std::to_string(args.size()) + " indices)");
      std::array<long, 3> face{};
      for (int i = 0; i < 3; ++i) {
        long idx = parse_index(args[i], source_name, line_no);
        // Negative indices are relative to the vertices read so far.
        if (idx < 0) idx = static_cast<long>(vertices.size()) + idx + 1;
        face[i] = idx;
      }
      raw_faces.push_back(face);
      face_lines.push_back(line_no);
    } else if (tag == "vn" || tag == "vt" || tag == "vp" || tag == "s" || tag == "o" || tag == "g" ||
               tag == "mtllib" || tag == "usemtl" || tag == "l") {
      continue;
    } else {
      fail(source_name, line_no, "unsupported record '" + tag + "'");
    }
  }
  if (in.bad()) throw IoError(std::string(source_name) + ": read error");

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(vertices.size()), 3);
  for (std::size_t i = 0; i < vertices.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = vertices[i];
  mesh.faces.reserve(raw_faces.size());
  for (std::size_t f = 0; f < raw_faces.size(); ++f) {
    Face face{};
    for (int i = 0; i < 3; ++i) {
      const long idx = raw_faces[f][i];
      if (idx < 1 || static_cast<std::size_t>(idx) > vertices.size())
        fail(source_name, face_lines[f],
             "face index " + std::to_string(idx) + " out of range (" + std::to_string(vertices.size()) +
                 " vertices)");
      face[i] = static_cast<std::size_t>(idx - 1);
    }
    mesh.faces.push_back(face);
  }
  return mesh;
}

TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file " + path.string());
  return parse_obj(in, path.string());
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace activetherm::geometry
