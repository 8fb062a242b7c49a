#include "activetherm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "activetherm/errors.hpp"
#include "activetherm/spatial.hpp"

namespace activetherm::experiment {

using nlohmann::json;

namespace {

constexpr std::size_t kNoBead = std::numeric_limits<std::size_t>::max();

// Reads one JSON object, remembering which keys were consumed so leftovers
// (typos, stale options) can be rejected.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw InvalidArgument("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    const auto it = doc_.find(key);
    if (it == doc_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument("config: " + path(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    const auto it = doc_.find(key);
    if (it == doc_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string path(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    for (const auto& item : doc_.items())
      if (!seen_.contains(item.key())) throw InvalidArgument("config: unknown key '" + path(item.key().c_str()) + "'");
  }

 private:
  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::filesystem::path temp_path(const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  return tmp;
}

void commit(const std::filesystem::path& tmp, const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  ExperimentConfig c;
  Section top(doc, "");

  if (const json* p = top.child("part")) {
    Section s(*p, "part");
    s.get("type", c.part.type);
    std::array<double, 2> outer{c.part.rect.outer_x, c.part.rect.outer_y};
    std::array<double, 2> pocket{c.part.rect.pocket_x, c.part.rect.pocket_y};
    s.get("outer", outer);
    s.get("pocket", pocket);
    c.part.rect.outer_x = outer[0];
    c.part.rect.outer_y = outer[1];
    c.part.rect.pocket_x = pocket[0];
    c.part.rect.pocket_y = pocket[1];
    s.get("layers", c.part.rect.layers);
    s.get("layer_height", c.part.rect.layer_height);
    s.get("beads_per_layer", c.part.rect.beads_per_layer);
    s.get("point_spacing", c.part.rect.point_spacing);
    s.get("layer_interval_steps", c.part.rect.layer_interval_steps);
    s.get("first_activation_step", c.part.rect.first_activation_step);
    s.get("deposition_temp", c.part.rect.deposition_temp);
    if (const json* b = s.child("interior_bead")) {
      if (b->is_null())
        c.part.rect.interior_bead = kNoBead;
      else if (b->is_number_unsigned())
        c.part.rect.interior_bead = b->get<std::size_t>();
      else
        throw InvalidArgument("config: part.interior_bead must be a bead index or null");
    }
    s.get("mesh_path", c.part.mesh_path);
    std::array<int, 3> grid{c.part.grid.x, c.part.grid.y, c.part.grid.z};
    s.get("grid", grid);
    c.part.grid = {grid[0], grid[1], grid[2]};
    s.get("schedule_path", c.part.schedule_path);
    std::vector<std::array<double, 3>> interior;
    s.get("interior_points", interior);
    for (const auto& q : interior) c.part.interior_points.emplace_back(q[0], q[1], q[2]);
    s.finish();
  }
  if (const json* p = top.child("model")) {
    Section s(*p, "model");
    s.get("dt", c.model.dt);
    s.get("diffusivity", c.model.diffusivity);
    s.get("ambient_temp", c.model.ambient_temp);
    s.get("neighbors", c.model.neighbors);
    s.get("boundary_loss", c.model.boundary_loss);
    s.get("process_noise_density", c.model.process_noise_density);
    s.get("active_window", c.active_window);
    s.finish();
  }
  if (const json* p = top.child("filter")) {
    Section s(*p, "filter");
    s.get("measurement_variance", c.measurement_variance);
    s.get("prior_variance", c.prior_variance);
    s.finish();
  }
  if (const json* p = top.child("policy")) {
    Section s(*p, "policy");
    std::string kind(perception::to_string(c.policy.kind));
    s.get("kind", kind);
    c.policy.kind = perception::policy_kind_from_string(kind);
    s.get("alpha", c.policy.alpha);
    s.finish();
  }
  if (const json* p = top.child("sensor")) {
    Section s(*p, "sensor");
    s.get("width", c.camera.width);
    s.get("height", c.camera.height);
    s.get("fov_deg", c.camera.fov_deg);
    s.get("noise_std", c.sensor_noise_std);
    s.get("slice_fraction", c.slice_fraction);
    s.get("match_radius", c.match_radius);
    s.finish();
  }
  if (const json* p = top.child("groundtruth")) {
    Section s(*p, "groundtruth");
    s.get("mismatch_factor", c.groundtruth.mismatch_factor);
    s.get("refinement", c.groundtruth.refinement);
    s.get("substeps", c.groundtruth.substeps);
    s.get("boundary_loss", c.groundtruth.boundary_loss);
    s.get("neighbors", c.groundtruth.neighbors);
    s.get("respect_active_window", c.groundtruth.respect_active_window);
    s.get("table_path", c.groundtruth.table_path);
    s.get("save_table", c.groundtruth.save_table);
    s.finish();
  }
  top.get("steps_per_measurement", c.steps_per_measurement);
  top.get("horizon", c.horizon);
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  if (const json* p = top.child("compare")) {
    Section s(*p, "compare");
    s.get("seeds", c.compare.seeds);
    s.get("cycles", c.compare.cycles);
    s.get("threads", c.compare.threads);
    if (const json* list = s.child("policies")) {
      if (!list->is_array()) throw InvalidArgument("config: compare.policies must be an array");
      c.compare.policies.clear();
      for (const json& name : *list) {
        if (!name.is_string()) throw InvalidArgument("config: compare.policies entries must be strings");
        c.compare.policies.push_back(perception::policy_kind_from_string(name.get<std::string>()));
      }
    }
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json ExperimentConfig::to_json() const {
  json doc;
  const auto& r = part.rect;
  json interior = json::array();
  for (const Vec3& q : part.interior_points) interior.push_back({q.x(), q.y(), q.z()});
  doc["part"] = {{"type", part.type},
                 {"outer", {r.outer_x, r.outer_y}},
                 {"pocket", {r.pocket_x, r.pocket_y}},
                 {"layers", r.layers},
                 {"layer_height", r.layer_height},
                 {"beads_per_layer", r.beads_per_layer},
                 {"point_spacing", r.point_spacing},
                 {"layer_interval_steps", r.layer_interval_steps},
                 {"first_activation_step", r.first_activation_step},
                 {"deposition_temp", r.deposition_temp},
                 {"interior_bead", r.interior_bead == kNoBead ? json(nullptr) : json(r.interior_bead)},
                 {"mesh_path", part.mesh_path},
                 {"grid", {part.grid.x, part.grid.y, part.grid.z}},
                 {"schedule_path", part.schedule_path},
                 {"interior_points", interior}};
  doc["model"] = {{"dt", model.dt},
                  {"diffusivity", model.diffusivity},
                  {"ambient_temp", model.ambient_temp},
                  {"neighbors", model.neighbors},
                  {"boundary_loss", model.boundary_loss},
                  {"process_noise_density", model.process_noise_density},
                  {"active_window", active_window}};
  doc["filter"] = {{"measurement_variance", measurement_variance}, {"prior_variance", prior_variance}};
  doc["policy"] = {{"kind", std::string(perception::to_string(policy.kind))}, {"alpha", policy.alpha}};
  doc["sensor"] = {{"width", camera.width},
                   {"height", camera.height},
                   {"fov_deg", camera.fov_deg},
                   {"noise_std", sensor_noise_std},
                   {"slice_fraction", slice_fraction},
                   {"match_radius", match_radius}};
  doc["groundtruth"] = {{"mismatch_factor", groundtruth.mismatch_factor},
                        {"refinement", groundtruth.refinement},
                        {"substeps", groundtruth.substeps},
                        {"boundary_loss", groundtruth.boundary_loss},
                        {"neighbors", groundtruth.neighbors},
                        {"respect_active_window", groundtruth.respect_active_window},
                        {"table_path", groundtruth.table_path},
                        {"save_table", groundtruth.save_table}};
  doc["steps_per_measurement"] = steps_per_measurement;
  doc["horizon"] = horizon;
  doc["seed"] = seed;
  doc["output_dir"] = output_dir;
  json policies = json::array();
  for (auto k : compare.policies) policies.push_back(std::string(perception::to_string(k)));
  doc["compare"] = {{"seeds", compare.seeds},
                    {"cycles", compare.cycles},
                    {"policies", policies},
                    {"threads", compare.threads}};
  return doc;
}

void ExperimentConfig::validate() const {
  if (part.type == "rect_pocket") {
    part.rect.validate();
    if (part.rect.interior_bead != kNoBead && part.rect.interior_bead >= part.rect.beads_per_layer)
      throw InvalidArgument("config: part.interior_bead must be < beads_per_layer");
  } else if (part.type == "mesh") {
    if (part.mesh_path.empty()) throw InvalidArgument("config: part.mesh_path is required for mesh parts");
    if (part.grid.x < 1 || part.grid.y < 1 || part.grid.z < 1)
      throw InvalidArgument("config: part.grid entries must be >= 1");
    if (part.rect.layers == 0 || part.rect.layer_interval_steps < 1)
      throw InvalidArgument("config: part.layers and part.layer_interval_steps must be positive");
  } else {
    throw InvalidArgument("config: part.type must be 'rect_pocket' or 'mesh'");
  }
  if (active_window == 0) throw InvalidArgument("config: model.active_window must be >= 1");
  if (!(groundtruth.mismatch_factor > 0.0)) throw InvalidArgument("config: groundtruth.mismatch_factor must be > 0");
  if (groundtruth.refinement == 0) throw InvalidArgument("config: groundtruth.refinement must be >= 1");
  if (groundtruth.substeps < 1) throw InvalidArgument("config: groundtruth.substeps must be >= 1");
  if (!(groundtruth.boundary_loss >= 0.0)) throw InvalidArgument("config: groundtruth.boundary_loss must be >= 0");
  if (groundtruth.neighbors == 0) throw InvalidArgument("config: groundtruth.neighbors must be >= 1");
  if (compare.seeds == 0 || compare.cycles == 0) throw InvalidArgument("config: compare.seeds and compare.cycles must be >= 1");
  if (compare.policies.empty()) throw InvalidArgument("config: compare.policies must not be empty");
  loop_config().validate();
}

perception::LoopConfig ExperimentConfig::loop_config() const {
  perception::LoopConfig lc;
  lc.model = model;
  lc.measurement.variance_per_point = measurement_variance;
  lc.prior_variance = prior_variance;
  lc.policy = policy;
  lc.camera = camera;
  lc.sensor_noise_std = sensor_noise_std;
  lc.slice_fraction = slice_fraction;
  lc.match_radius = match_radius;
  lc.steps_per_measurement = steps_per_measurement;
  lc.horizon = horizon;
  lc.seed = seed;
  return lc;
}

// ---------------------------------------------------------------------------
// Scenario

namespace {

part::RectPocketSpec rect_spec(const ExperimentConfig& config) {
  part::RectPocketSpec spec = config.part.rect;
  spec.active_window = config.active_window;
  return spec;
}

struct MeshPart {
  geometry::TriMesh mesh;
  PartModel model;
};

MeshPart build_mesh_part(const ExperimentConfig& config) {
  MeshPart out;
  out.mesh = geometry::load_mesh(config.part.mesh_path);
  out.mesh.validate();
  out.model.points = geometry::select_control_points(out.mesh, config.part.grid);
  for (const Vec3& q : config.part.interior_points) out.model.points.add_extra_point(q, true);
  const auto& r = config.part.rect;
  if (!config.part.schedule_path.empty()) {
    out.model.schedule = dynamics::DepositionSchedule::load(config.part.schedule_path);
    out.model.schedule.active_window = config.active_window;
  } else {
    out.model.schedule = part::schedule_by_height(out.model.points.positions(), r.layers, r.layer_interval_steps,
                                                  r.first_activation_step, r.deposition_temp, config.active_window);
  }
  out.model.schedule.validate(out.model.points.size());
  return out;
}

}  // namespace

PartModel build_part(const ExperimentConfig& config) {
  config.validate();
  if (config.part.type == "mesh") return build_mesh_part(config).model;
  const part::BeadPoints beads = part::bead_points(rect_spec(config), 1);
  return PartModel{part::control_points(beads), beads.schedule};
}

perception::Scenario build_scenario(const ExperimentConfig& config, std::optional<std::size_t> cycles) {
  config.validate();
  const std::size_t n_cycles = cycles.value_or(config.cycle_count());
  const Step truth_horizon = n_cycles == 0 ? 0 : static_cast<Step>(n_cycles - 1) * config.steps_per_measurement;

  perception::Scenario sc;
  groundtruth::FineSimulationSpec fine;
  if (config.part.type == "mesh") {
    MeshPart mp = build_mesh_part(config);
    sc.points = std::move(mp.model.points);
    sc.schedule = std::move(mp.model.schedule);
    // The mesh vertices (plus interior points) are the fine grid; each takes
    // the layer of its nearest control point.
    const Eigen::Index nv = mp.mesh.vertices.rows();
    const auto n_extra = static_cast<Eigen::Index>(config.part.interior_points.size());
    fine.positions.resize(nv + n_extra, 3);
    fine.positions.topRows(nv) = mp.mesh.vertices;
    for (Eigen::Index i = 0; i < n_extra; ++i)
      fine.positions.row(nv + i) = config.part.interior_points[static_cast<std::size_t>(i)].transpose();
    const KdTree ctrl_tree(sc.points.positions());
    const std::vector<std::size_t> layer_of = sc.schedule.layer_of_points(sc.points.size());
    fine.deposition.active_window = sc.schedule.active_window;
    for (const auto& layer : sc.schedule.layers) {
      dynamics::Layer fl;
      fl.activation_step = layer.activation_step;
      fl.deposition_temp = layer.deposition_temp;
      fine.deposition.layers.push_back(fl);
    }
    for (Eigen::Index i = 0; i < fine.positions.rows(); ++i) {
      const std::size_t l = layer_of[*ctrl_tree.nearest(fine.positions.row(i).transpose())];
      if (l < fine.deposition.layers.size()) fine.deposition.layers[l].point_ids.push_back(static_cast<PointId>(i));
    }
    sc.meshes = part::LayeredMesh::fixed(std::move(mp.mesh));
  } else {
    const part::RectPocketSpec spec = rect_spec(config);
    const part::BeadPoints ctrl = part::bead_points(spec, 1);
    sc.points = part::control_points(ctrl);
    sc.schedule = ctrl.schedule;
    part::BeadPoints fine_beads = part::bead_points(spec, config.groundtruth.refinement);
    fine.positions = std::move(fine_beads.positions);
    fine.deposition = std::move(fine_beads.schedule);
    sc.meshes = part::LayeredMesh::for_part(spec);
  }
  if (config.groundtruth.refinement > 1 &&
      static_cast<std::size_t>(fine.positions.rows()) < 4 * sc.points.size())
    throw InvalidArgument("ground truth grid must have at least 4x as many points as the control set (" +
                          std::to_string(fine.positions.rows()) + " < 4 x " + std::to_string(sc.points.size()) + ")");

  if (!config.groundtruth.table_path.empty()) {
    sc.truth = groundtruth::load_table(config.groundtruth.table_path);
    return sc;
  }
  fine.params.dt = config.model.dt;
  fine.params.substeps = config.groundtruth.substeps;
  fine.params.diffusivity = config.model.diffusivity * config.groundtruth.mismatch_factor;
  fine.params.boundary_loss = config.groundtruth.boundary_loss;
  fine.params.ambient_temp = config.model.ambient_temp;
  fine.params.neighbors = config.groundtruth.neighbors;
  fine.params.respect_active_window = config.groundtruth.respect_active_window;
  fine.params.horizon = truth_horizon;
  fine.params.record_stride = config.steps_per_measurement;
  sc.truth = groundtruth::simulate_fine(fine);
  return sc;
}

// ---------------------------------------------------------------------------
// Single run

RunResult run(const ExperimentConfig& config, const perception::Scenario& scenario, bool keep_states) {
  RunResult result;
  const auto start = std::chrono::steady_clock::now();
  perception::StateObserver observer;
  if (keep_states)
    observer = [&](const perception::CycleRecord&, const filter::KalmanState& s) { result.states.push_back(s); };
  result.trace = perception::run_loop(scenario, config.loop_config(), observer);
  result.wall_seconds = seconds_since(start);
  return result;
}

json summary_json(const ExperimentConfig& config, const RunResult& result) {
  const auto& recs = result.trace.records;
  json final_record = nullptr;
  double mean_cov = 0.0;
  if (!recs.empty()) {
    const auto& r = recs.back();
    final_record = {{"cycle", r.cycle},
                    {"step", r.step},
                    {"max_err_ext", r.max_err_ext},
                    {"avg_err_ext", r.avg_err_ext},
                    {"max_err_int", r.max_err_int},
                    {"avg_err_int", r.avg_err_int},
                    {"avg_cov", r.avg_cov}};
    for (const auto& rec : recs) mean_cov += rec.avg_cov;
    mean_cov /= static_cast<double>(recs.size());
  }
  return {{"config", config.to_json()},
          {"cycles", recs.size()},
          {"predict_steps", result.trace.predict_steps},
          {"steps_per_cycle", config.steps_per_measurement},
          {"measurement_interval_s", config.model.dt * static_cast<double>(config.steps_per_measurement)},
          {"final", final_record},
          {"mean_avg_cov", mean_cov},
          {"out_of_frame_points", result.trace.out_of_frame},
          {"wall_time_s", result.wall_seconds}};
}

std::string curves_data(const perception::PerceptionTrace& trace, double dt) {
  std::ostringstream out;
  out << "# index 0: time_s max_err_ext avg_err_ext max_err_int avg_err_int\n";
  for (const auto& r : trace.records)
    out << format_g(static_cast<double>(r.step) * dt) << ' ' << format_g(r.max_err_ext) << ' '
        << format_g(r.avg_err_ext) << ' ' << format_g(r.max_err_int) << ' ' << format_g(r.avg_err_int) << '\n';
  out << "\n\n# index 1: time_s avg_cov\n";
  for (const auto& r : trace.records)
    out << format_g(static_cast<double>(r.step) * dt) << ' ' << format_g(r.avg_cov) << '\n';
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = temp_path(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("error writing " + tmp.string());
    }
  }
  commit(tmp, path);
}

void write_run_outputs(const ExperimentConfig& config, const RunResult& result, const std::filesystem::path& dir) {
  ensure_dir(dir);
  if (!result.states.empty()) {
    ensure_dir(dir / "states");
    for (std::size_t c = 0; c < result.states.size(); ++c) {
      char name[64];
      std::snprintf(name, sizeof name, "state_%05zu.csv", c);
      const std::filesystem::path path = dir / "states" / name;
      const std::filesystem::path tmp = temp_path(path);
      filter::write_state_csv(result.states[c], tmp, config.model.ambient_temp);
      commit(tmp, path);
    }
  }
  write_file_atomic(dir / "trace.csv", perception::trace_csv(result.trace));
  write_file_atomic(dir / "curves.dat", curves_data(result.trace, config.model.dt));
  write_file_atomic(dir / "summary.json", summary_json(config, result).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Policy comparison

double CompareReport::win_fraction(std::size_t a, std::size_t b) const {
  if (rows.empty()) return 0.0;
  std::size_t wins = 0;
  for (const auto& r : rows)
    if (r.final_avg_cov.at(a) < r.final_avg_cov.at(b)) ++wins;
  return static_cast<double>(wins) / static_cast<double>(rows.size());
}

json CompareReport::to_json() const {
  json per_policy = json::array();
  for (std::size_t j = 0; j < policies.size(); ++j) {
    double sum = 0.0, sum2 = 0.0, err = 0.0;
    for (const auto& r : rows) {
      sum += r.final_avg_cov[j];
      sum2 += r.final_avg_cov[j] * r.final_avg_cov[j];
      err += r.final_avg_err_ext[j];
    }
    const double n = static_cast<double>(rows.size());
    const double mean = sum / n;
    per_policy.push_back({{"policy", std::string(perception::to_string(policies[j]))},
                          {"mean_final_avg_cov", mean},
                          {"std_final_avg_cov", std::sqrt(std::max(0.0, sum2 / n - mean * mean))},
                          {"mean_final_avg_err_ext", err / n}});
  }
  json pairs = json::array();
  for (std::size_t a = 0; a < policies.size(); ++a)
    for (std::size_t b = 0; b < policies.size(); ++b)
      if (a != b)
        pairs.push_back({{"policy", std::string(perception::to_string(policies[a]))},
                         {"versus", std::string(perception::to_string(policies[b]))},
                         {"win_fraction", win_fraction(a, b)}});
  return {{"seeds", rows.size()}, {"policies", per_policy}, {"paired", pairs}, {"wall_time_s", wall_seconds}};
}

std::string CompareReport::csv() const {
  std::string out = "seed";
  for (auto k : policies) out += "," + std::string(perception::to_string(k));
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed);
    for (double v : r.final_avg_cov) out += "," + format_g(v);
    out += "\n";
  }
  return out;
}

CompareReport compare_policies(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const perception::Scenario scenario = build_scenario(config, config.compare.cycles);

  CompareReport report;
  report.policies = config.compare.policies;
  const std::size_t n_pol = report.policies.size();
  const std::size_t jobs = config.compare.seeds * n_pol;
  report.traces.resize(jobs);
  std::vector<std::exception_ptr> errors(jobs);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      try {
        perception::LoopConfig lc = config.loop_config();
        lc.horizon = static_cast<Step>(config.compare.cycles) * config.steps_per_measurement;
        lc.seed = config.seed + job / n_pol;
        lc.policy.kind = report.policies[job % n_pol];
        report.traces[job] = perception::run_loop(scenario, lc);
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  std::size_t threads = config.compare.threads ? config.compare.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, jobs);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t s = 0; s < config.compare.seeds; ++s) {
    CompareRow row;
    row.seed = config.seed + s;
    for (std::size_t j = 0; j < n_pol; ++j) {
      const auto& recs = report.traces[s * n_pol + j].records;
      row.final_avg_cov.push_back(recs.empty() ? 0.0 : recs.back().avg_cov);
      row.final_avg_err_ext.push_back(recs.empty() ? 0.0 : recs.back().avg_err_ext);
    }
    report.rows.push_back(std::move(row));
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

void write_compare_outputs(const ExperimentConfig& config, const CompareReport& report,
                           const std::filesystem::path& dir) {
  ensure_dir(dir / "traces");
  const std::size_t n_pol = report.policies.size();
  for (std::size_t job = 0; job < report.traces.size(); ++job) {
    char name[128];
    std::snprintf(name, sizeof name, "trace_p%zu_%s_seed%llu.csv", job % n_pol,
                  std::string(perception::to_string(report.policies[job % n_pol])).c_str(),
                  static_cast<unsigned long long>(config.seed + job / n_pol));
    write_file_atomic(dir / "traces" / name, perception::trace_csv(report.traces[job]));
  }
  write_file_atomic(dir / "compare.csv", report.csv());
  json doc = report.to_json();
  doc["config"] = config.to_json();
  write_file_atomic(dir / "compare_summary.json", doc.dump(2) + "\n");
}

}  // namespace activetherm::experiment
