#include "activetherm/perception.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "activetherm/errors.hpp"
#include "activetherm/spatial.hpp"

namespace activetherm::perception {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Noise and policy draws come from separate streams of the run seed.
constexpr std::uint64_t kPolicyStream = 1;
constexpr std::uint64_t kNoiseStreamBase = 1ull << 32;

double mean_diagonal(const filter::KalmanState& state) {
  return state.empty() ? 0.0 : state.covariance.diagonal().mean();
}

void fill_errors(CycleRecord& rec, const filter::KalmanState& state, const Scenario& scenario, double ambient) {
  double sum_ext = 0.0, sum_int = 0.0;
  std::size_t n_ext = 0, n_int = 0;
  for (std::size_t i = 0; i < state.dim(); ++i) {
    const PointId id = state.point_ids[i];
    const double truth = truth_at(scenario.truth, scenario.points.position(id), rec.step);
    const double err = std::abs(state.mean[static_cast<Eigen::Index>(i)] + ambient - truth);
    if (scenario.points.interior(id)) {
      rec.max_err_int = std::max(rec.max_err_int, err);
      sum_int += err;
      ++n_int;
    } else {
      rec.max_err_ext = std::max(rec.max_err_ext, err);
      sum_ext += err;
      ++n_ext;
    }
  }
  rec.avg_err_ext = n_ext ? sum_ext / static_cast<double>(n_ext) : 0.0;
  rec.avg_err_int = n_int ? sum_int / static_cast<double>(n_int) : 0.0;
}

}  // namespace

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::MaxValue: return "max_value";
    case PolicyKind::MaxUncertainty: return "max_uncertainty";
    case PolicyKind::UniformRandom: return "uniform_random";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(std::string_view name) {
  if (name == "max_value") return PolicyKind::MaxValue;
  if (name == "max_uncertainty") return PolicyKind::MaxUncertainty;
  if (name == "uniform_random") return PolicyKind::UniformRandom;
  throw InvalidArgument("unknown policy '" + std::string(name) +
                        "' (expected max_value, max_uncertainty or uniform_random)");
}

void Policy::validate() const {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) throw InvalidArgument("policy: alpha must be a finite value > 1");
}

std::size_t select_target(const Policy& policy, const filter::KalmanState& state, rng::Engine* engine) {
  if (state.empty()) throw InvalidArgument("select_target: empty state");
  if (policy.kind == PolicyKind::UniformRandom) {
    if (!engine) throw InvalidArgument("select_target: the random policy needs an engine");
    return static_cast<std::size_t>(rng::uniform_index(*engine, state.dim()));
  }
  const Eigen::VectorXd score =
      policy.kind == PolicyKind::MaxValue ? state.mean : Eigen::VectorXd(state.covariance.diagonal());
  std::size_t best = 0;
  for (std::size_t i = 1; i < state.dim(); ++i) {
    const double a = score[static_cast<Eigen::Index>(i)], b = score[static_cast<Eigen::Index>(best)];
    if (a > b || (a == b && state.point_ids[i] < state.point_ids[best])) best = i;
  }
  return best;
}

geometry::SensorPose pose_towards(const Vec3& target, const Vec3& center, double alpha) {
  const Vec3 d = alpha * (target - center);
  const double scale = std::max({1.0, target.norm(), center.norm()});
  if (!(d.norm() > 1e-12 * scale))
    throw NumericalError("sensor pose is undefined: the target point coincides with the centre");
  return geometry::SensorPose::looking_along(center + d, -d);
}

geometry::SensorPose next_pose(const Policy& policy, const filter::KalmanState& state,
                               const geometry::ControlPointSet& points, rng::Engine* engine) {
  policy.validate();
  const std::size_t i = select_target(policy, state, engine);
  return pose_towards(points.position(state.point_ids[i]), points.centroid_of(state.point_ids), policy.alpha);
}

std::vector<PixelMatch> extract_measurements(const groundtruth::SensorFrame& frame,
                                             const std::vector<std::size_t>& observed, const Points& points_rot,
                                             const groundtruth::CameraModel& camera) {
  if (frame.width < 1 || frame.height < 1) throw InvalidArgument("extract_measurements: empty frame");
  if (frame.width != camera.width || frame.height != camera.height)
    throw InvalidArgument("extract_measurements: frame and camera dimensions differ");

  std::vector<std::size_t> hit_pixels;
  for (std::size_t p = 0; p < static_cast<std::size_t>(frame.width) * frame.height; ++p)
    if (frame.hit(p)) hit_pixels.push_back(p);
  Points hit_rot(static_cast<Eigen::Index>(hit_pixels.size()), 3);
  for (std::size_t i = 0; i < hit_pixels.size(); ++i)
    hit_rot.row(static_cast<Eigen::Index>(i)) =
        frame.pose.to_sensor(frame.pixel_positions.row(static_cast<Eigen::Index>(hit_pixels[i])).transpose()).transpose();
  const KdTree tree(hit_rot);

  std::vector<PixelMatch> out;
  out.reserve(observed.size());
  for (std::size_t idx : observed) {
    if (idx >= static_cast<std::size_t>(points_rot.rows()))
      throw InvalidArgument("extract_measurements: observed index out of range");
    const Vec3 p = points_rot.row(static_cast<Eigen::Index>(idx)).transpose();
    PixelMatch m;
    const auto proj = camera.project(p);
    const bool in_frame = proj && (*proj)[0] >= -0.5 && (*proj)[0] < frame.width - 0.5 && (*proj)[1] >= -0.5 &&
                          (*proj)[1] < frame.height - 0.5;
    if (in_frame && !hit_pixels.empty()) {
      const std::size_t j = *tree.nearest(p);
      m.pixel = hit_pixels[j];
    } else {
      m.out_of_frame = !in_frame;
      double u, v;
      if (proj) {
        u = (*proj)[0];
        v = (*proj)[1];
      } else {
        // Behind the camera: pick the border on the side the point lies.
        u = p.y() >= 0.0 ? frame.width : -1.0;
        v = p.z() >= 0.0 ? frame.height : -1.0;
      }
      const int col = static_cast<int>(std::clamp(std::lround(u), 0L, static_cast<long>(frame.width - 1)));
      const int row = static_cast<int>(std::clamp(std::lround(v), 0L, static_cast<long>(frame.height - 1)));
      m.pixel = frame.pixel_index(col, row);
    }
    m.value = frame.value(m.pixel);
    m.distance = frame.hit(m.pixel)
                     ? (frame.pose.to_sensor(frame.pixel_positions.row(static_cast<Eigen::Index>(m.pixel)).transpose()) - p).norm()
                     : kInf;
    out.push_back(m);
  }
  return out;
}

void LoopConfig::validate() const {
  model.validate();
  measurement.validate();
  policy.validate();
  camera.validate();
  if (!(prior_variance > 0.0)) throw InvalidArgument("prior variance must be positive");
  if (!(sensor_noise_std >= 0.0)) throw InvalidArgument("sensor noise std must be non-negative");
  if (!(slice_fraction > 0.0 && slice_fraction <= 0.5)) throw InvalidArgument("slice fraction must lie in (0, 0.5]");
  if (!(match_radius > 0.0)) throw InvalidArgument("match radius must be positive");
  if (steps_per_measurement < 1) throw InvalidArgument("steps per measurement must be >= 1");
  if (horizon < 0) throw InvalidArgument("horizon must be >= 0");
}

std::size_t LoopConfig::cycle_count() const {
  return static_cast<std::size_t>((horizon + steps_per_measurement - 1) / steps_per_measurement);
}

double truth_at(const groundtruth::GroundTruthField& truth, const Vec3& position, Step k) {
  const auto fine = truth.nearest_active(position, k);
  if (!fine) throw InvalidArgument("ground truth has no active point at step " + std::to_string(k));
  return truth.temperature(k, *fine);
}

PerceptionTrace run_loop(const Scenario& scenario, const LoopConfig& config, const StateObserver& observer) {
  config.validate();
  scenario.schedule.validate(scenario.points.size());
  const std::size_t cycles = config.cycle_count();
  PerceptionTrace trace;
  if (cycles == 0) return trace;
  if (scenario.meshes.empty()) throw InvalidArgument("scenario has no surface mesh");
  for (std::size_t c = 0; c < cycles; ++c) {
    const Step k = static_cast<Step>(c) * config.steps_per_measurement;
    if (!scenario.truth.has_step(k))
      throw InvalidArgument("ground truth does not cover measurement step " + std::to_string(k));
  }

  const dynamics::LtvThermalModel model(scenario.points, scenario.schedule, config.model);
  const double ambient = config.model.ambient_temp;
  const groundtruth::CameraModel& camera = config.camera;
  rng::Engine policy_engine(rng::derive_seed(config.seed, kPolicyStream));

  filter::KalmanState state;
  dynamics::SparseMatrix a;
  Eigen::MatrixXd w;
  bool operator_stale = true;

  auto apply_events = [&](Step k) {
    const dynamics::ActiveSets sets = dynamics::active_indices(scenario.schedule, k);
    if (!sets.retired.empty()) state = filter::retire(state, sets.retired);
    if (!sets.newly_activated.empty()) {
      const auto& layer = scenario.schedule.layers[scenario.schedule.layers_activated(k) - 1];
      state = filter::augment(state, sets.newly_activated, layer.deposition_temp - ambient, config.prior_variance);
    }
    if (!sets.retired.empty() || !sets.newly_activated.empty()) operator_stale = true;
  };

  apply_events(0);
  for (std::size_t c = 0; c < cycles; ++c) {
    const Step k = static_cast<Step>(c) * config.steps_per_measurement;
    CycleRecord rec;
    rec.cycle = c;
    rec.step = k;
    rec.state_dim = state.dim();

    if (!state.empty()) {
      const std::size_t target = select_target(config.policy, state, &policy_engine);
      rec.target = state.point_ids[target];
      rec.pose = pose_towards(scenario.points.position(rec.target), scenario.points.centroid_of(state.point_ids),
                              config.policy.alpha);

      const geometry::MeshRayCaster& mesh = scenario.meshes.at(scenario.schedule.layers_activated(k));
      Points ctrl(static_cast<Eigen::Index>(state.dim()), 3);
      for (std::size_t i = 0; i < state.dim(); ++i)
        ctrl.row(static_cast<Eigen::Index>(i)) = scenario.points.position(state.point_ids[i]).transpose();
      const Points ctrl_rot = geometry::frame_change(ctrl, rec.pose);
      const Points mesh_rot = geometry::frame_change(mesh.mesh(), rec.pose);

      std::vector<std::size_t> visible = geometry::partition_visible(mesh_rot, ctrl_rot, config.slice_fraction);
      std::erase_if(visible, [&](std::size_t i) { return scenario.points.interior(state.point_ids[i]); });

      groundtruth::SensorFrame frame = groundtruth::sample_image(scenario.truth, mesh, rec.pose, k, camera);
      frame = groundtruth::add_noise(frame, config.sensor_noise_std, rng::derive_seed(config.seed, kNoiseStreamBase + c));

      std::vector<std::size_t> rows;
      std::vector<double> values;
      if (!visible.empty()) {
        const std::vector<PixelMatch> matches = extract_measurements(frame, visible, ctrl_rot, camera);
        const KdTree ctrl_tree(ctrl);
        for (std::size_t j = 0; j < matches.size(); ++j) {
          if (matches[j].out_of_frame) ++rec.out_of_frame;
          if (!(matches[j].distance <= config.match_radius)) continue;
          // The pixel must lie in this point's Voronoi cell among the active
          // points, otherwise it reads a neighbour's temperature.
          const Vec3 surface = frame.pixel_positions.row(static_cast<Eigen::Index>(matches[j].pixel)).transpose();
          if (*ctrl_tree.nearest(surface) != visible[j]) continue;
          rows.push_back(visible[j]);
          values.push_back(matches[j].value);
        }
      }
      trace.out_of_frame += rec.out_of_frame;

      rec.avg_cov_prior = mean_diagonal(state);
      if (!rows.empty()) {
        rec.y = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        for (std::size_t r : rows) rec.observed.push_back(state.point_ids[r]);
        const geometry::ObservationMatrix cmat(rows, state.dim());
        state = filter::update(state, rec.y.array() - ambient, cmat, config.measurement);
      }
      rec.avg_cov = mean_diagonal(state);
      fill_errors(rec, state, scenario, ambient);
    }
    if (observer) observer(rec, state);
    trace.records.push_back(std::move(rec));

    for (Step s = 0; s < config.steps_per_measurement; ++s) {
      if (!state.empty()) {
        if (operator_stale) {
          a = model.step_matrix_for(state.point_ids);
          w = model.process_noise_for(state.dim());
          operator_stale = false;
        }
        state = filter::predict(state, a, w);
      } else {
        ++state.step;
      }
      ++trace.predict_steps;
      apply_events(state.step);
    }
  }
  return trace;
}

std::string trace_csv(const PerceptionTrace& trace) {
  std::string out = "cycle,step,pose_x,pose_y,pose_z,n_observed,max_err_ext,avg_err_ext,max_err_int,avg_err_int,avg_cov\n";
  char buf[512];
  for (const CycleRecord& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%zu,%lld,%.10g,%.10g,%.10g,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.cycle,
                  static_cast<long long>(r.step), r.pose.position.x(), r.pose.position.y(), r.pose.position.z(),
                  r.observed.size(), r.max_err_ext, r.avg_err_ext, r.max_err_int, r.avg_err_int, r.avg_cov);
    out += buf;
  }
  return out;
}

void write_trace_csv(const PerceptionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << trace_csv(trace);
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace activetherm::perception
