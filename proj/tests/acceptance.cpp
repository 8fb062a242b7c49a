// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed
// here; the process exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "activetherm/dynamics.hpp"
#include "activetherm/experiment.hpp"
#include "activetherm/filter.hpp"
#include "activetherm/geometry.hpp"
#include "activetherm/groundtruth.hpp"
#include "activetherm/raycast.hpp"
#include "support.hpp"

namespace at = activetherm;
namespace ex = activetherm::experiment;
using at::filter::KalmanState;
using at::geometry::ObservationMatrix;

namespace {

constexpr double kJosephTol = 1e-9;
constexpr double kBatchTol = 1e-8;
constexpr double kVisibilityAgreement = 0.95;
constexpr double kHeatTol = 1e-6;
constexpr double kFixedPointTol = 1e-9;
constexpr double kWindowVariation = 0.20;
constexpr double kPerfectErrorTol = 1e-6;
constexpr double kResidualFloor = 1e-3;  // mismatch residuals must stay clearly above rounding
constexpr double kWinFraction = 0.80;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

KalmanState make_state(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  KalmanState s;
  s.mean = mean;
  s.covariance = cov;
  s.point_ids.resize(static_cast<std::size_t>(mean.size()));
  std::iota(s.point_ids.begin(), s.point_ids.end(), at::PointId{0});
  return s;
}

Eigen::VectorXd randn(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(gen);
  return v;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Outcome ac1_filter() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> dim(1, 20);
  double worst = 0.0, min_eig = std::numeric_limits<double>::infinity(), asym = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = dim(gen);
    std::uniform_int_distribution<int> mdist(1, n);
    const int m = mdist(gen);
    std::vector<std::size_t> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), gen);
    rows.resize(static_cast<std::size_t>(m));
    const ObservationMatrix c = at::geometry::build_observation_matrix(rows, static_cast<std::size_t>(n));
    const KalmanState s = make_state(randn(gen, n), testsupport::random_spd(gen, n, 1e3));
    const auto out = at::filter::correct(s, randn(gen, m), c, at::filter::MeasurementNoise{0.7});
    const Eigen::MatrixXd shortform = (Eigen::MatrixXd::Identity(n, n) - out.gain * c.dense()) * s.covariance;
    worst = std::max(worst, (out.state.covariance - shortform).cwiseAbs().maxCoeff());
    asym = std::max(asym, (out.state.covariance - out.state.covariance.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.state.covariance, Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
  }
  const KalmanState scalar = make_state(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0));
  const auto ex1 = at::filter::correct(scalar, Eigen::VectorXd::Constant(1, 2.0), ObservationMatrix({0}, 1),
                                       at::filter::MeasurementNoise{1.0});
  const bool exact = ex1.gain(0, 0) == 0.5 && ex1.state.covariance(0, 0) == 0.5 && ex1.state.mean[0] == 1.0;
  const double secs = seconds_since(t0);
  return {worst <= kJosephTol && asym == 0.0 && min_eig >= 0.0 && exact && secs < 1.0,
          fmt("max |Joseph - short form| %.2e, min eigenvalue %.2e, %.3f s", worst, min_eig, secs) +
              (exact ? ", scalar example exact" : ", scalar example MISMATCH")};
}

Outcome ac2_batch() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(77);
  const int n = 4, steps = 10;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + 0.1 * Eigen::MatrixXd::Random(n, n);
  const Eigen::MatrixXd w = 0.2 * testsupport::random_spd(gen, n, 3.0);
  const double v = 0.5;
  const Eigen::MatrixXd p0 = testsupport::random_spd(gen, n, 5.0);
  const Eigen::VectorXd m0 = randn(gen, n);
  std::vector<Eigen::VectorXd> ys;
  for (int k = 0; k < steps; ++k) ys.push_back(randn(gen, n));

  KalmanState s = make_state(m0, p0);
  const ObservationMatrix c({0, 1, 2, 3}, n);
  for (int k = 0; k < steps; ++k) {
    if (k > 0) s = at::filter::predict(s, a, w);
    s = at::filter::update(s, ys[static_cast<std::size_t>(k)], c, at::filter::MeasurementNoise{v});
  }

  // Information-form normal equations over the whole trajectory.
  const int dim = n * steps;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  const Eigen::MatrixXd p0i = p0.inverse(), wi = w.inverse();
  info.topLeftCorner(n, n) += p0i;
  rhs.head(n) += p0i * m0;
  for (int k = 0; k + 1 < steps; ++k) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, dim);
    j.block(0, n * k, n, n) = -a;
    j.block(0, n * (k + 1), n, n) = Eigen::MatrixXd::Identity(n, n);
    info += j.transpose() * wi * j;
  }
  for (int k = 0; k < steps; ++k) {
    info.block(n * k, n * k, n, n) += Eigen::MatrixXd::Identity(n, n) / v;
    rhs.segment(n * k, n) += ys[static_cast<std::size_t>(k)] / v;
  }
  const Eigen::VectorXd xs = info.ldlt().solve(rhs);
  const double err = (s.mean - xs.tail(n)).cwiseAbs().maxCoeff();
  const double secs = seconds_since(t0);
  return {err <= kBatchTol && secs < 1.0, fmt("max |x_KF - x_LS| %.2e, %.3f s", err, secs)};
}

Outcome ac3_geometry() {
  const auto t0 = Clock::now();
  const at::geometry::TriMesh sphere = testsupport::icosphere(3);
  const at::geometry::MeshRayCaster caster(sphere);

  // 100 control vertices spread by a Fibonacci lattice.
  std::vector<std::size_t> chosen;
  std::vector<bool> used(static_cast<std::size_t>(sphere.vertices.rows()), false);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < 100; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / 100.0, r = std::sqrt(1.0 - z * z);
    const at::Vec3 target(r * std::cos(golden * i), r * std::sin(golden * i), z);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index v = 0; v < sphere.vertices.rows(); ++v) {
      const double d = (sphere.vertices.row(v).transpose() - target).squaredNorm();
      if (!used[static_cast<std::size_t>(v)] && d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(v);
      }
    }
    used[best] = true;
    chosen.push_back(best);
  }
  const auto cps = at::geometry::ControlPointSet::from_vertices(sphere, chosen);

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> dist(20.0, 50.0);
  double worst = 1.0, mean = 0.0;
  for (int pose_i = 0; pose_i < 50; ++pose_i) {
    const at::Vec3 pos = dist(gen) * testsupport::random_unit(gen);
    const auto pose = at::geometry::SensorPose::looking_along(pos, -pos);
    const at::Points mesh_rot = at::geometry::frame_change(sphere, pose);
    const at::Points ctrl_rot = at::geometry::frame_change(cps.positions(), pose);
    const auto observed = at::geometry::partition_visible(mesh_rot, ctrl_rot, 0.1);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      const bool visible = !caster.segment_blocked(pose.position, cps.position(i));
      const bool in_p = std::binary_search(observed.begin(), observed.end(), i);
      agree += visible == in_p ? 1 : 0;
    }
    const double frac = static_cast<double>(agree) / static_cast<double>(cps.size());
    worst = std::min(worst, frac);
    mean += frac / 50.0;
  }
  const double secs = seconds_since(t0);
  return {worst >= kVisibilityAgreement && secs < 10.0,
          fmt("worst pose agreement %.3f, mean %.3f (50 poses at distance 20..50), %.2f s", worst, mean, secs)};
}

Outcome ac4_conservation() {
  std::mt19937_64 gen(9);
  const at::Points pts = testsupport::random_points(gen, 200, 20.0);
  at::groundtruth::FineSimulationSpec spec;
  spec.positions = pts;
  at::dynamics::Layer layer;
  for (std::size_t i = 0; i < 200; ++i) layer.point_ids.push_back(i);
  spec.deposition.layers.push_back(layer);
  spec.deposition.active_window = 1;
  std::uniform_real_distribution<double> temp(100.0, 600.0);
  for (int i = 0; i < 200; ++i) spec.initial_temps.push_back(temp(gen));
  spec.params.boundary_loss = 0.0;
  spec.params.diffusivity = 0.05;
  spec.params.horizon = 1000;
  spec.params.record_stride = 1000;
  const auto field = at::groundtruth::simulate_fine(spec);
  const double amb = field.ambient_temp();
  const double h0 = (field.temps().row(0).array() - amb).sum();
  const double h1 = (field.temps().row(1).array() - amb).sum();
  const double rel = std::abs(h1 - h0) / std::abs(h0);
  const double spread = (field.temps().row(0) - field.temps().row(1)).cwiseAbs().maxCoeff();

  // Runtime model, default part, zero loss: A 1 = 1 at every layer count.
  ex::ExperimentConfig cfg;
  cfg.model.boundary_loss = 0.0;
  const ex::PartModel part = ex::build_part(cfg);
  const at::dynamics::LtvThermalModel model(part.points, part.schedule, cfg.model);
  double fixed = 0.0;
  for (const auto& l : part.schedule.layers) {
    const auto a = model.step_matrix(l.activation_step);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(a.cols());
    fixed = std::max(fixed, (a * ones - ones).cwiseAbs().maxCoeff());
  }
  return {rel <= kHeatTol && fixed <= kFixedPointTol && spread > 1.0,
          fmt("relative heat drift %.2e over 1000 steps (max point change %.1f), max |A1 - 1| %.2e", rel, spread,
              fixed)};
}

struct DefaultRun {
  ex::ExperimentConfig config;
  ex::RunResult result;
  double seconds = 0.0;
  std::size_t max_state_dim = 0;
};

DefaultRun run_default(const ex::ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  DefaultRun d;
  d.config = cfg;
  const auto scenario = ex::build_scenario(cfg);
  d.result = ex::run(cfg, scenario);
  d.seconds = seconds_since(t0);
  for (const auto& r : d.result.trace.records) d.max_state_dim = std::max(d.max_state_dim, r.state_dim);
  return d;
}

Outcome ac5_cadence(const DefaultRun& d) {
  const auto& recs = d.result.trace.records;
  bool spacing = !recs.empty() && recs.front().step == 0;
  for (std::size_t c = 1; c < recs.size(); ++c) spacing = spacing && recs[c].step - recs[c - 1].step == 40;
  const double per_cycle = recs.empty() ? 0.0 : static_cast<double>(d.result.trace.predict_steps) / recs.size();
  const double interval = d.config.model.dt * d.config.steps_per_measurement;
  const bool ok = spacing && per_cycle == 40.0 && d.config.model.dt == 0.15 && std::abs(interval - 6.0) < 1e-12;
  return {ok, fmt("%.0f prediction steps per cycle over %.0f cycles, dt %.2f s, measurement every %.2f s", per_cycle,
                  static_cast<double>(recs.size()), d.config.model.dt, interval)};
}

Outcome ac6_steady_state(const DefaultRun& d) {
  const auto& recs = d.result.trace.records;
  // Initialization ends once the first active_window layers are down.
  const auto& layers = ex::build_part(d.config).schedule.layers;
  const at::Step init_end = layers.at(d.config.active_window - 1).activation_step + d.config.part.rect.layer_interval_steps;
  std::size_t first = 0;
  while (first < recs.size() && recs[first].step < init_end) ++first;
  std::vector<double> windows;
  for (std::size_t c = first; c + 10 <= recs.size(); c += 10) {
    double m = 0.0;
    for (std::size_t j = c; j < c + 10; ++j) m += recs[j].avg_cov / 10.0;
    windows.push_back(m);
  }
  double variation = 0.0;
  for (std::size_t w = 1; w < windows.size(); ++w)
    variation = std::max(variation, std::abs(windows[w] - windows[w - 1]) / windows[w - 1]);
  double min_residual = std::numeric_limits<double>::infinity();
  for (std::size_t c = first; c < recs.size(); ++c) min_residual = std::min(min_residual, recs[c].max_err_ext);

  ex::ExperimentConfig perfect = d.config;
  perfect.sensor_noise_std = 0.0;
  perfect.groundtruth.mismatch_factor = 1.0;
  perfect.groundtruth.refinement = 1;
  perfect.groundtruth.substeps = 1;
  perfect.groundtruth.boundary_loss = perfect.model.boundary_loss;
  perfect.groundtruth.neighbors = perfect.model.neighbors;
  perfect.groundtruth.respect_active_window = true;
  const DefaultRun p = run_default(perfect);
  double perfect_err = 0.0;
  for (const auto& r : p.result.trace.records)
    perfect_err = std::max({perfect_err, r.max_err_ext, r.max_err_int});

  const bool ok = windows.size() >= 2 && variation < kWindowVariation && min_residual > kResidualFloor &&
                  perfect_err < kPerfectErrorTol && d.seconds < 60.0 && d.max_state_dim <= 500;
  std::ostringstream s;
  s << fmt("post-init window variation %.1f%% over %.0f windows from cycle ", 100.0 * variation,
           static_cast<double>(windows.size()))
    << first << fmt(", min residual max_err_ext %.3g, matched-model max error %.2e, run %.1f s", min_residual,
                    perfect_err, d.seconds)
    << ", max state dim " << d.max_state_dim;
  return {ok, s.str()};
}

Outcome ac7_policy() {
  const auto t0 = Clock::now();
  ex::ExperimentConfig cfg;
  cfg.compare.seeds = 20;
  cfg.compare.cycles = 50;
  cfg.compare.policies = {at::perception::PolicyKind::MaxUncertainty, at::perception::PolicyKind::UniformRandom};
  const ex::CompareReport rep = ex::compare_policies(cfg);
  const double wins = rep.win_fraction(0, 1);
  const double secs = seconds_since(t0);
  return {wins >= kWinFraction && secs < 300.0,
          fmt("MaxUncertainty below UniformRandom in %.0f%% of 20 paired seeds, %.1f s", 100.0 * wins, secs)};
}

Outcome ac8_determinism() {
  ex::ExperimentConfig cfg;
  cfg.horizon = 30 * cfg.steps_per_measurement;
  const auto scenario = ex::build_scenario(cfg);
  const auto tmp = std::filesystem::temp_directory_path() / "activetherm_acceptance";
  std::filesystem::remove_all(tmp);
  bool same = true;
  std::string detail;
  for (auto kind : {at::perception::PolicyKind::MaxUncertainty, at::perception::PolicyKind::UniformRandom}) {
    cfg.policy.kind = kind;
    std::string bytes[2];
    for (int rep = 0; rep < 2; ++rep) {
      const auto dir = tmp / (std::string(at::perception::to_string(kind)) + std::to_string(rep));
      ex::write_run_outputs(cfg, ex::run(cfg, rep == 0 ? scenario : ex::build_scenario(cfg)), dir);
      std::ifstream in(dir / "trace.csv", std::ios::binary);
      bytes[rep].assign(std::istreambuf_iterator<char>(in), {});
    }
    same = same && !bytes[0].empty() && bytes[0] == bytes[1];
    detail += std::string(at::perception::to_string(kind)) + (bytes[0] == bytes[1] ? " identical" : " DIFFERENT") +
              " (" + std::to_string(bytes[0].size()) + " bytes); ";
  }
  std::filesystem::remove_all(tmp);
  detail += "ground truth rebuilt for the second run";
  return {same, detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("AC%d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };

  report(1, "filter correctness", ac1_filter);
  report(2, "batch equivalence", ac2_batch);
  report(3, "geometry oracle agreement", ac3_geometry);
  report(4, "conservation", ac4_conservation);
  DefaultRun d;
  try {
    d = run_default(ex::ExperimentConfig{});
  } catch (const std::exception& e) {
    std::printf("default run failed: %s\n", e.what());
  }
  report(5, "cadence reproduction", [&] { return ac5_cadence(d); });
  report(6, "steady covariance and residual errors", [&] { return ac6_steady_state(d); });
  report(7, "policy value", ac7_policy);
  report(8, "determinism", ac8_determinism);
  std::printf("%d of 8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
