#include <doctest.h>

#include <random>
#include <set>

#include <Eigen/Eigenvalues>

#include "activetherm/dynamics.hpp"
#include "activetherm/errors.hpp"
#include "support.hpp"

using namespace activetherm;
using namespace activetherm::dynamics;

namespace {

// Dense Laplacian built directly from an all-pairs distance table.
Eigen::MatrixXd brute_laplacian(const Points& p, std::size_t k) {
  const Eigen::Index n = p.rows();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d.emplace_back((p.row(i) - p.row(j)).squaredNorm(), j);
    std::sort(d.begin(), d.end());
    for (std::size_t m = 0; m < k; ++m) {
      w(i, d[m].second) = 1.0 / d[m].first;
      w(d[m].second, i) = 1.0 / d[m].first;
    }
  }
  Eigen::MatrixXd l = -w;
  for (Eigen::Index i = 0; i < n; ++i) l(i, i) = w.row(i).sum();
  return l;
}

geometry::ControlPointSet line_points(int n, double spacing) {
  geometry::ControlPointSet set;
  for (int i = 0; i < n; ++i) set.add_extra_point(Vec3(spacing * i, 0, 0), false);
  return set;
}

}  // namespace

TEST_CASE("laplacian") {
  SUBCASE("two points at unit distance") {
    Points p(2, 3);
    p << 0, 0, 0, 1, 0, 0;
    const Eigen::MatrixXd l = Eigen::MatrixXd(build_laplacian(p, 1));
    Eigen::MatrixXd expected(2, 2);
    expected << 1, -1, -1, 1;
    CHECK(l == expected);
  }
  SUBCASE("random points against the dense construction") {
    std::mt19937_64 gen(2);
    const Points p = testsupport::random_points(gen, 40, 3.0);
    for (std::size_t k : {1u, 3u, 6u}) {
      const Eigen::MatrixXd l = Eigen::MatrixXd(build_laplacian(p, k));
      CHECK((l - brute_laplacian(p, k)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((l - l.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK((l * Eigen::VectorXd::Ones(40)).cwiseAbs().maxCoeff() < 1e-12 * l.cwiseAbs().maxCoeff());
    }
  }
  SUBCASE("positive semidefinite") {
    std::mt19937_64 gen(4);
    const Points p = testsupport::random_points(gen, 10);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(build_laplacian(p, 3)));
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
  SUBCASE("errors") {
    Points p(3, 3);
    p << 0, 0, 0, 1, 0, 0, 1, 0, 0;
    CHECK_THROWS_AS(build_laplacian(p, 1), InvalidArgument);
    CHECK_THROWS_AS(build_laplacian(p.topRows(1), 1), InvalidArgument);
    CHECK_THROWS_AS(build_laplacian(p.topRows(2), 2), InvalidArgument);
    CHECK_THROWS_AS(build_laplacian(p.topRows(2), 0), InvalidArgument);
  }
}

TEST_CASE("step operator") {
  Points two(2, 3);
  two << 0, 0, 0, 1, 0, 0;
  SUBCASE("hand-evaluated two point operator") {
    const Eigen::MatrixXd a = Eigen::MatrixXd(diffusion_step(two, 1, 1.0, 0.1, 0.0));
    Eigen::MatrixXd expected(2, 2);
    expected << 0.9, 0.1, 0.1, 0.9;
    CHECK((a - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("zero diffusivity and loss give the identity") {
    const Eigen::MatrixXd a = Eigen::MatrixXd(diffusion_step(two, 1, 0.0, 0.15, 0.0));
    CHECK(a == Eigen::MatrixXd::Identity(2, 2));
  }
  SUBCASE("uniform temperature is a fixed point without loss; no amplification") {
    std::mt19937_64 gen(8);
    const Points p = testsupport::random_points(gen, 60, 10.0);
    const SparseMatrix a = diffusion_step(p, 6, 0.5, 0.01, 0.0);
    CHECK((a * Eigen::VectorXd::Ones(60) - Eigen::VectorXd::Ones(60)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(infinity_norm(a) <= 1.0 + 1e-12);
    const SparseMatrix lossy = diffusion_step(p, 6, 0.5, 0.01, 0.3);
    CHECK(infinity_norm(lossy) <= 1.0);
  }
  SUBCASE("stability violation") {
    CHECK_THROWS_AS(diffusion_step(two, 1, 10.0, 0.1, 0.0), NumericalError);
  }
}

TEST_CASE("schedule and active sets") {
  DepositionSchedule s;
  s.active_window = 4;
  for (int l = 0; l < 6; ++l) {
    Layer layer;
    layer.activation_step = 10 + 5 * l;
    for (int i = 0; i < 3; ++i) layer.point_ids.push_back(static_cast<PointId>(3 * l + i));
    s.layers.push_back(layer);
  }
  s.validate(18);

  const ActiveSets before = active_indices(s, 9);
  CHECK(before.active.empty());
  CHECK(before.newly_activated.empty());
  CHECK(before.retired.empty());

  // Layer index 4 (the fifth) activates at step 30 and pushes layer 0 out.
  const ActiveSets fifth = active_indices(s, 30);
  CHECK(fifth.newly_activated == std::vector<PointId>{12, 13, 14});
  CHECK(fifth.retired == std::vector<PointId>{0, 1, 2});
  CHECK(fifth.active.size() == 12);

  std::set<PointId> seen_active;
  for (Step k = 0; k < 50; ++k) {
    const ActiveSets a = active_indices(s, k);
    const std::set<PointId> act(a.active.begin(), a.active.end());
    for (PointId id : a.retired) CHECK_FALSE(act.contains(id));
    for (PointId id : a.newly_activated) CHECK(act.contains(id));
    if (k > 10 && (k - 10) % 5 != 0) {
      CHECK(a.active == active_indices(s, k - 1).active);
    }
    seen_active.insert(act.begin(), act.end());
    std::size_t retired_total = 0;
    for (std::size_t l = 0; l < s.layers_activated(k); ++l)
      if (l + s.active_window < s.layers_activated(k)) retired_total += s.layers[l].point_ids.size();
    CHECK(retired_total + a.active.size() == 3 * s.layers_activated(k));
  }
  CHECK(seen_active.size() == 18);

  SUBCASE("json round trip") {
    CHECK(DepositionSchedule::from_json(s.to_json()) == s);
  }
  SUBCASE("validation") {
    DepositionSchedule bad = s;
    bad.layers[2].activation_step = bad.layers[1].activation_step;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = s;
    bad.layers[2].point_ids.push_back(0);
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS(s.validate(10), InvalidArgument);
  }
}

TEST_CASE("LTV model") {
  DepositionSchedule s;
  s.active_window = 2;
  s.layers = {Layer{{0, 1, 2}, 0, 500.0}, Layer{{3, 4, 5}, 10, 500.0}, Layer{{6, 7, 8}, 20, 500.0}};
  ThermalParams prm;
  prm.neighbors = 2;
  prm.boundary_loss = 0.0;
  const LtvThermalModel model(line_points(9, 1.0), s, prm);

  CHECK(model.step_matrix(0).rows() == 3);
  CHECK(model.step_matrix(15).rows() == 6);
  const SparseMatrix late = model.step_matrix(25);
  CHECK(late.rows() == 6);
  CHECK((late * Eigen::VectorXd::Ones(6) - Eigen::VectorXd::Ones(6)).cwiseAbs().maxCoeff() < 1e-9);

  ThermalParams noisy = prm;
  noisy.process_noise_density = 4.0;
  const LtvThermalModel m2(line_points(9, 1.0), s, noisy);
  CHECK((m2.process_noise(0) - 0.6 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
  ThermalParams quiet = prm;
  quiet.process_noise_density = 0.0;
  CHECK(LtvThermalModel(line_points(9, 1.0), s, quiet).process_noise(15).isZero(0.0));

  ThermalParams fast = prm;
  fast.diffusivity = 100.0;
  CHECK_THROWS_AS(LtvThermalModel(line_points(9, 1.0), s, fast), NumericalError);
  ThermalParams bad = prm;
  bad.dt = 0.0;
  CHECK_THROWS_AS(LtvThermalModel(line_points(9, 1.0), s, bad), InvalidArgument);
}
