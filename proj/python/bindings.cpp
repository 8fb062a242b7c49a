#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "activetherm/dynamics.hpp"
#include "activetherm/errors.hpp"
#include "activetherm/experiment.hpp"
#include "activetherm/filter.hpp"
#include "activetherm/geometry.hpp"
#include "activetherm/groundtruth.hpp"
#include "activetherm/perception.hpp"

namespace py = pybind11;
namespace at = activetherm;
namespace ex = activetherm::experiment;

namespace {

ex::ExperimentConfig parse_config(const std::string& text) {
  return ex::ExperimentConfig::from_json(nlohmann::json::parse(text));
}

at::geometry::TriMesh make_mesh(const at::Points& vertices, const std::vector<at::geometry::Face>& faces) {
  at::geometry::TriMesh mesh;
  mesh.vertices = vertices;
  mesh.faces = faces;
  mesh.validate();
  return mesh;
}

py::dict trace_dict(const at::perception::PerceptionTrace& trace) {
  const auto n = static_cast<Eigen::Index>(trace.records.size());
  Eigen::VectorXd step(n), avg_cov(n), avg_cov_prior(n), max_ext(n), avg_ext(n), max_int(n), avg_int(n);
  Eigen::VectorXi observed(n), dim(n);
  Eigen::MatrixXd poses(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = trace.records[static_cast<std::size_t>(i)];
    step[i] = static_cast<double>(r.step);
    avg_cov[i] = r.avg_cov;
    avg_cov_prior[i] = r.avg_cov_prior;
    max_ext[i] = r.max_err_ext;
    avg_ext[i] = r.avg_err_ext;
    max_int[i] = r.max_err_int;
    avg_int[i] = r.avg_err_int;
    observed[i] = static_cast<int>(r.observed.size());
    dim[i] = static_cast<int>(r.state_dim);
    poses.row(i) = r.pose.position.transpose();
  }
  py::dict d;
  d["step"] = step;
  d["pose"] = poses;
  d["n_observed"] = observed;
  d["state_dim"] = dim;
  d["max_err_ext"] = max_ext;
  d["avg_err_ext"] = avg_ext;
  d["max_err_int"] = max_int;
  d["avg_err_int"] = avg_int;
  d["avg_cov_prior"] = avg_cov_prior;
  d["avg_cov"] = avg_cov;
  d["predict_steps"] = trace.predict_steps;
  d["csv"] = at::perception::trace_csv(trace);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kalman-filter active perception of a deposited part's temperature field.";

  py::register_exception<at::InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<at::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<at::IoError>(m, "IoError", PyExc_OSError);

  // Filter. States travel as (mean, covariance) pairs.
  m.def(
      "predict",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::MatrixXd& a, const Eigen::MatrixXd& w) {
        at::filter::KalmanState s;
        s.mean = mean;
        s.covariance = cov;
        s.point_ids.resize(static_cast<std::size_t>(mean.size()));
        const auto next = at::filter::predict(s, a, w);
        return py::make_tuple(next.mean, next.covariance);
      },
      py::arg("mean"), py::arg("cov"), py::arg("a"), py::arg("w"));
  m.def(
      "update",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& y,
         std::vector<std::size_t> rows, double variance) {
        at::filter::KalmanState s;
        s.mean = mean;
        s.covariance = cov;
        s.point_ids.resize(static_cast<std::size_t>(mean.size()));
        const auto c = at::geometry::build_observation_matrix(std::move(rows), s.dim());
        const auto out = at::filter::correct(s, y, c, at::filter::MeasurementNoise{variance});
        return py::make_tuple(out.state.mean, out.state.covariance, out.gain);
      },
      py::arg("mean"), py::arg("cov"), py::arg("y"), py::arg("rows"), py::arg("variance"),
      "Joseph-form update observing state entries `rows` (sorted ascending). Returns (mean, cov, gain).");

  // Geometry.
  m.def("rotation_from_orientation", &at::geometry::rotation_from_orientation, py::arg("orientation"));
  m.def(
      "partition_visible",
      [](const at::Points& mesh_rot, const at::Points& control_rot, double slice_fraction) {
        return at::geometry::partition_visible(mesh_rot, control_rot, slice_fraction);
      },
      py::arg("mesh_rot"), py::arg("control_rot"), py::arg("slice_fraction") = 0.1);
  m.def(
      "select_control_points",
      [](const at::Points& vertices, const std::vector<at::geometry::Face>& faces, std::array<int, 3> grid) {
        return at::geometry::select_control_points(make_mesh(vertices, faces), {grid[0], grid[1], grid[2]})
            .vertex_indices();
      },
      py::arg("vertices"), py::arg("faces"), py::arg("grid"));
  m.def(
      "pose_towards",
      [](const at::Vec3& target, const at::Vec3& center, double alpha) {
        const auto p = at::perception::pose_towards(target, center, alpha);
        return py::make_tuple(p.position, p.orientation, p.rotation);
      },
      py::arg("target"), py::arg("center"), py::arg("alpha") = 2.0, "Returns (position, orientation, rotation).");

  // Dynamics.
  m.def(
      "build_laplacian",
      [](const at::Points& points, std::size_t k) { return Eigen::MatrixXd(at::dynamics::build_laplacian(points, k)); },
      py::arg("points"), py::arg("k"));
  m.def(
      "diffusion_step",
      [](const at::Points& points, std::size_t k, double diffusivity, double dt, double boundary_loss) {
        return Eigen::MatrixXd(at::dynamics::diffusion_step(points, k, diffusivity, dt, boundary_loss));
      },
      py::arg("points"), py::arg("k"), py::arg("diffusivity"), py::arg("dt"), py::arg("boundary_loss"));

  // Experiments. Configurations are JSON text.
  m.def("default_config", [] { return ex::ExperimentConfig{}.to_json().dump(); });
  m.def(
      "normalize_config", [](const std::string& text) { return parse_config(text).to_json().dump(); },
      py::arg("config"), "Validates a configuration and fills in every default.");
  m.def(
      "gen_schedule", [](const std::string& text) { return ex::build_part(parse_config(text)).schedule.to_json().dump(); },
      py::arg("config"));
  m.def(
      "run",
      [](const std::string& text) {
        const ex::ExperimentConfig cfg = parse_config(text);
        ex::RunResult result;
        {
          py::gil_scoped_release release;
          result = ex::run(cfg, ex::build_scenario(cfg));
        }
        py::dict d = trace_dict(result.trace);
        d["summary"] = ex::summary_json(cfg, result).dump();
        return d;
      },
      py::arg("config"), "Runs one experiment in memory; returns per-cycle arrays plus the summary JSON text.");
  m.def(
      "compare_policies",
      [](const std::string& text) {
        const ex::ExperimentConfig cfg = parse_config(text);
        ex::CompareReport report;
        {
          py::gil_scoped_release release;
          report = ex::compare_policies(cfg);
        }
        return report.to_json().dump();
      },
      py::arg("config"));
}
