#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "activetherm/geometry.hpp"
#include "activetherm/types.hpp"

namespace activetherm::filter {

// Gaussian belief over the currently active control points. Entry i of the
// mean and row/column i of the covariance belong to point_ids[i].
struct KalmanState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::vector<PointId> point_ids;
  Step step = 0;

  std::size_t dim() const { return point_ids.size(); }
  bool empty() const { return point_ids.empty(); }

  // Position of `id` in point_ids, or -1.
  Eigen::Index index_of(PointId id) const;

  // Dimensions agree, covariance symmetric within 1e-9 and its eigenvalues are
  // >= -1e-8.
  void validate() const;
};

// V_k = variance_per_point * I.
struct MeasurementNoise {
  double variance_per_point = 4.0;

  void validate() const;
};

// P_{k|k-1} = A P A^T + W, x_{k|k-1} = A x; the covariance is re-symmetrized.
KalmanState predict(const KalmanState& state, const Eigen::SparseMatrix<double>& a, const Eigen::MatrixXd& w);
KalmanState predict(const KalmanState& state, const Eigen::MatrixXd& a, const Eigen::MatrixXd& w);

struct Correction {
  KalmanState state;
  Eigen::MatrixXd gain;        // K_k, dim x m
  Eigen::VectorXd innovation;  // y_k - C_k x_{k|k-1}
};

// Measurement update with Joseph-form covariance. The innovation covariance
// V + C P C^T is factorized by Cholesky; a singular or indefinite factor is
// reported as NumericalError.
Correction correct(const KalmanState& state, const Eigen::VectorXd& y, const geometry::ObservationMatrix& c,
                   const MeasurementNoise& v);
KalmanState update(const KalmanState& state, const Eigen::VectorXd& y, const geometry::ObservationMatrix& c,
                   const MeasurementNoise& v);

// Appends new_ids (ascending) with the given prior; zero cross-covariance.
KalmanState augment(const KalmanState& state, std::span<const PointId> new_ids, double prior_mean,
                    double prior_var);

// Marginalizes out the listed ids; remaining order is preserved.
KalmanState retire(const KalmanState& state, std::span<const PointId> ids);

// CSV `point_id,mean,variance` (variance = diag P). `mean_offset` is added to
// every mean, e.g. to report absolute temperatures.
void write_state_csv(const KalmanState& state, const std::filesystem::path& path, double mean_offset = 0.0);

}  // namespace activetherm::filter
