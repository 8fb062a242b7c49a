#include "activetherm/filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "activetherm/errors.hpp"

namespace activetherm::filter {

namespace {

void symmetrize(Eigen::MatrixXd& p) {
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const double v = 0.5 * (p(i, j) + p(j, i));
      p(i, j) = v;
      p(j, i) = v;
    }
  }
}

void check_predict_dims(const KalmanState& state, Eigen::Index a_rows, Eigen::Index a_cols, const Eigen::MatrixXd& w) {
  const auto n = static_cast<Eigen::Index>(state.dim());
  if (a_rows != n || a_cols != n || w.rows() != n || w.cols() != n) {
    std::ostringstream msg;
    msg << "predict: dimension mismatch (state " << n << ", A " << a_rows << "x" << a_cols << ", W " << w.rows()
        << "x" << w.cols() << ")";
    throw InvalidArgument(msg.str());
  }
  if (state.mean.size() != n || state.covariance.rows() != n || state.covariance.cols() != n)
    throw InvalidArgument("predict: inconsistent state dimensions");
}

}  // namespace

Eigen::Index KalmanState::index_of(PointId id) const {
  const auto it = std::find(point_ids.begin(), point_ids.end(), id);
  return it == point_ids.end() ? -1 : static_cast<Eigen::Index>(it - point_ids.begin());
}

void KalmanState::validate() const {
  const auto n = static_cast<Eigen::Index>(dim());
  if (mean.size() != n || covariance.rows() != n || covariance.cols() != n)
    throw InvalidArgument("Kalman state dimensions disagree");
  if (n == 0) return;
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw InvalidArgument("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8) throw InvalidArgument("covariance is not positive semidefinite");
}

void MeasurementNoise::validate() const {
  if (!(variance_per_point > 0.0) || !std::isfinite(variance_per_point))
    throw InvalidArgument("measurement noise variance must be positive");
}

KalmanState predict(const KalmanState& state, const Eigen::SparseMatrix<double>& a, const Eigen::MatrixXd& w) {
  check_predict_dims(state, a.rows(), a.cols(), w);
  KalmanState next;
  next.point_ids = state.point_ids;
  next.step = state.step + 1;
  next.mean = a * state.mean;
  // Dense-times-sparse products are the fast direction in Eigen. With P
  // symmetric, (P A^T)^T = A P, so A P A^T = (P A^T)^T A^T.
  const Eigen::SparseMatrix<double> at = a.transpose();
  const Eigen::MatrixXd pat = state.covariance * at;
  const Eigen::MatrixXd ap = pat.transpose();
  next.covariance.noalias() = ap * at;
  next.covariance += w;
  symmetrize(next.covariance);
  return next;
}

KalmanState predict(const KalmanState& state, const Eigen::MatrixXd& a, const Eigen::MatrixXd& w) {
  check_predict_dims(state, a.rows(), a.cols(), w);
  KalmanState next;
  next.point_ids = state.point_ids;
  next.step = state.step + 1;
  next.mean = a * state.mean;
  next.covariance = a * state.covariance * a.transpose() + w;
  symmetrize(next.covariance);
  return next;
}

Correction correct(const KalmanState& state, const Eigen::VectorXd& y, const geometry::ObservationMatrix& c,
                   const MeasurementNoise& v) {
  v.validate();
  const auto n = static_cast<Eigen::Index>(state.dim());
  const auto m = static_cast<Eigen::Index>(c.row_count());
  if (static_cast<Eigen::Index>(c.state_dim()) != n) throw InvalidArgument("update: observation matrix does not match state");
  if (y.size() != m) throw InvalidArgument("update: measurement length differs from observation row count");

  Correction out;
  out.state = state;
  out.gain = Eigen::MatrixXd::Zero(n, m);
  out.innovation = Eigen::VectorXd::Zero(m);
  if (m == 0) return out;

  const auto& rows = c.rows();
  const Eigen::MatrixXd& p = state.covariance;

  // C P (m x n) and C P C^T (m x m) by row selection.
  Eigen::MatrixXd cp(m, n);
  for (Eigen::Index r = 0; r < m; ++r) cp.row(r) = p.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]));
  Eigen::MatrixXd s(m, m);
  for (Eigen::Index r = 0; r < m; ++r) s.col(r) = cp.col(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]));
  s.diagonal().array() += v.variance_per_point;

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  const Eigen::VectorXd pivots = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !(pivots.minCoeff() > 1e-14 * pivots.maxCoeff()) || !(ldlt.rcond() > 1e-14))
    throw NumericalError("innovation covariance is numerically singular");

  // K = P C^T S^-1, i.e. S K^T = C P.
  out.gain = ldlt.solve(cp).transpose();
  out.innovation = y - c.apply(state.mean);
  out.state.mean = state.mean + out.gain * out.innovation;

  // Joseph form (I - K C) P (I - K C)^T + K V K^T, expanded with C as a row
  // selection: M = P - K (C P), then M - (M C^T) K^T + v K K^T.
  const Eigen::MatrixXd mjoseph = p - out.gain * cp;
  Eigen::MatrixXd mct(n, m);
  for (Eigen::Index r = 0; r < m; ++r) mct.col(r) = mjoseph.col(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]));
  out.state.covariance = mjoseph - mct * out.gain.transpose() +
                         v.variance_per_point * (out.gain * out.gain.transpose());
  symmetrize(out.state.covariance);
  return out;
}

KalmanState update(const KalmanState& state, const Eigen::VectorXd& y, const geometry::ObservationMatrix& c,
                   const MeasurementNoise& v) {
  return correct(state, y, c, v).state;
}

KalmanState augment(const KalmanState& state, std::span<const PointId> new_ids, double prior_mean, double prior_var) {
  if (!(prior_var >= 0.0)) throw InvalidArgument("prior variance must be non-negative");
  std::vector<PointId> sorted(new_ids.begin(), new_ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidArgument("augment: duplicate id in new ids");
  std::vector<PointId> existing = state.point_ids;
  std::sort(existing.begin(), existing.end());
  for (PointId id : sorted)
    if (std::binary_search(existing.begin(), existing.end(), id))
      throw InvalidArgument("augment: id " + std::to_string(id) + " already in state");

  const auto n = static_cast<Eigen::Index>(state.dim());
  const auto k = static_cast<Eigen::Index>(sorted.size());
  KalmanState next;
  next.step = state.step;
  next.point_ids = state.point_ids;
  next.point_ids.insert(next.point_ids.end(), sorted.begin(), sorted.end());
  next.mean.resize(n + k);
  next.mean.head(n) = state.mean;
  next.mean.tail(k).setConstant(prior_mean);
  next.covariance = Eigen::MatrixXd::Zero(n + k, n + k);
  next.covariance.topLeftCorner(n, n) = state.covariance;
  next.covariance.bottomRightCorner(k, k).diagonal().setConstant(prior_var);
  return next;
}

KalmanState retire(const KalmanState& state, std::span<const PointId> ids) {
  std::unordered_map<PointId, Eigen::Index> position;
  for (std::size_t i = 0; i < state.point_ids.size(); ++i) position[state.point_ids[i]] = static_cast<Eigen::Index>(i);
  std::vector<bool> drop(state.dim(), false);
  for (PointId id : ids) {
    const auto it = position.find(id);
    if (it == position.end()) throw InvalidArgument("retire: unknown id " + std::to_string(id));
    drop[static_cast<std::size_t>(it->second)] = true;
  }
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < drop.size(); ++i)
    if (!drop[i]) keep.push_back(static_cast<Eigen::Index>(i));

  KalmanState next;
  next.step = state.step;
  next.point_ids.reserve(keep.size());
  for (Eigen::Index i : keep) next.point_ids.push_back(state.point_ids[static_cast<std::size_t>(i)]);
  next.mean = state.mean(keep);
  next.covariance = state.covariance(keep, keep);
  return next;
}

void write_state_csv(const KalmanState& state, const std::filesystem::path& path, double mean_offset) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "point_id,mean,variance\n" << std::setprecision(12);
  for (std::size_t i = 0; i < state.dim(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << state.point_ids[i] << ',' << state.mean[r] + mean_offset << ',' << state.covariance(r, r) << '\n';
  }
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace activetherm::filter
