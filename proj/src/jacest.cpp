#include "lfinode/jacest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lfi {

EquilibriumEstimate detect_equilibrium(const Trajectory& traj, int window_len, DiffScheme scheme) {
  const int n = traj.n_samples();
  if (window_len < 2) throw TooShortError("detect_equilibrium: window_len must be >= 2");
  if (window_len > n) throw TooShortError("detect_equilibrium: window longer than trajectory");

  const Matrix deriv = finite_diff(traj, scheme);
  Vector norms(n);
  for (int k = 0; k < n; ++k) norms(k) = deriv.row(k).norm();

  // Prefix sums make the sliding-window mean O(N).
  Vector prefix(n + 1);
  prefix(0) = 0.0;
  for (int k = 0; k < n; ++k) prefix(k + 1) = prefix(k) + norms(k);

  int best = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  for (int start = 0; start + window_len <= n; ++start) {
    const double mean = (prefix(start + window_len) - prefix(start)) / window_len;
    if (mean < best_mean) {
      best_mean = mean;
      best = start;
    }
  }

  EquilibriumEstimate eq;
  eq.window_begin = best;
  eq.window_end = best + window_len;
  eq.residual = best_mean;
  eq.x_ss = traj.states.middleRows(best, window_len).colwise().mean().transpose();
  return eq;
}

std::vector<int> select_neighbors(const Trajectory& traj, const EquilibriumEstimate& eq,
                                  const NeighborParams& params) {
  if (!(params.eps_min < params.r_max))
    throw ConfigError("neighbors", "eps_min must be smaller than r_max");
  const int n = traj.n_samples();
  std::vector<int> out;
  for (int k = n - 1; k >= 0; --k) {
    if (k >= eq.window_begin && k < eq.window_end) continue;
    const double dist = (traj.states.row(k).transpose() - eq.x_ss).norm();
    if (dist >= params.eps_min && dist <= params.r_max) {
      out.push_back(k);
      if (static_cast<int>(out.size()) >= params.n_max) break;
    }
  }
  if (static_cast<int>(out.size()) < traj.state_dim())
    throw InsufficientSamplesError("select_neighbors: only " + std::to_string(out.size()) +
                                   " deviations in band, need at least " +
                                   std::to_string(traj.state_dim()));
  return out;
}

Matrix pseudo_inverse(const Matrix& m, double rel_tol) {
  if (!all_finite(m)) throw DimensionError("pseudo_inverse: matrix must be finite");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return Matrix::Zero(m.cols(), m.rows());
  const double cut = rel_tol * sv(0);
  Vector inv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

JacobianEstimate estimate_jacobian(const Trajectory& traj, const EquilibriumEstimate& eq,
                                   const std::vector<int>& indices, const Matrix* derivatives,
                                   DiffScheme scheme) {
  const int dx = traj.state_dim();
  if (static_cast<int>(indices.size()) < dx)
    throw InsufficientSamplesError("estimate_jacobian: need at least d_x samples");

  Matrix deriv;
  if (derivatives) {
    if (derivatives->rows() != traj.n_samples() || derivatives->cols() != dx)
      throw DimensionError("estimate_jacobian: derivative override must be N x d_x");
    deriv = *derivatives;
  } else {
    deriv = finite_diff(traj, scheme);
  }

  const int n = static_cast<int>(indices.size());
  Matrix delta_x(dx, n), delta_xdot(dx, n);
  for (int c = 0; c < n; ++c) {
    const int k = indices[c];
    delta_x.col(c) = traj.states.row(k).transpose() - eq.x_ss;
    delta_xdot.col(c) = deriv.row(k).transpose();
  }

  constexpr double kPinvRelTol = 1e-10;
  Eigen::JacobiSVD<Matrix> svd(delta_x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double sigma_max = sv(0);
  const double sigma_min = sv(sv.size() - 1);

  JacobianEstimate est;
  est.n_samples = n;
  est.delta_x_norm = sigma_max;
  if (!(sigma_max > 0.0) || sigma_min <= kPinvRelTol * sigma_max) {
    est.cond = std::numeric_limits<double>::infinity();
    throw RankDeficientError(
        "estimate_jacobian: deviations do not excite all state directions (cond = inf)");
  }
  est.cond = sigma_max / sigma_min;

  Vector inv_sv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) inv_sv(i) = 1.0 / sv(i);
  const Matrix pinv = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  est.j_ref = delta_xdot * pinv;
  est.lsq_residual = (delta_xdot - est.j_ref * delta_x).norm();
  return est;
}

NoiseBound error_bound(const JacobianEstimate& est, double sigma_x, double sigma_xdot,
                       double jstar_norm) {
  if (sigma_x < 0.0 || sigma_xdot < 0.0 || jstar_norm < 0.0)
    throw ConfigError("bound", "noise magnitudes must be >= 0");
  if (!std::isfinite(est.cond) || !(est.delta_x_norm > 0.0))
    throw UnboundedError("error_bound: estimate is rank-deficient, bound undefined");

  NoiseBound nb;
  nb.sigma_x = sigma_x;
  nb.sigma_xdot = sigma_xdot;
  nb.jstar_norm = jstar_norm;
  const double sqrt_n = std::sqrt(static_cast<double>(est.n_samples));
  nb.bound = est.cond * (sqrt_n * sigma_xdot / est.delta_x_norm +
                         sqrt_n * sigma_x * jstar_norm / est.delta_x_norm);
  return nb;
}

double derivative_noise_level(double sigma_x, double dt) {
  if (!(dt > 0.0)) throw ConfigError("bound.dt", "dt must be positive");
  return sigma_x * std::sqrt(2.0) / (2.0 * dt);
}

}  // namespace lfi
