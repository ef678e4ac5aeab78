#pragma once

#include <vector>

#include "lfinode/signals.hpp"
#include "lfinode/trajectory.hpp"

namespace lfi {

struct EquilibriumEstimate {
  Vector x_ss;
  int window_begin = 0;  // [window_begin, window_end) index range
  int window_end = 0;
  double residual = 0.0;  // mean |xdot|_2 over the window
};

/// Slides a window over the finite-difference derivative norm and returns
/// the window with minimal mean |xdot|_2; x_ss is the state mean there.
EquilibriumEstimate detect_equilibrium(const Trajectory& traj, int window_len,
                                       DiffScheme scheme = DiffScheme::Central);

struct NeighborParams {
  double eps_min = 1e-6;  // excludes numerically-zero deviations
  double r_max = 0.2;
  int n_max = 200;
};

/// Sample indices whose deviation from x_ss lies in [eps_min, r_max],
/// excluding the steady window, most recent first, capped at n_max.
/// Throws InsufficientSamplesError when fewer than d_x indices qualify.
std::vector<int> select_neighbors(const Trajectory& traj, const EquilibriumEstimate& eq,
                                  const NeighborParams& params = {});

/// SVD pseudoinverse; singular values below rel_tol * sigma_max are
/// treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-10);

struct JacobianEstimate {
  Matrix j_ref;
  int n_samples = 0;
  double cond = 0.0;          // kappa(DeltaX) from its SVD
  double delta_x_norm = 0.0;  // |DeltaX|_2
  double lsq_residual = 0.0;  // |DeltaXdot - J_ref DeltaX|_F
};

/// Least-squares Jacobian from deviation/derivative pairs:
/// J_ref = DeltaXdot * pinv(DeltaX). Derivatives come from finite_diff
/// unless an override matrix (N x d_x, full trajectory rows) is supplied.
/// Throws RankDeficientError when DeltaX does not excite all state
/// directions (relative sigma_min below pinv truncation).
JacobianEstimate estimate_jacobian(const Trajectory& traj, const EquilibriumEstimate& eq,
                                   const std::vector<int>& indices,
                                   const Matrix* derivatives = nullptr,
                                   DiffScheme scheme = DiffScheme::Central);

struct NoiseBound {
  double sigma_x = 0.0;
  double sigma_xdot = 0.0;
  double jstar_norm = 0.0;
  double bound = 0.0;
};

/// First-order pseudoinverse perturbation bound under per-sample noise
/// magnitudes: kappa * (sqrt(N) sigma_xdot + sqrt(N) sigma_x |J*|_2) / |DeltaX|_2.
NoiseBound error_bound(const JacobianEstimate& est, double sigma_x, double sigma_xdot,
                       double jstar_norm);

/// Standard deviation of the central-difference derivative noise
/// (eta_{k+1} - eta_{k-1}) / (2 dt) under i.i.d. state noise sigma_x.
double derivative_noise_level(double sigma_x, double dt);

}  // namespace lfi
