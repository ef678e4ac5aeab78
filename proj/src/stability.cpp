#include "lfinode/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace lfi {

ComplexList eigvals(const Matrix& m) {
  if (m.rows() < 1 || m.rows() != m.cols())
    throw DimensionError("eigvals: matrix must be square and non-empty");
  if (!all_finite(m)) throw DimensionError("eigvals: matrix must be finite");

  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw NonConvergenceError("eigvals: QR iteration did not converge");

  ComplexList out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = solver.eigenvalues()(i);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

std::string to_string(StabilityVerdict v) {
  switch (v) {
    case StabilityVerdict::Stable: return "stable";
    case StabilityVerdict::Unstable: return "unstable";
    case StabilityVerdict::Marginal: return "marginal";
  }
  return "unknown";
}

std::string to_string(EigenSource s) {
  switch (s) {
    case EigenSource::AnalyticPlant: return "analytic_plant";
    case EigenSource::DataJref: return "data_jref";
    case EigenSource::ModelJnn: return "model_jnn";
  }
  return "unknown";
}

StabilityVerdict classify(const ComplexList& eigs, double margin) {
  if (eigs.empty()) throw DimensionError("classify: empty eigenvalue list");
  if (margin < 0.0) throw ConfigError("eval.margin", "margin must be >= 0");
  double max_real = -std::numeric_limits<double>::infinity();
  for (const auto& e : eigs) max_real = std::max(max_real, e.real());
  if (max_real < -margin) return StabilityVerdict::Stable;
  if (max_real > margin) return StabilityVerdict::Unstable;
  return StabilityVerdict::Marginal;
}

EigenReport make_eigen_report(const Matrix& jacobian, EigenSource source, double margin) {
  EigenReport rep;
  rep.eigenvalues = eigvals(jacobian);
  rep.max_real = -std::numeric_limits<double>::infinity();
  for (const auto& e : rep.eigenvalues) rep.max_real = std::max(rep.max_real, e.real());
  rep.verdict = classify(rep.eigenvalues, margin);
  rep.source = source;
  return rep;
}

namespace {

/// Exact minimum-cost assignment by subset DP; sizes here are <= 16.
std::vector<int> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());  // rows assigned to columns, rows <= cols
  const int mcols = static_cast<int>(cost.cols());
  const std::size_t full = std::size_t{1} << mcols;

  // dp[mask]: minimal cost to assign rows 0..popcount(mask)-1 to column set mask.
  std::vector<double> dp(full, std::numeric_limits<double>::infinity());
  std::vector<int> choice(full, -1);
  dp[0] = 0.0;
  for (std::size_t mask = 0; mask < full; ++mask) {
    if (!std::isfinite(dp[mask])) continue;
    const int row = __builtin_popcountll(mask);
    if (row >= n) continue;
    for (int c = 0; c < mcols; ++c) {
      if (mask & (std::size_t{1} << c)) continue;
      const std::size_t next = mask | (std::size_t{1} << c);
      const double cand = dp[mask] + cost(row, c);
      if (cand < dp[next]) {
        dp[next] = cand;
        choice[next] = c;
      }
    }
  }

  std::size_t best_mask = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < full; ++mask) {
    if (__builtin_popcountll(mask) != n) continue;
    if (dp[mask] < best) {
      best = dp[mask];
      best_mask = mask;
    }
  }

  std::vector<int> assign(n, -1);
  std::size_t mask = best_mask;
  while (mask != 0) {
    const int c = choice[mask];
    const int row = __builtin_popcountll(mask) - 1;
    assign[row] = c;
    mask &= ~(std::size_t{1} << c);
  }
  return assign;
}

}  // namespace

EigError eig_error(const ComplexList& estimated, const ComplexList& reference) {
  EigError out;
  if (estimated.empty() || reference.empty()) return out;
  if (std::max(estimated.size(), reference.size()) > 16)
    throw DimensionError("eig_error: assignment supported up to 16 eigenvalues");

  const bool est_small = estimated.size() <= reference.size();
  const ComplexList& small = est_small ? estimated : reference;
  const ComplexList& large = est_small ? reference : estimated;

  Matrix cost(small.size(), large.size());
  for (std::size_t r = 0; r < small.size(); ++r)
    for (std::size_t c = 0; c < large.size(); ++c) cost(r, c) = std::abs(small[r] - large[c]);

  const std::vector<int> assign = min_cost_assignment(cost);
  std::vector<bool> used(large.size(), false);
  double total = 0.0;
  for (std::size_t r = 0; r < small.size(); ++r) {
    const int c = assign[r];
    used[c] = true;
    total += cost(r, c);
    if (est_small)
      out.pairs.emplace_back(small[r], large[c]);
    else
      out.pairs.emplace_back(large[c], small[r]);
  }
  out.mae = total / static_cast<double>(small.size());
  for (std::size_t c = 0; c < large.size(); ++c) {
    if (used[c]) continue;
    if (est_small)
      out.unmatched_reference.push_back(large[c]);
    else
      out.unmatched_estimated.push_back(large[c]);
  }
  return out;
}

Matrix denormalize_jacobian(const Matrix& j_norm, const NormStats& stats, double t_scale) {
  if (j_norm.rows() != stats.state_std.size())
    throw DimensionError("denormalize_jacobian: stats dim mismatch");
  if (!(t_scale > 0.0)) throw ConfigError("t_scale", "time scale must be positive");
  const auto& s = stats.state_std;
  Matrix j = j_norm;
  for (Eigen::Index r = 0; r < j.rows(); ++r)
    for (Eigen::Index c = 0; c < j.cols(); ++c) j(r, c) *= s(r) / s(c);
  return j / t_scale;
}

Linearization model_linearize(const MlpParams& model, const Vector& u, const Vector& x_guess) {
  const int dx = model.state_dim();
  if (x_guess.size() != dx) throw DimensionError("model_linearize: guess dim mismatch");
  if (u.size() != model.input_dim() - dx) throw DimensionError("model_linearize: input dim mismatch");

  const auto& norm = model.norm;
  const Vector u_n = (u - norm.input_mean).cwiseQuotient(norm.input_std);
  Vector x_n = (x_guess - norm.state_mean).cwiseQuotient(norm.state_std);

  constexpr double kTol = 1e-10;
  constexpr int kMaxSteps = 50;
  constexpr double kDivergence = 1e6;

  Linearization lin;
  for (int step = 0; step < kMaxSteps && !lin.found; ++step) {
    const Vector f = mlp_forward(model, x_n, u_n);
    if (!all_finite(f)) break;
    if (f.norm() <= kTol) {
      lin.found = true;
      lin.newton_iters = step;
      break;
    }
    const Matrix j = mlp_state_jacobian(model, x_n, u_n);
    Eigen::FullPivLU<Matrix> lu(j);
    if (!lu.isInvertible()) break;
    x_n -= lu.solve(f);
    if (!all_finite(x_n) || x_n.norm() > kDivergence) break;
  }
  if (!lin.found && mlp_forward(model, x_n, u_n).norm() <= kTol) {
    lin.found = true;
    lin.newton_iters = kMaxSteps;
  }

  if (lin.found) {
    lin.x_ss_normalized = x_n;
    lin.x_ss = norm.state_mean + x_n.cwiseProduct(norm.state_std);
    lin.j_normalized = mlp_state_jacobian(model, x_n, u_n);
    lin.j_physical = denormalize_jacobian(lin.j_normalized, norm);
  }
  return lin;
}

}  // namespace lfi
