#pragma once

#include <complex>
#include <vector>

#include "lfinode/mlp.hpp"

namespace lfi {

using ComplexList = std::vector<std::complex<double>>;

/// All eigenvalues of a real matrix (with multiplicity), sorted by real part
/// then imaginary part for stable output ordering.
ComplexList eigvals(const Matrix& m);

enum class StabilityVerdict { Stable, Unstable, Marginal };

std::string to_string(StabilityVerdict v);

/// Stable if max Re < -margin, Unstable if max Re > +margin, else Marginal.
StabilityVerdict classify(const ComplexList& eigs, double margin);

enum class EigenSource { AnalyticPlant, DataJref, ModelJnn };

std::string to_string(EigenSource s);

struct EigenReport {
  ComplexList eigenvalues;  // 1/s, denormalized time
  double max_real = 0.0;
  StabilityVerdict verdict = StabilityVerdict::Marginal;
  EigenSource source = EigenSource::AnalyticPlant;
};

EigenReport make_eigen_report(const Matrix& jacobian, EigenSource source, double margin);

struct EigError {
  std::vector<std::pair<std::complex<double>, std::complex<double>>> pairs;  // (estimate, reference)
  double mae = 0.0;
  ComplexList unmatched_estimated;
  ComplexList unmatched_reference;
};

/// Minimum-total-distance bijective matching between the two eigenvalue
/// sets (optimal assignment on |est_i - ref_j|). With unequal sizes the
/// min-size subset is matched and the leftovers reported unmatched.
EigError eig_error(const ComplexList& estimated, const ComplexList& reference);

/// J_phys = S_x J_norm S_x^{-1} / t_scale with S_x = diag(state_std).
/// Similarity plus time rescale; eigenvalues only pick up the 1/t_scale.
Matrix denormalize_jacobian(const Matrix& j_norm, const NormStats& stats, double t_scale = 1.0);

struct Linearization {
  bool found = false;
  int newton_iters = 0;
  Vector x_ss;             // physical units
  Vector x_ss_normalized;
  Matrix j_normalized;     // d f_NN / d x in normalized space
  Matrix j_physical;       // denormalized, 1/s
};

/// Newton on f_NN(x, u) = 0 in the model's normalized space, from a guess in
/// physical units. found=false (no equilibrium reached) is itself a
/// stability signal and is reported distinctly by the CLI.
Linearization model_linearize(const MlpParams& model, const Vector& u, const Vector& x_guess);

}  // namespace lfi
