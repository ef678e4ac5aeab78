#include "lfinode/plants.hpp"

#include <cmath>

namespace lfi {

std::string to_string(PlantKind kind) {
  switch (kind) {
    case PlantKind::Linear: return "linear";
    case PlantKind::VanDerPol: return "van_der_pol";
    case PlantKind::GfmDroop: return "gfm_droop";
  }
  return "unknown";
}

PlantKind plant_kind_from_string(const std::string& name) {
  if (name == "linear") return PlantKind::Linear;
  if (name == "van_der_pol") return PlantKind::VanDerPol;
  if (name == "gfm_droop") return PlantKind::GfmDroop;
  throw ConfigError("plant.kind", "unknown plant kind '" + name + "'");
}

PlantModel PlantModel::linear(Matrix A, Matrix B) {
  if (A.rows() != A.cols()) throw DimensionError("linear plant: A must be square");
  if (B.rows() != A.rows()) throw DimensionError("linear plant: B row count must match A");
  if (!all_finite(A) || !all_finite(B)) throw DimensionError("linear plant: parameters must be finite");
  const int dx = static_cast<int>(A.rows());
  const int du = static_cast<int>(B.cols());
  return PlantModel(PlantKind::Linear, dx, du, LinearParams{std::move(A), std::move(B)});
}

PlantModel PlantModel::van_der_pol(double mu) {
  if (!std::isfinite(mu)) throw DimensionError("van der pol: mu must be finite");
  return PlantModel(PlantKind::VanDerPol, 2, 1, VanDerPolParams{mu});
}

PlantModel PlantModel::gfm_droop(GfmDroopParams p) {
  const bool finite = std::isfinite(p.E) && std::isfinite(p.X) && std::isfinite(p.m) &&
                      std::isfinite(p.T) && std::isfinite(p.omega_set) && std::isfinite(p.P_ref);
  if (!finite) throw DimensionError("gfm droop: parameters must be finite");
  if (p.E <= 0 || p.X <= 0 || p.m <= 0 || p.T <= 0)
    throw DimensionError("gfm droop: E, X, m, T must be positive");
  return PlantModel(PlantKind::GfmDroop, 2, 2, p);
}

void PlantModel::check_dims(const Vector& x, const Vector& u) const {
  if (x.size() != dx_)
    throw DimensionError("plant " + to_string(kind_) + ": expected state dim " +
                         std::to_string(dx_) + ", got " + std::to_string(x.size()));
  if (u.size() != du_)
    throw DimensionError("plant " + to_string(kind_) + ": expected input dim " +
                         std::to_string(du_) + ", got " + std::to_string(u.size()));
}

Vector PlantModel::derivative(const Vector& x, const Vector& u) const {
  check_dims(x, u);
  switch (kind_) {
    case PlantKind::Linear: {
      const auto& p = std::get<LinearParams>(params_);
      return p.A * x + p.B * u;
    }
    case PlantKind::VanDerPol: {
      const auto& p = std::get<VanDerPolParams>(params_);
      Vector f(2);
      f(0) = x(1);
      f(1) = p.mu * (1.0 - x(0) * x(0)) * x(1) - x(0) + u(0);
      return f;
    }
    case PlantKind::GfmDroop: {
      const auto& p = std::get<GfmDroopParams>(params_);
      const double delta = x(0), pf = x(1);
      const double vg = u(0), wg = u(1);
      Vector f(2);
      f(0) = p.omega_set + p.m * (p.P_ref - pf) - wg;
      f(1) = ((p.E * vg / p.X) * std::sin(delta) - pf) / p.T;
      return f;
    }
  }
  throw DimensionError("plant: unreachable kind");
}

Matrix PlantModel::state_jacobian(const Vector& x, const Vector& u) const {
  check_dims(x, u);
  switch (kind_) {
    case PlantKind::Linear:
      return std::get<LinearParams>(params_).A;
    case PlantKind::VanDerPol: {
      const auto& p = std::get<VanDerPolParams>(params_);
      Matrix j(2, 2);
      j(0, 0) = 0.0;
      j(0, 1) = 1.0;
      j(1, 0) = -2.0 * p.mu * x(0) * x(1) - 1.0;
      j(1, 1) = p.mu * (1.0 - x(0) * x(0));
      return j;
    }
    case PlantKind::GfmDroop: {
      const auto& p = std::get<GfmDroopParams>(params_);
      Matrix j(2, 2);
      j(0, 0) = 0.0;
      j(0, 1) = -p.m;
      j(1, 0) = (p.E * u(0) / (p.X * p.T)) * std::cos(x(0));
      j(1, 1) = -1.0 / p.T;
      return j;
    }
  }
  throw DimensionError("plant: unreachable kind");
}

Matrix PlantModel::input_jacobian(const Vector& x, const Vector& u) const {
  check_dims(x, u);
  switch (kind_) {
    case PlantKind::Linear:
      return std::get<LinearParams>(params_).B;
    case PlantKind::VanDerPol: {
      Matrix j(2, 1);
      j(0, 0) = 0.0;
      j(1, 0) = 1.0;
      return j;
    }
    case PlantKind::GfmDroop: {
      const auto& p = std::get<GfmDroopParams>(params_);
      Matrix j(2, 2);
      j(0, 0) = 0.0;
      j(0, 1) = -1.0;
      j(1, 0) = (p.E / (p.X * p.T)) * std::sin(x(0));
      j(1, 1) = 0.0;
      return j;
    }
  }
  throw DimensionError("plant: unreachable kind");
}

std::optional<Vector> PlantModel::find_equilibrium(const Vector& u, const Vector& x_guess) const {
  check_dims(x_guess, u);
  if (!all_finite(x_guess) || !all_finite(u)) return std::nullopt;

  constexpr double kTol = 1e-10;
  constexpr int kMaxSteps = 50;
  constexpr double kDivergence = 1e8;

  Vector x = x_guess;
  for (int step = 0; step < kMaxSteps; ++step) {
    const Vector f = derivative(x, u);
    if (!all_finite(f)) return std::nullopt;
    if (f.norm() <= kTol) return x;
    const Matrix j = state_jacobian(x, u);
    Eigen::FullPivLU<Matrix> lu(j);
    if (!lu.isInvertible()) return std::nullopt;
    x -= lu.solve(f);
    if (!all_finite(x) || x.norm() > kDivergence) return std::nullopt;
  }
  // One final check: the last update may have landed inside tolerance.
  if (derivative(x, u).norm() <= kTol) return x;
  return std::nullopt;
}

}  // namespace lfi
