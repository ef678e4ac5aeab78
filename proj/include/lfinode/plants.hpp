#pragma once

#include <optional>
#include <string>
#include <variant>

#include "lfinode/common.hpp"

namespace lfi {

enum class PlantKind { Linear, VanDerPol, GfmDroop };

std::string to_string(PlantKind kind);
PlantKind plant_kind_from_string(const std::string& name);

/// Linear time-invariant plant  xdot = A x + B u.
struct LinearParams {
  Matrix A;  // d_x x d_x, 1/s
  Matrix B;  // d_x x d_u
};

/// Forced Van der Pol oscillator:
///   x1dot = x2
///   x2dot = mu (1 - x1^2) x2 - x1 + u
struct VanDerPolParams {
  double mu = 1.0;
};

/// Reduced droop-controlled grid-forming inverter behind a coupling
/// reactance, per-unit. States x = [delta, P_f], inputs u = [V_g, omega_g]:
///   delta_dot = omega_set + m (P_ref - P_f) - omega_g
///   P_f_dot   = ((E V_g / X) sin(delta) - P_f) / T
struct GfmDroopParams {
  double E = 1.0;          // internal voltage magnitude (pu)
  double X = 0.3;          // coupling reactance (pu)
  double m = 0.05;         // P-f droop gain (pu/pu)
  double T = 0.02;         // power filter time constant (s)
  double omega_set = 1.0;  // frequency setpoint (pu)
  double P_ref = 0.5;      // power setpoint (pu)
};

/// Ground-truth synthetic plant with closed-form derivatives, Jacobians and
/// equilibria. Immutable after construction; all member calls are pure.
class PlantModel {
 public:
  static PlantModel linear(Matrix A, Matrix B);
  static PlantModel van_der_pol(double mu);
  static PlantModel gfm_droop(GfmDroopParams p = {});

  PlantKind kind() const { return kind_; }
  int state_dim() const { return dx_; }
  int input_dim() const { return du_; }

  /// f(x, u) from the closed-form dynamics.
  Vector derivative(const Vector& x, const Vector& u) const;

  /// Exact df/dx.
  Matrix state_jacobian(const Vector& x, const Vector& u) const;

  /// Exact df/du.
  Matrix input_jacobian(const Vector& x, const Vector& u) const;

  /// Newton iteration on f(x, u) = 0. Returns x_ss with |f(x_ss, u)|_2 <=
  /// 1e-10, or nullopt when no equilibrium is reached within 50 steps
  /// (e.g. GfmDroop beyond pull-out power).
  std::optional<Vector> find_equilibrium(const Vector& u, const Vector& x_guess) const;

  const LinearParams& linear_params() const { return std::get<LinearParams>(params_); }
  const VanDerPolParams& van_der_pol_params() const { return std::get<VanDerPolParams>(params_); }
  const GfmDroopParams& gfm_droop_params() const { return std::get<GfmDroopParams>(params_); }

 private:
  PlantModel(PlantKind kind, int dx, int du, std::variant<LinearParams, VanDerPolParams, GfmDroopParams> p)
      : kind_(kind), dx_(dx), du_(du), params_(std::move(p)) {}

  void check_dims(const Vector& x, const Vector& u) const;

  PlantKind kind_;
  int dx_;
  int du_;
  std::variant<LinearParams, VanDerPolParams, GfmDroopParams> params_;
};

}  // namespace lfi
