#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lfinode/common.hpp"
#include "lfinode/mlp.hpp"
#include "lfinode/trajectory.hpp"

namespace lfi {

struct IntegratorConfig {
  enum class Method { Rk4Fixed, Rk45Adaptive };
  Method method = Method::Rk45Adaptive;
  double h = 0.0;       // fixed step, rk4 only
  double rtol = 1e-7;
  double atol = 1e-9;
  long max_steps = 5'000'000;

  void validate() const;
};

/// Right-hand side of an ODE with exogenous input, f(x, u).
using OdeField = std::function<Vector(const Vector&, const Vector&)>;

/// Classical 4-stage Runge-Kutta step; u is held constant over the step.
/// Throws NonFiniteStateError if any stage leaves the finite range.
Vector step_rk4(const OdeField& f, const Vector& x, const Vector& u, double h);

struct SolveResult {
  Trajectory trajectory;  // sampled on the uniform grid, possibly truncated
  bool complete = true;
  double t_reached = 0.0;
  std::string message;
};

/// Dormand-Prince 5(4) pair with PI step-size control and 5th-order dense
/// output. The result is sampled on the uniform grid t0 + k*dt_sample,
/// k = 0..n_samples-1. Input schedule changes are treated as hard step
/// boundaries so discontinuities never fall inside a step.
SolveResult solve_adaptive(const OdeField& f, const Vector& x0, const PiecewiseConstantInput& input,
                           double t_begin, double t_end, double dt_sample,
                           const IntegratorConfig& config = {});

// --- neural-field rollout with gradient recording --------------------------

/// Stage records of one RK4 window rollout; consumed by grad_forward_loss.
struct RolloutTape {
  double h = 0.0;
  Vector x0;
  Matrix inputs;                               // K x d_u
  std::vector<std::array<MlpTape, 4>> steps;   // per step, tapes of the 4 stage evals
};

struct RolloutResult {
  Matrix states;      // K x d_x: state after each of the K steps
  bool finite = true; // false when a stage produced a non-finite value
  int steps_completed = 0;
  std::shared_ptr<RolloutTape> tape;  // null unless recording was requested
};

/// K successive RK4 steps of the network field with per-step inputs
/// (zero-order hold). With record=true the tape captures every stage so the
/// discrete objective can be differentiated exactly.
RolloutResult rollout_window(const MlpParams& net, const Vector& x0, const Matrix& inputs,
                             double h, bool record);

struct WindowLossGrad {
  double loss = 0.0;
  MlpGrad grad;
};

/// Mean-squared trajectory loss of a recorded rollout against a reference
/// window, and its exact parameter gradient via reverse accumulation through
/// all RK4 stages. Throws TapeMissingError when the rollout was not recorded.
WindowLossGrad grad_forward_loss(const MlpParams& net, const RolloutResult& rollout,
                                 const Matrix& reference);

}  // namespace lfi
