#include "lfinode/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lfi {

void IntegratorConfig::validate() const {
  if (method == Method::Rk4Fixed && h <= 0.0) throw ConfigError("integrator.h", "fixed step must be positive");
  if (!(rtol > 0.0 && rtol < 1.0)) throw ConfigError("integrator.rtol", "rtol must be in (0, 1)");
  if (atol <= 0.0) throw ConfigError("integrator.atol", "atol must be positive");
  if (max_steps <= 0) throw ConfigError("integrator.max_steps", "max_steps must be positive");
}

Vector step_rk4(const OdeField& f, const Vector& x, const Vector& u, double h) {
  if (h <= 0.0) throw ConfigError("integrator.h", "rk4 step must be positive");
  const Vector k1 = f(x, u);
  const Vector k2 = f(x + (0.5 * h) * k1, u);
  const Vector k3 = f(x + (0.5 * h) * k2, u);
  const Vector k4 = f(x + h * k3, u);
  Vector next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!all_finite(next)) throw NonFiniteStateError("rk4 step produced a non-finite state");
  return next;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kC2 = 1.0 / 5, kC3 = 3.0 / 10, kC4 = 4.0 / 5, kC5 = 8.0 / 9;
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kA71 = 35.0 / 384, kA73 = 500.0 / 1113, kA74 = 125.0 / 192,
                 kA75 = -2187.0 / 6784, kA76 = 11.0 / 84;
// 5th-minus-4th order error weights.
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;
// Dense-output weights for the 5th-order continuous extension.
constexpr double kD1 = -12715105075.0 / 11282082432.0;
constexpr double kD3 = 87487479700.0 / 32700410799.0;
constexpr double kD4 = -10690763975.0 / 1880347072.0;
constexpr double kD5 = 701980252875.0 / 199316789632.0;
constexpr double kD6 = -1453857185.0 / 822651844.0;
constexpr double kD7 = 69997945.0 / 29380423.0;

struct DenseSegment {
  double t = 0.0, h = 0.0;
  Vector r1, r2, r3, r4, r5;

  Vector eval(double ts) const {
    const double theta = (ts - t) / h;
    const double theta1 = 1.0 - theta;
    return r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
  }
};

double error_norm(const Vector& err, const Vector& y, const Vector& ynew, double atol, double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
    const double q = err(i) / sc;
    acc += q * q;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

double initial_step(const OdeField& f, const Vector& x0, const Vector& u, const Vector& f0,
                    double atol, double rtol, double span) {
  const auto weighted_rms = [&](const Vector& v, const Vector& ref) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double sc = atol + rtol * std::abs(ref(i));
      const double q = v(i) / sc;
      acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
  };
  const double d0 = weighted_rms(x0, x0);
  const double d1 = weighted_rms(f0, x0);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  const Vector x1 = x0 + h0 * f0;
  const Vector f1 = f(x1, u);
  double h1;
  if (!all_finite(f1)) {
    h1 = h0 * 1e-3;
  } else {
    const double d2 = weighted_rms(f1 - f0, x0) / h0;
    const double dm = std::max(d1, d2);
    h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  }
  return std::max(1e-14 * span, std::min({100.0 * h0, h1, span}));
}

}  // namespace

Vector PiecewiseConstantInput::at(double t) const {
  if (times.empty()) throw ConfigError("input_schedule", "schedule must hold at least one value");
  std::size_t idx = 0;
  while (idx + 1 < times.size() && times[idx + 1] <= t) ++idx;
  return values[idx];
}

std::vector<double> PiecewiseConstantInput::breakpoints(double t_begin, double t_end) const {
  std::vector<double> out;
  for (double t : times)
    if (t > t_begin && t < t_end) out.push_back(t);
  std::sort(out.begin(), out.end());
  return out;
}

SolveResult solve_adaptive(const OdeField& f, const Vector& x0, const PiecewiseConstantInput& input,
                           double t_begin, double t_end, double dt_sample,
                           const IntegratorConfig& config) {
  config.validate();
  if (!(dt_sample > 0.0)) throw ConfigError("dt", "sample period must be positive");
  if (!(t_end > t_begin)) throw ConfigError("t_span", "t_span must be increasing");
  if (input.times.size() != input.values.size() || input.times.empty())
    throw ConfigError("input_schedule", "times/values size mismatch");

  const long n_samples = std::max<long>(2, std::lround((t_end - t_begin) / dt_sample));
  const double t_final = t_begin + static_cast<double>(n_samples - 1) * dt_sample;

  SolveResult res;
  res.trajectory.dt = dt_sample;
  res.trajectory.t0 = t_begin;
  res.trajectory.states.resize(n_samples, x0.size());
  res.trajectory.inputs.resize(n_samples, input.values.front().size());
  for (long k = 0; k < n_samples; ++k)
    res.trajectory.inputs.row(k) = input.at(t_begin + static_cast<double>(k) * dt_sample).transpose();
  res.trajectory.states.row(0) = x0.transpose();

  long next_sample = 1;  // states.row(0) = x0 already written
  const auto emit_until = [&](const DenseSegment& seg, double seg_end) {
    while (next_sample < n_samples) {
      const double ts = t_begin + static_cast<double>(next_sample) * dt_sample;
      if (ts > seg_end + 1e-9 * std::max(1.0, std::abs(seg_end))) break;
      res.trajectory.states.row(next_sample) = seg.eval(ts).transpose();
      ++next_sample;
    }
  };

  // Controller constants as in classic DOPRI5 implementations.
  constexpr double kSafe = 0.9, kFac1 = 0.2, kFac2 = 10.0, kBeta = 0.04;
  constexpr double kExpo1 = 0.2 - kBeta * 0.75;
  double facold = 1e-4;

  std::vector<double> seg_bounds = input.breakpoints(t_begin, t_final);
  seg_bounds.push_back(t_final);

  Vector y = x0;
  double t = t_begin;
  long steps = 0;
  bool failed = false;
  std::string fail_msg;

  for (double seg_end : seg_bounds) {
    if (failed || t >= seg_end) continue;
    const Vector u = input.at(t);
    Vector k1 = f(y, u);
    if (!all_finite(k1)) {
      failed = true;
      fail_msg = "field non-finite at segment start";
      break;
    }
    double h = initial_step(f, y, u, k1, config.atol, config.rtol, seg_end - t);
    bool last_rejected = false;

    while (t < seg_end) {
      if (++steps > config.max_steps) {
        failed = true;
        fail_msg = "max_steps exhausted";
        break;
      }
      const double h_min = 1e-14 * std::max(1.0, std::abs(t));
      if (h < h_min) {
        failed = true;
        fail_msg = "step size underflow";
        break;
      }
      bool hit_end = false;
      if (t + h >= seg_end) {
        h = seg_end - t;
        hit_end = true;
      }

      const Vector k2 = f(y + h * (kA21 * k1), u);
      const Vector k3 = f(y + h * (kA31 * k1 + kA32 * k2), u);
      const Vector k4 = f(y + h * (kA41 * k1 + kA42 * k2 + kA43 * k3), u);
      const Vector k5 = f(y + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4), u);
      const Vector k6 = f(y + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5), u);
      const Vector ynew = y + h * (kA71 * k1 + kA73 * k3 + kA74 * k4 + kA75 * k5 + kA76 * k6);
      const Vector k7 = f(ynew, u);

      double err = std::numeric_limits<double>::infinity();
      if (all_finite(k2) && all_finite(k3) && all_finite(k4) && all_finite(k5) &&
          all_finite(k6) && all_finite(k7) && all_finite(ynew)) {
        const Vector ev = h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7);
        err = error_norm(ev, y, ynew, config.atol, config.rtol);
      }

      const double fac11 = std::pow(std::max(err, 1e-300), kExpo1);
      if (err <= 1.0) {
        // Accepted: build the dense segment, emit samples, advance.
        DenseSegment seg;
        seg.t = t;
        seg.h = h;
        const Vector ydiff = ynew - y;
        const Vector bspl = h * k1 - ydiff;
        seg.r1 = y;
        seg.r2 = ydiff;
        seg.r3 = bspl;
        seg.r4 = ydiff - h * k7 - bspl;
        seg.r5 = h * (kD1 * k1 + kD3 * k3 + kD4 * k4 + kD5 * k5 + kD6 * k6 + kD7 * k7);
        emit_until(seg, hit_end ? seg_end : t + h);

        facold = std::max(err, 1e-4);
        double fac = fac11 / std::pow(facold, kBeta);
        fac = std::max(1.0 / kFac2, std::min(1.0 / kFac1, fac / kSafe));
        double hnew = h / fac;
        if (last_rejected) hnew = std::min(hnew, h);
        t = hit_end ? seg_end : t + h;
        y = ynew;
        k1 = k7;  // FSAL
        h = hnew;
        last_rejected = false;
      } else {
        h /= std::isfinite(err) ? std::min(1.0 / kFac1, fac11 / kSafe) : 2.0;
        last_rejected = true;
      }
    }
  }

  res.t_reached = t;
  if (failed) {
    res.complete = false;
    res.message = fail_msg;
    const long reached = next_sample;
    res.trajectory.states.conservativeResize(std::max<long>(reached, 1), Eigen::NoChange);
    res.trajectory.inputs.conservativeResize(std::max<long>(reached, 1), Eigen::NoChange);
  } else if (next_sample < n_samples) {
    // The last sample lies exactly at t_final; numerical guard above may
    // have skipped it by a rounding hair.
    while (next_sample < n_samples) {
      res.trajectory.states.row(next_sample) = y.transpose();
      ++next_sample;
    }
  }
  return res;
}

// --- rollout ----------------------------------------------------------------

RolloutResult rollout_window(const MlpParams& net, const Vector& x0, const Matrix& inputs,
                             double h, bool record) {
  if (inputs.rows() < 1) throw DimensionError("rollout: need at least one step");
  if (x0.size() != net.state_dim()) throw DimensionError("rollout: x0 dim mismatch");
  if (x0.size() + inputs.cols() != net.input_dim())
    throw DimensionError("rollout: input dim mismatch");
  if (!(h > 0.0)) throw ConfigError("train.h", "rollout step must be positive");

  const int steps = static_cast<int>(inputs.rows());
  const int dx = net.state_dim();

  RolloutResult out;
  out.states.resize(steps, dx);
  if (record) {
    out.tape = std::make_shared<RolloutTape>();
    out.tape->h = h;
    out.tape->x0 = x0;
    out.tape->inputs = inputs;
    out.tape->steps.resize(steps);
  }

  Vector x = x0;
  for (int k = 0; k < steps; ++k) {
    const Vector u = inputs.row(k).transpose();
    std::array<MlpTape, 4> local;
    MlpTape* taps = record ? out.tape->steps[k].data() : local.data();
    const Vector k1 = mlp_forward(net, x, u, &taps[0]);
    const Vector k2 = mlp_forward(net, x + (0.5 * h) * k1, u, &taps[1]);
    const Vector k3 = mlp_forward(net, x + (0.5 * h) * k2, u, &taps[2]);
    const Vector k4 = mlp_forward(net, x + h * k3, u, &taps[3]);
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!all_finite(x)) {
      out.finite = false;
      out.steps_completed = k;
      out.states.conservativeResize(k, Eigen::NoChange);
      if (record) out.tape->steps.resize(k);
      return out;
    }
    out.states.row(k) = x.transpose();
  }
  out.steps_completed = steps;
  return out;
}

WindowLossGrad grad_forward_loss(const MlpParams& net, const RolloutResult& rollout,
                                 const Matrix& reference) {
  if (!rollout.tape) throw TapeMissingError("grad_forward_loss: rollout was not recorded");
  if (!rollout.finite) throw NonFiniteStateError("grad_forward_loss: rollout diverged");
  if (reference.rows() != rollout.states.rows() || reference.cols() != rollout.states.cols())
    throw DimensionError("grad_forward_loss: reference shape mismatch");

  const RolloutTape& tape = *rollout.tape;
  const int steps = static_cast<int>(rollout.states.rows());
  const int dx = static_cast<int>(rollout.states.cols());
  const double h = tape.h;
  const double inv_k = 1.0 / static_cast<double>(steps);

  WindowLossGrad out;
  out.grad = MlpGrad::zeros_like(net);
  const Matrix resid = rollout.states - reference;
  out.loss = inv_k * resid.squaredNorm();

  // Reverse sweep. gk is the adjoint of the step-k output; the per-stage
  // adjoints follow from x' = x + h/6 (k1 + 2 k2 + 2 k3 + k4) with
  // y2 = x + h/2 k1, y3 = x + h/2 k2, y4 = x + h k3.
  Vector carry = Vector::Zero(dx);
  for (int k = steps - 1; k >= 0; --k) {
    const Vector gk = (2.0 * inv_k) * resid.row(k).transpose() + carry;
    const auto& taps = tape.steps[k];

    const Vector k4bar = (h / 6.0) * gk;
    const Vector y4bar = mlp_vjp(net, taps[3], k4bar, out.grad).head(dx);
    const Vector k3bar = (h / 3.0) * gk + h * y4bar;
    const Vector y3bar = mlp_vjp(net, taps[2], k3bar, out.grad).head(dx);
    const Vector k2bar = (h / 3.0) * gk + (0.5 * h) * y3bar;
    const Vector y2bar = mlp_vjp(net, taps[1], k2bar, out.grad).head(dx);
    const Vector k1bar = (h / 6.0) * gk + (0.5 * h) * y2bar;
    const Vector y1bar = mlp_vjp(net, taps[0], k1bar, out.grad).head(dx);

    carry = gk + y1bar + y2bar + y3bar + y4bar;
  }
  return out;
}

}  // namespace lfi
