#include "lfinode/signals.hpp"

#include <algorithm>
#include <cmath>

namespace lfi {

Trajectory simulate(const PlantModel& plant, const Vector& x0, const PiecewiseConstantInput& input,
                    double dt, double duration, const IntegratorConfig& config) {
  if (!(dt > 0.0)) throw ConfigError("data.dt", "dt must be positive");
  if (!(duration >= 2.0 * dt)) throw ConfigError("data.duration", "duration must be at least 2*dt");
  const OdeField field = [&plant](const Vector& x, const Vector& u) {
    return plant.derivative(x, u);
  };
  SolveResult res = solve_adaptive(field, x0, input, 0.0, duration, dt, config);
  res.trajectory.meta["plant"] = to_string(plant.kind());
  if (!res.complete) {
    res.trajectory.meta["truncated"] = "1";
    res.trajectory.meta["truncated_at"] = std::to_string(res.t_reached);
    res.trajectory.meta["truncated_reason"] = res.message;
  }
  return res.trajectory;
}

Trajectory add_noise(const Trajectory& traj, double sigma_x, std::uint64_t seed) {
  if (sigma_x < 0.0) throw ConfigError("data.sigma_x", "sigma_x must be >= 0");
  Trajectory out = traj;
  if (sigma_x > 0.0) {
    Rng rng = Rng::derive(seed, 0x6e6f697365ULL);
    for (Eigen::Index r = 0; r < out.states.rows(); ++r)
      for (Eigen::Index c = 0; c < out.states.cols(); ++c)
        out.states(r, c) += sigma_x * rng.normal();
  }
  out.meta["noise_sigma_x"] = std::to_string(sigma_x);
  out.meta["noise_seed"] = std::to_string(seed);
  return out;
}

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Second-order Butterworth low-pass via the bilinear transform.
Biquad butter2_lowpass(double cutoff_hz, double dt) {
  const double k = std::tan(3.14159265358979323846 * cutoff_hz * dt);
  const double sqrt2 = 1.4142135623730951;
  const double norm = 1.0 / (1.0 + sqrt2 * k + k * k);
  Biquad q;
  q.b0 = k * k * norm;
  q.b1 = 2.0 * q.b0;
  q.b2 = q.b0;
  q.a1 = 2.0 * (k * k - 1.0) * norm;
  q.a2 = (1.0 - sqrt2 * k + k * k) * norm;
  return q;
}

/// Direct-form II transposed, with the internal state preconditioned so a
/// constant input passes through with zero transient.
void filter_in_place(const Biquad& q, std::vector<double>& x) {
  const double x0 = x.front();
  double z1 = (1.0 - q.b0) * x0;
  double z2 = (q.b2 - q.a2) * x0;
  for (double& v : x) {
    const double y = q.b0 * v + z1;
    z1 = q.b1 * v - q.a1 * y + z2;
    z2 = q.b2 * v - q.a2 * y;
    v = y;
  }
}

}  // namespace

Trajectory zero_phase_lowpass(const Trajectory& traj, double cutoff_hz) {
  traj.validate();
  const double nyquist = 0.5 / traj.dt;
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < nyquist))
    throw CutoffError("cutoff must lie in (0, " + std::to_string(nyquist) + ") Hz");

  const Biquad q = butter2_lowpass(cutoff_hz, traj.dt);
  const int n = traj.n_samples();
  // Odd-reflection padding suppresses the start/end transients of each pass.
  const int pad = std::min(n - 1, 9);

  Trajectory out = traj;
  std::vector<double> work(static_cast<std::size_t>(n + 2 * pad));
  for (int c = 0; c < traj.state_dim(); ++c) {
    for (int i = 0; i < pad; ++i)
      work[i] = 2.0 * traj.states(0, c) - traj.states(pad - i, c);
    for (int i = 0; i < n; ++i) work[pad + i] = traj.states(i, c);
    for (int i = 0; i < pad; ++i)
      work[pad + n + i] = 2.0 * traj.states(n - 1, c) - traj.states(n - 2 - i, c);

    filter_in_place(q, work);
    std::reverse(work.begin(), work.end());
    filter_in_place(q, work);
    std::reverse(work.begin(), work.end());

    for (int i = 0; i < n; ++i) out.states(i, c) = work[pad + i];
  }
  out.meta["filter_cutoff_hz"] = std::to_string(cutoff_hz);
  return out;
}

Matrix finite_diff(const Trajectory& traj, DiffScheme scheme) {
  const int n = traj.n_samples();
  if (n < 3) throw TooShortError("finite_diff: need at least 3 samples");
  const double dt = traj.dt;
  Matrix d(n, traj.state_dim());
  if (scheme == DiffScheme::Central) {
    d.row(0) = (-3.0 * traj.states.row(0) + 4.0 * traj.states.row(1) - traj.states.row(2)) / (2.0 * dt);
    for (int k = 1; k + 1 < n; ++k)
      d.row(k) = (traj.states.row(k + 1) - traj.states.row(k - 1)) / (2.0 * dt);
    d.row(n - 1) =
        (3.0 * traj.states.row(n - 1) - 4.0 * traj.states.row(n - 2) + traj.states.row(n - 3)) /
        (2.0 * dt);
  } else {
    for (int k = 0; k + 1 < n; ++k) d.row(k) = (traj.states.row(k + 1) - traj.states.row(k)) / dt;
    d.row(n - 1) = d.row(n - 2);
  }
  return d;
}

Trajectory downsample(const Trajectory& traj, int factor) {
  if (factor < 1) throw ConfigError("data.downsample", "factor must be >= 1");
  const int n = traj.n_samples();
  const int kept = (n + factor - 1) / factor;
  if (kept < 2) throw TooShortError("downsample: fewer than 2 samples would remain");
  if (factor == 1) return traj;

  Trajectory out;
  out.dt = traj.dt * factor;
  out.t0 = traj.t0;
  out.meta = traj.meta;
  out.meta["downsample_factor"] = std::to_string(factor);
  out.states.resize(kept, traj.state_dim());
  out.inputs.resize(kept, traj.input_dim());
  for (int k = 0; k < kept; ++k) {
    out.states.row(k) = traj.states.row(k * factor);
    out.inputs.row(k) = traj.inputs.row(k * factor);
  }
  return out;
}

NormStats fit_normalization(const Dataset& ds) {
  if (ds.trajectories.empty()) throw TooShortError("fit_normalization: empty dataset");
  const int dx = ds.state_dim(), du = ds.input_dim();
  long count = 0;
  Vector sx = Vector::Zero(dx), su = Vector::Zero(du);
  for (const auto& traj : ds.trajectories) {
    sx += traj.states.colwise().sum().transpose();
    su += traj.inputs.colwise().sum().transpose();
    count += traj.n_samples();
  }
  NormStats s;
  s.state_mean = sx / static_cast<double>(count);
  s.input_mean = su / static_cast<double>(count);
  Vector vx = Vector::Zero(dx), vu = Vector::Zero(du);
  for (const auto& traj : ds.trajectories) {
    vx += (traj.states.rowwise() - s.state_mean.transpose()).array().square().colwise().sum().matrix().transpose();
    vu += (traj.inputs.rowwise() - s.input_mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  s.state_std = (vx / static_cast<double>(count)).array().sqrt();
  s.input_std = (vu / static_cast<double>(count)).array().sqrt();
  // Constant channels carry no scale information; leave them unscaled.
  for (Eigen::Index i = 0; i < s.state_std.size(); ++i)
    if (!(s.state_std(i) > 0.0)) s.state_std(i) = 1.0;
  for (Eigen::Index i = 0; i < s.input_std.size(); ++i)
    if (!(s.input_std(i) > 0.0)) s.input_std(i) = 1.0;
  return s;
}

Trajectory apply_normalization(const Trajectory& traj, const NormStats& stats, NormDirection dir) {
  if (stats.state_mean.size() != traj.state_dim() || stats.input_mean.size() != traj.input_dim())
    throw DimensionError("apply_normalization: stats dims do not match trajectory");
  Trajectory out = traj;
  if (dir == NormDirection::Forward) {
    out.states = (traj.states.rowwise() - stats.state_mean.transpose()).array().rowwise() /
                 stats.state_std.transpose().array();
    out.inputs = (traj.inputs.rowwise() - stats.input_mean.transpose()).array().rowwise() /
                 stats.input_std.transpose().array();
    out.meta["normalized"] = "1";
  } else {
    out.states = (traj.states.array().rowwise() * stats.state_std.transpose().array()).matrix().rowwise() +
                 stats.state_mean.transpose();
    out.inputs = (traj.inputs.array().rowwise() * stats.input_std.transpose().array()).matrix().rowwise() +
                 stats.input_mean.transpose();
    out.meta.erase("normalized");
  }
  return out;
}

Dataset apply_normalization(const Dataset& ds, const NormStats& stats, NormDirection dir) {
  Dataset out = ds;
  for (auto& traj : out.trajectories) traj = apply_normalization(traj, stats, dir);
  out.norm = dir == NormDirection::Forward ? std::optional<NormStats>(stats) : std::nullopt;
  return out;
}

Dataset generate_dataset(const PlantModel& plant, const std::vector<GridPoint>& grid,
                         const GenerationConfig& config) {
  if (grid.empty()) throw ConfigError("data.grid", "grid must not be empty");
  if (config.cutoff_hz && !(*config.cutoff_hz > 0.0 && *config.cutoff_hz < 0.5 / config.dt))
    throw ConfigError("data.cutoff_hz", "cutoff must lie below the Nyquist rate of dt");
  if (config.downsample_factor < 1)
    throw ConfigError("data.downsample", "downsample factor must be >= 1");

  Dataset ds;
  ds.manifest["plant"] = to_string(plant.kind());
  ds.manifest["dt"] = std::to_string(config.dt);
  ds.manifest["duration"] = std::to_string(config.duration);
  ds.manifest["sigma_x"] = std::to_string(config.sigma_x);
  ds.manifest["cutoff_hz"] = config.cutoff_hz ? std::to_string(*config.cutoff_hz) : "none";
  ds.manifest["downsample_factor"] = std::to_string(config.downsample_factor);
  ds.manifest["seed"] = std::to_string(config.seed);
  ds.manifest["grid_size"] = std::to_string(grid.size());

  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& point = grid[i];
    Trajectory traj = simulate(plant, point.x0, PiecewiseConstantInput::constant(point.u),
                               config.dt, config.duration, config.integrator);
    if (config.sigma_x > 0.0)
      traj = add_noise(traj, config.sigma_x, Rng::derive(config.seed, i).next_u64());
    if (config.cutoff_hz) traj = zero_phase_lowpass(traj, *config.cutoff_hz);
    if (config.downsample_factor > 1) traj = downsample(traj, config.downsample_factor);
    traj.meta["grid_index"] = std::to_string(i);
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

}  // namespace lfi
