#pragma once

#include <optional>
#include <vector>

#include "lfinode/integrate.hpp"
#include "lfinode/plants.hpp"
#include "lfinode/trajectory.hpp"

namespace lfi {

/// Simulate the plant with the adaptive solver, sampled on the uniform grid
/// t = k*dt for k = 0..round(duration/dt)-1. On integration failure the
/// partial trajectory is returned with meta["truncated"] set.
Trajectory simulate(const PlantModel& plant, const Vector& x0, const PiecewiseConstantInput& input,
                    double dt, double duration, const IntegratorConfig& config = {});

/// Adds i.i.d. Gaussian(0, sigma_x^2) noise to every state entry; inputs
/// untouched. Deterministic per seed.
Trajectory add_noise(const Trajectory& traj, double sigma_x, std::uint64_t seed);

/// Forward-backward second-order Butterworth low-pass on each state channel
/// (zero phase by construction, DC gain 1). Inputs untouched.
Trajectory zero_phase_lowpass(const Trajectory& traj, double cutoff_hz);

enum class DiffScheme { Central, Forward };

/// Numerical derivative of the state channels: central differences at
/// interior samples (second-order one-sided at the ends), or plain forward
/// differences when requested.
Matrix finite_diff(const Trajectory& traj, DiffScheme scheme = DiffScheme::Central);

/// Keeps every factor-th row; dt scales accordingly.
Trajectory downsample(const Trajectory& traj, int factor);

NormStats fit_normalization(const Dataset& ds);

enum class NormDirection { Forward, Inverse };
Trajectory apply_normalization(const Trajectory& traj, const NormStats& stats, NormDirection dir);
Dataset apply_normalization(const Dataset& ds, const NormStats& stats, NormDirection dir);

struct GridPoint {
  Vector u;   // step target applied at t = 0 and held
  Vector x0;  // initial state (typically the pre-step equilibrium)
};

struct GenerationConfig {
  double dt = 2e-5;
  double duration = 1.0;
  double sigma_x = 0.0;
  std::optional<double> cutoff_hz;  // nullopt disables filtering
  int downsample_factor = 1;
  std::uint64_t seed = 0;
  IntegratorConfig integrator;
};

/// Full data pipeline per grid point: simulate -> add_noise -> filter ->
/// downsample. Per-trajectory noise streams derive from (seed, grid index),
/// so results are schedule-independent. Integration failures are recorded in
/// the trajectory meta, not fatal.
Dataset generate_dataset(const PlantModel& plant, const std::vector<GridPoint>& grid,
                         const GenerationConfig& config);

}  // namespace lfi
