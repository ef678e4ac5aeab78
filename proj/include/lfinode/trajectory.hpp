#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lfinode/common.hpp"

namespace lfi {

/// Uniformly sampled state/input time series. Row k holds the sample at
/// t0 + k*dt. Immutable by convention once built by the pipeline.
struct Trajectory {
  double dt = 0.0;
  double t0 = 0.0;
  Matrix states;  // N x d_x
  Matrix inputs;  // N x d_u
  std::map<std::string, std::string> meta;

  int n_samples() const { return static_cast<int>(states.rows()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  double time_at(int k) const { return t0 + k * dt; }

  /// Throws DimensionError when the invariants (N >= 2, matching row
  /// counts, dt > 0, finite values) are violated.
  void validate() const;
};

/// Per-channel z-score statistics. Channels with zero variance get std 1.
struct NormStats {
  Vector state_mean, state_std;
  Vector input_mean, input_std;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::optional<NormStats> norm;
  std::map<std::string, std::string> manifest;

  int state_dim() const { return trajectories.empty() ? 0 : trajectories.front().state_dim(); }
  int input_dim() const { return trajectories.empty() ? 0 : trajectories.front().input_dim(); }
};

/// Piecewise-constant input schedule: values[i] applies on [times[i], times[i+1]).
/// Times must be increasing; the first value extends backwards, the last forward.
struct PiecewiseConstantInput {
  std::vector<double> times;
  std::vector<Vector> values;

  static PiecewiseConstantInput constant(Vector u) { return {{0.0}, {std::move(u)}}; }

  Vector at(double t) const;
  /// Schedule change times inside (t_begin, t_end), used as integration breakpoints.
  std::vector<double> breakpoints(double t_begin, double t_end) const;
};

// --- file formats ---------------------------------------------------------

/// Shortest decimal string that parses back to the exact double; used by
/// every text serializer so identical values always print identically.
std::string format_double(double v);

/// CSV with header t,x1..x{d_x},u1..u{d_u}; round-trip exact doubles.
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& file);
Trajectory read_trajectory_csv(const std::filesystem::path& file);

/// Dataset directory: manifest.json plus one CSV per trajectory.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

nlohmann::json norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);

}  // namespace lfi
