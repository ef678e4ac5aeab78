#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lfinode/integrate.hpp"
#include "lfinode/jacest.hpp"
#include "lfinode/mlp.hpp"
#include "lfinode/trajectory.hpp"

namespace lfi {

enum class TrainMode { Lfi, Vanilla, Narx };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.01;
  int window_len = 40;
  int batch_size = 16;
  int iterations = 1200;
  double lr = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Lfi;
  std::vector<int> hidden = {64, 128, 128};
  Activation activation = Activation::Tanh;

  // Latent-feature extraction knobs.
  int eq_window_divisor = 20;      // steady window length = N / divisor
  double eq_residual_max = 0.1;    // normalized 1/s; larger means "never settled"
  NeighborParams neighbors;
  int jac_subset = 0;              // latent features per iteration; 0 = all

  void validate() const;
};

struct TrainRecord {
  int iteration = 0;
  double l_data = 0.0;
  double l_jac = 0.0;
  double l_total = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  int skipped_windows = 0;
  std::vector<std::string> warnings;
};

/// CSV columns: iteration,L_data,L_jac,L_total,grad_norm,wall_ms.
void write_train_log(const TrainLog& log, const std::filesystem::path& file);

/// (1/K) sum_k |pred_k - ref_k|_2^2.
double data_loss(const Matrix& predicted, const Matrix& reference);

double total_loss(double l_data, double l_jac, double lambda1, double lambda2);

struct WindowRef {
  int trajectory = 0;
  int start = 0;
};

/// batch_size uniform (trajectory, start) draws with start in [0, N-K-1].
std::vector<WindowRef> sample_windows(const Dataset& ds, int window_len, int batch_size, Rng& rng);

struct AdamState {
  MlpGrad m;
  MlpGrad v;
  long step = 0;

  static AdamState zeros_like(const MlpParams& p);
};

/// Standard Adam update with bias correction.
void adam_step(MlpParams& params, const MlpGrad& grad, AdamState& state, const TrainConfig& cfg);

struct LatentFeature {
  int trajectory = 0;
  Vector x_ss;
  Vector u_ss;
  Matrix j_ref;
  double cond = 0.0;
  double eq_residual = 0.0;
};

struct LatentFeatureSet {
  std::vector<LatentFeature> features;
  std::vector<std::string> skipped;  // "traj <i>: <reason>" per excluded trajectory
};

/// Runs equilibrium detection + Jacobian estimation on every trajectory
/// once, before training. Trajectories that never settle or whose
/// deviations are rank-deficient are excluded from the Jacobian loss only.
LatentFeatureSet precompute_latent_features(const Dataset& ds, const TrainConfig& cfg);

struct TrainResult {
  MlpParams model;
  TrainLog log;
  LatentFeatureSet latent;
};

/// Composite-loss training (trajectory MSE + Jacobian matching) on a
/// normalized dataset. Deterministic for a given seed; vanilla mode is
/// exactly lfi with lambda2 = 0.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// Discrete one-step baseline x_{k+1} = MLP(x_k, u_k), same network shape,
/// optimizer and iteration budget.
struct NarxModel {
  MlpParams params;
  double dt = 0.0;
};

struct NarxTrainResult {
  NarxModel model;
  TrainLog log;
};

NarxTrainResult train_narx(const Dataset& ds, const TrainConfig& cfg);

/// Open-loop prediction in physical units (normalization handled inside).
Trajectory predict(const MlpParams& model, const Vector& x0, const PiecewiseConstantInput& input,
                   double dt, double duration, const IntegratorConfig& config = {});

/// Iterated one-step map at the model's training dt; any other dt is a
/// contract violation (DtMismatchError).
Trajectory predict(const NarxModel& model, const Vector& x0, const PiecewiseConstantInput& input,
                   double dt, double duration);

}  // namespace lfi
