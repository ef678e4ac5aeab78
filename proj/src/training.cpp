#include "lfinode/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace lfi {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Lfi: return "lfi";
    case TrainMode::Vanilla: return "vanilla";
    case TrainMode::Narx: return "narx";
  }
  return "unknown";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "lfi") return TrainMode::Lfi;
  if (name == "vanilla") return TrainMode::Vanilla;
  if (name == "narx") return TrainMode::Narx;
  throw ConfigError("train.mode", "unknown mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(lambda1 > 0.0)) throw ConfigError("train.lambda1", "lambda1 must be > 0");
  if (lambda2 < 0.0) throw ConfigError("train.lambda2", "lambda2 must be >= 0");
  if (window_len < 2) throw ConfigError("train.window_len", "window length must be >= 2");
  if (batch_size < 1) throw ConfigError("train.batch_size", "batch size must be >= 1");
  if (iterations < 1) throw ConfigError("train.iterations", "iterations must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr", "learning rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1", "beta1 in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2", "beta2 in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps", "eps must be > 0");
  if (hidden.empty()) throw ConfigError("train.hidden", "need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train.hidden", "hidden sizes must be positive");
  if (eq_window_divisor < 1) throw ConfigError("train.eq_window_divisor", "divisor must be >= 1");
  if (!(eq_residual_max > 0.0)) throw ConfigError("train.eq_residual_max", "threshold must be > 0");
}

void write_train_log(const TrainLog& log, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open train log for writing: " + file.string());
  out << "iteration,L_data,L_jac,L_total,grad_norm,wall_ms\n";
  for (const auto& r : log.records) {
    out << r.iteration << ',' << format_double(r.l_data) << ',' << format_double(r.l_jac) << ','
        << format_double(r.l_total) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.wall_ms) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing train log: " + file.string());
}

double data_loss(const Matrix& predicted, const Matrix& reference) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols())
    throw DimensionError("data_loss: shape mismatch");
  if (predicted.rows() == 0) throw DimensionError("data_loss: empty window");
  return (predicted - reference).squaredNorm() / static_cast<double>(predicted.rows());
}

double total_loss(double l_data, double l_jac, double lambda1, double lambda2) {
  return lambda1 * l_data + lambda2 * l_jac;
}

std::vector<WindowRef> sample_windows(const Dataset& ds, int window_len, int batch_size, Rng& rng) {
  if (ds.trajectories.empty()) throw TooShortError("sample_windows: empty dataset");
  for (const auto& traj : ds.trajectories)
    if (traj.n_samples() < window_len + 1)
      throw TooShortError("sample_windows: trajectory shorter than window_len + 1");

  std::vector<WindowRef> out;
  out.reserve(batch_size);
  const auto n_traj = static_cast<std::uint64_t>(ds.trajectories.size());
  for (int b = 0; b < batch_size; ++b) {
    WindowRef ref;
    ref.trajectory = static_cast<int>(rng.below(n_traj));
    const auto span =
        static_cast<std::uint64_t>(ds.trajectories[ref.trajectory].n_samples() - window_len);
    ref.start = static_cast<int>(rng.below(span));
    out.push_back(ref);
  }
  return out;
}

AdamState AdamState::zeros_like(const MlpParams& p) {
  AdamState s;
  s.m = MlpGrad::zeros_like(p);
  s.v = MlpGrad::zeros_like(p);
  return s;
}

void adam_step(MlpParams& params, const MlpGrad& grad, AdamState& state, const TrainConfig& cfg) {
  if (grad.weights.size() != params.weights.size())
    throw DimensionError("adam_step: gradient/parameter layer count mismatch");
  state.step += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double scale = cfg.lr / corr1;

  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    if (grad.weights[i].rows() != params.weights[i].rows() ||
        grad.weights[i].cols() != params.weights[i].cols())
      throw DimensionError("adam_step: weight shape mismatch at layer " + std::to_string(i));
    state.m.weights[i] = b1 * state.m.weights[i] + (1.0 - b1) * grad.weights[i];
    state.v.weights[i] =
        b2 * state.v.weights[i].array().matrix() + (1.0 - b2) * grad.weights[i].array().square().matrix();
    params.weights[i].array() -=
        scale * state.m.weights[i].array() /
        ((state.v.weights[i].array() / corr2).sqrt() + cfg.adam_eps);

    state.m.biases[i] = b1 * state.m.biases[i] + (1.0 - b1) * grad.biases[i];
    state.v.biases[i] =
        b2 * state.v.biases[i].array().matrix() + (1.0 - b2) * grad.biases[i].array().square().matrix();
    params.biases[i].array() -=
        scale * state.m.biases[i].array() / ((state.v.biases[i].array() / corr2).sqrt() + cfg.adam_eps);
  }
}

LatentFeatureSet precompute_latent_features(const Dataset& ds, const TrainConfig& cfg) {
  LatentFeatureSet set;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& traj = ds.trajectories[i];
    const std::string tag = "traj " + std::to_string(i);
    try {
      const int window = std::max(2, traj.n_samples() / cfg.eq_window_divisor);
      const EquilibriumEstimate eq = detect_equilibrium(traj, window);
      if (eq.residual > cfg.eq_residual_max) {
        set.skipped.push_back(tag + ": never settles (residual " + std::to_string(eq.residual) + ")");
        continue;
      }
      const std::vector<int> idx = select_neighbors(traj, eq, cfg.neighbors);
      const JacobianEstimate est = estimate_jacobian(traj, eq, idx);
      LatentFeature feat;
      feat.trajectory = static_cast<int>(i);
      feat.x_ss = eq.x_ss;
      feat.u_ss = traj.inputs.middleRows(eq.window_begin, eq.window_end - eq.window_begin)
                      .colwise()
                      .mean()
                      .transpose();
      feat.j_ref = est.j_ref;
      feat.cond = est.cond;
      feat.eq_residual = eq.residual;
      set.features.push_back(std::move(feat));
    } catch (const InsufficientSamplesError& e) {
      set.skipped.push_back(tag + ": " + e.what());
    } catch (const RankDeficientError& e) {
      set.skipped.push_back(tag + ": " + e.what());
    } catch (const TooShortError& e) {
      set.skipped.push_back(tag + ": " + e.what());
    }
  }
  return set;
}

namespace {

struct LossAccumulator {
  double value = 0.0;
  int count = 0;
  void add(double v) {
    value += v;
    ++count;
  }
  double mean() const { return count > 0 ? value / count : 0.0; }
};

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode == TrainMode::Narx)
    throw ConfigError("train.mode", "use train_narx for the discrete baseline");
  if (!ds.norm)
    throw ConfigError("dataset", "train expects a normalized dataset with attached stats");
  if (ds.trajectories.empty()) throw TooShortError("train: empty dataset");

  const int dx = ds.state_dim();
  const int du = ds.input_dim();
  const double h = ds.trajectories.front().dt;

  TrainResult result;
  std::vector<int> dims;
  dims.push_back(dx + du);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(dx);
  result.model = init_mlp(dims, cfg.activation, cfg.seed);
  result.model.norm = *ds.norm;

  result.latent = precompute_latent_features(ds, cfg);
  for (const auto& s : result.latent.skipped)
    result.log.warnings.push_back("latent feature skipped: " + s);

  const bool use_jac_grad = cfg.mode == TrainMode::Lfi && cfg.lambda2 > 0.0 &&
                            !result.latent.features.empty();

  Rng window_rng = Rng::derive(cfg.seed, 0x77696e646f77ULL);
  Rng subset_rng = Rng::derive(cfg.seed, 0x6a616373ULL);
  AdamState opt = AdamState::zeros_like(result.model);
  MlpGrad grad = MlpGrad::zeros_like(result.model);

  int consecutive_bad = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto windows = sample_windows(ds, cfg.window_len, cfg.batch_size, window_rng);
    grad.set_zero();

    LossAccumulator l_data;
    for (const auto& w : windows) {
      const auto& traj = ds.trajectories[w.trajectory];
      const Matrix inputs = traj.inputs.middleRows(w.start, cfg.window_len);
      const Matrix reference = traj.states.middleRows(w.start + 1, cfg.window_len);
      const Vector x0 = traj.states.row(w.start).transpose();

      const RolloutResult rollout = rollout_window(result.model, x0, inputs, h, /*record=*/true);
      if (!rollout.finite) {
        ++result.log.skipped_windows;
        continue;
      }
      const WindowLossGrad wg = grad_forward_loss(result.model, rollout, reference);
      l_data.add(wg.loss);
      grad.add_scaled(wg.grad, 1.0);
    }
    if (l_data.count > 0) {
      // grad currently holds the sum over successful windows; the loss is
      // their mean, so scale accordingly and fold in lambda1.
      const double s = cfg.lambda1 / static_cast<double>(l_data.count);
      for (auto& wgt : grad.weights) wgt *= s;
      for (auto& b : grad.biases) b *= s;
    }

    // Jacobian-matching term: value always logged so vanilla and lfi runs
    // with the same seed produce identical records; gradient only when it
    // actually steers the update.
    LossAccumulator l_jac;
    if (!result.latent.features.empty()) {
      std::vector<int> picks;
      const int total = static_cast<int>(result.latent.features.size());
      if (cfg.jac_subset > 0 && cfg.jac_subset < total) {
        for (int s = 0; s < cfg.jac_subset; ++s)
          picks.push_back(static_cast<int>(subset_rng.below(total)));
      } else {
        picks.resize(total);
        for (int s = 0; s < total; ++s) picks[s] = s;
      }
      for (int pick : picks) {
        const auto& feat = result.latent.features[pick];
        const JacLossGrad jg =
            jac_loss_and_grad(result.model, feat.x_ss, feat.u_ss, feat.j_ref);
        l_jac.add(jg.loss);
        if (use_jac_grad)
          grad.add_scaled(jg.grad, cfg.lambda2 / static_cast<double>(picks.size()));
      }
    }

    // A batch where every rollout diverged carries no usable signal; treat
    // it as a non-finite iteration so persistent blow-up trips the abort.
    const double iter_l_data =
        l_data.count > 0 ? l_data.mean() : std::numeric_limits<double>::quiet_NaN();
    const double iter_l_jac = l_jac.mean();
    const double iter_total = total_loss(iter_l_data, iter_l_jac, cfg.lambda1, cfg.lambda2);

    if (!std::isfinite(iter_total)) {
      if (++consecutive_bad >= 10)
        throw NonConvergenceError("train: loss non-finite for 10 consecutive iterations");
    } else {
      consecutive_bad = 0;
    }

    adam_step(result.model, grad, opt, cfg);

    TrainRecord rec;
    rec.iteration = iter;
    rec.l_data = iter_l_data;
    rec.l_jac = iter_l_jac;
    rec.l_total = iter_total;
    rec.grad_norm = grad.norm();
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    result.log.records.push_back(rec);
  }
  return result;
}

NarxTrainResult train_narx(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (!ds.norm)
    throw ConfigError("dataset", "train_narx expects a normalized dataset with attached stats");
  if (ds.trajectories.empty()) throw TooShortError("train_narx: empty dataset");

  const int dx = ds.state_dim();
  const int du = ds.input_dim();

  NarxTrainResult result;
  std::vector<int> dims;
  dims.push_back(dx + du);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(dx);
  result.model.params = init_mlp(dims, cfg.activation, cfg.seed);
  result.model.params.norm = *ds.norm;
  result.model.dt = ds.trajectories.front().dt;

  // Budget parity with the windowed trainer: one iteration consumes
  // batch_size * window_len one-step samples.
  const int samples_per_iter = cfg.batch_size * cfg.window_len;

  Rng rng = Rng::derive(cfg.seed, 0x6e617278ULL);
  AdamState opt = AdamState::zeros_like(result.model.params);
  MlpGrad grad = MlpGrad::zeros_like(result.model.params);
  int consecutive_bad = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    grad.set_zero();
    double loss_sum = 0.0;
    MlpTape tape;
    for (int s = 0; s < samples_per_iter; ++s) {
      const int ti = static_cast<int>(rng.below(ds.trajectories.size()));
      const auto& traj = ds.trajectories[ti];
      const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(traj.n_samples() - 1)));
      const Vector x = traj.states.row(k).transpose();
      const Vector u = traj.inputs.row(k).transpose();
      const Vector target = traj.states.row(k + 1).transpose();

      const Vector pred = mlp_forward(result.model.params, x, u, &tape);
      const Vector resid = pred - target;
      loss_sum += resid.squaredNorm();
      mlp_vjp(result.model.params, tape, (2.0 / samples_per_iter) * resid, grad);
    }
    const double l_data = loss_sum / samples_per_iter;
    if (!std::isfinite(l_data)) {
      if (++consecutive_bad >= 10)
        throw NonConvergenceError("train_narx: loss non-finite for 10 consecutive iterations");
    } else {
      consecutive_bad = 0;
    }

    adam_step(result.model.params, grad, opt, cfg);

    TrainRecord rec;
    rec.iteration = iter;
    rec.l_data = l_data;
    rec.l_jac = 0.0;
    rec.l_total = cfg.lambda1 * l_data;
    rec.grad_norm = grad.norm();
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    result.log.records.push_back(rec);
  }
  return result;
}

namespace {

PiecewiseConstantInput normalize_schedule(const PiecewiseConstantInput& input, const NormStats& norm) {
  PiecewiseConstantInput out = input;
  for (auto& v : out.values) v = (v - norm.input_mean).cwiseQuotient(norm.input_std);
  return out;
}

}  // namespace

Trajectory predict(const MlpParams& model, const Vector& x0, const PiecewiseConstantInput& input,
                   double dt, double duration, const IntegratorConfig& config) {
  model.validate();
  const auto& norm = model.norm;
  if (x0.size() != model.state_dim()) throw DimensionError("predict: x0 dim mismatch");

  const Vector x0_n = (x0 - norm.state_mean).cwiseQuotient(norm.state_std);
  const PiecewiseConstantInput input_n = normalize_schedule(input, norm);
  const OdeField field = [&model](const Vector& x, const Vector& u) {
    return mlp_forward(model, x, u);
  };
  SolveResult res = solve_adaptive(field, x0_n, input_n, 0.0, duration, dt, config);
  Trajectory out = apply_normalization(res.trajectory, norm, NormDirection::Inverse);
  // Report the physical input schedule, not the normalized one.
  for (int k = 0; k < out.n_samples(); ++k) out.inputs.row(k) = input.at(out.time_at(k)).transpose();
  out.meta["model"] = "node";
  if (!res.complete) {
    out.meta["truncated"] = "1";
    out.meta["truncated_at"] = std::to_string(res.t_reached);
  }
  return out;
}

Trajectory predict(const NarxModel& model, const Vector& x0, const PiecewiseConstantInput& input,
                   double dt, double duration) {
  model.params.validate();
  if (std::abs(dt - model.dt) > 1e-12 * std::max(1.0, std::abs(model.dt)))
    throw DtMismatchError("narx predict: requested dt " + std::to_string(dt) +
                          " differs from training dt " + std::to_string(model.dt));
  const long n = std::max<long>(2, std::lround(duration / dt));
  const auto& norm = model.params.norm;

  Trajectory out;
  out.dt = dt;
  out.t0 = 0.0;
  out.states.resize(n, model.params.state_dim());
  out.inputs.resize(n, norm.input_mean.size());
  Vector x_n = (x0 - norm.state_mean).cwiseQuotient(norm.state_std);
  out.states.row(0) = x0.transpose();
  for (long k = 0; k < n; ++k) {
    const Vector u = input.at(static_cast<double>(k) * dt);
    out.inputs.row(k) = u.transpose();
    if (k == 0) continue;
    const Vector u_prev_n =
        (input.at(static_cast<double>(k - 1) * dt) - norm.input_mean).cwiseQuotient(norm.input_std);
    x_n = mlp_forward(model.params, x_n, u_prev_n);
    if (!all_finite(x_n)) {
      out.states.conservativeResize(k, Eigen::NoChange);
      out.inputs.conservativeResize(k, Eigen::NoChange);
      out.meta["truncated"] = "1";
      out.meta["truncated_at"] = std::to_string(static_cast<double>(k) * dt);
      break;
    }
    out.states.row(k) = (norm.state_mean + x_n.cwiseProduct(norm.state_std)).transpose();
  }
  out.meta["model"] = "narx";
  return out;
}

}  // namespace lfi
