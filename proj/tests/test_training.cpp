#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lfinode/plants.hpp"
#include "lfinode/training.hpp"
#include "test_util.hpp"

using namespace lfi;

namespace {

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

const Matrix kDemoA = [] {
  Matrix a(2, 2);
  a << 0, 1, -2, -3;
  return a;
}();

/// Small noiseless linear-plant dataset, normalized, for fast training runs.
Dataset linear_dataset(int n_traj, double dt, double duration, std::uint64_t seed) {
  const PlantModel plant = PlantModel::linear(kDemoA, Matrix::Zero(2, 1));
  std::vector<GridPoint> grid;
  Rng rng(seed);
  for (int i = 0; i < n_traj; ++i) grid.push_back({vec1(0), test::random_vector(2, rng, 1.2)});
  GenerationConfig cfg;
  cfg.dt = dt;
  cfg.duration = duration;
  cfg.seed = seed;
  Dataset raw = generate_dataset(plant, grid, cfg);
  const NormStats stats = fit_normalization(raw);
  return apply_normalization(raw, stats, NormDirection::Forward);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden = {8, 8};
  cfg.window_len = 10;
  cfg.batch_size = 4;
  cfg.iterations = 40;
  cfg.lr = 0.01;
  cfg.neighbors.eps_min = 1e-3;
  cfg.neighbors.r_max = 1.5;
  cfg.neighbors.n_max = 1 << 28;
  return cfg;
}

bool same_params(const MlpParams& a, const MlpParams& b) {
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    if ((a.weights[i] - b.weights[i]).norm() != 0.0) return false;
    if ((a.biases[i] - b.biases[i]).norm() != 0.0) return false;
  }
  return true;
}

bool same_records(const TrainLog& a, const TrainLog& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.iteration != rb.iteration || ra.l_data != rb.l_data || ra.l_jac != rb.l_jac ||
        ra.l_total != rb.l_total || ra.grad_norm != rb.grad_norm)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("data_loss") {
  Matrix p(1, 1), r(1, 1);
  p << 2;
  r << 0;
  CHECK(data_loss(p, p) == 0.0);
  CHECK(data_loss(p, r) == 4.0);
  Matrix p2 = 2.0 * p;
  CHECK(data_loss(p2, r) == 16.0);
  Rng rng(1);
  const Matrix a = test::random_matrix(5, 2, rng);
  const Matrix b = test::random_matrix(5, 2, rng);
  CHECK(data_loss(a + 2.0 * (a - b) - (a - b), b) == doctest::Approx(4.0 * data_loss(a, b)));
  CHECK_THROWS_AS(data_loss(a, Matrix::Zero(4, 2)), DimensionError);
}

TEST_CASE("total_loss") {
  CHECK(total_loss(0.7, 0.3, 1.0, 0.0) == doctest::Approx(0.7));
  CHECK(total_loss(0.2, 0.5, 1.0, 0.1) == doctest::Approx(0.25));
  CHECK(total_loss(0.0, 0.0, 2.0, 3.0) == 0.0);
}

TEST_CASE("sample_windows") {
  Rng rng(2);

  SUBCASE("trajectory of length K+1 only ever yields start 0") {
    Dataset ds;
    Trajectory t;
    t.dt = 0.1;
    t.states = test::random_matrix(11, 1, rng);
    t.inputs = Matrix::Zero(11, 1);
    ds.trajectories.push_back(t);
    Rng wr(3);
    for (const auto& w : sample_windows(ds, 10, 50, wr)) CHECK(w.start == 0);
  }

  SUBCASE("two equal trajectories are drawn evenly") {
    Dataset ds;
    for (int i = 0; i < 2; ++i) {
      Trajectory t;
      t.dt = 0.1;
      t.states = test::random_matrix(100, 1, rng);
      t.inputs = Matrix::Zero(100, 1);
      ds.trajectories.push_back(t);
    }
    Rng wr(4);
    const auto draws = sample_windows(ds, 10, 10000, wr);
    int first = 0;
    for (const auto& w : draws) {
      if (w.trajectory == 0) ++first;
      CHECK(w.start >= 0);
      CHECK(w.start <= 89);
    }
    CHECK(std::abs(first / 10000.0 - 0.5) <= 0.03);
  }

  SUBCASE("same seed reproduces the batch sequence") {
    Dataset ds;
    Trajectory t;
    t.dt = 0.1;
    t.states = test::random_matrix(60, 1, rng);
    t.inputs = Matrix::Zero(60, 1);
    ds.trajectories.push_back(t);
    Rng r1(5), r2(5);
    const auto a = sample_windows(ds, 10, 32, r1);
    const auto b = sample_windows(ds, 10, 32, r2);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].trajectory == b[i].trajectory);
      CHECK(a[i].start == b[i].start);
    }
  }

  SUBCASE("short trajectory raises") {
    Dataset ds;
    Trajectory t;
    t.dt = 0.1;
    t.states = test::random_matrix(10, 1, rng);
    t.inputs = Matrix::Zero(10, 1);
    ds.trajectories.push_back(t);
    Rng wr(6);
    CHECK_THROWS_AS(sample_windows(ds, 10, 4, wr), TooShortError);
  }
}

TEST_CASE("adam_step") {
  TrainConfig cfg = small_config();
  Rng rng(7);
  MlpParams p = test::random_mlp({3, 4, 2}, Activation::Tanh, rng);
  AdamState state = AdamState::zeros_like(p);

  SUBCASE("zero gradient leaves parameters unchanged and bumps the step") {
    const MlpParams before = p;
    adam_step(p, MlpGrad::zeros_like(p), state, cfg);
    CHECK(same_params(before, p));
    CHECK(state.step == 1);
  }

  SUBCASE("first step moves each coordinate by about lr against the sign") {
    MlpGrad g = MlpGrad::zeros_like(p);
    for (auto& w : g.weights) w.setConstant(2.0);
    g.weights[0](0, 0) = -1.0;
    const MlpParams before = p;
    adam_step(p, g, state, cfg);
    // Bias-corrected t=1 update is -lr * g / (|g| + eps'), i.e. -lr*sign(g).
    CHECK(p.weights[0](0, 0) - before.weights[0](0, 0) ==
          doctest::Approx(cfg.lr).epsilon(1e-6));
    CHECK(p.weights[1](0, 0) - before.weights[1](0, 0) ==
          doctest::Approx(-cfg.lr).epsilon(1e-6));
  }

  SUBCASE("identical calls from identical state give identical results") {
    MlpGrad g = MlpGrad::zeros_like(p);
    for (auto& w : g.weights) w.setRandom();
    MlpParams p2 = p;
    AdamState s2 = AdamState::zeros_like(p2);
    adam_step(p, g, state, cfg);
    adam_step(p2, g, s2, cfg);
    CHECK(same_params(p, p2));
  }
}

TEST_CASE("precompute_latent_features") {
  SUBCASE("linear plant features recover A in normalized coordinates") {
    // J_ref on z-scored data obeys the similarity S^{-1} A S.
    const PlantModel plant = PlantModel::linear(kDemoA, Matrix::Zero(2, 1));
    std::vector<GridPoint> grid;
    Rng rng(8);
    for (int i = 0; i < 4; ++i) grid.push_back({vec1(0), test::random_vector(2, rng, 1.2)});
    GenerationConfig gcfg;
    gcfg.dt = 2e-4;
    gcfg.duration = 25.0;
    Dataset raw = generate_dataset(plant, grid, gcfg);
    const NormStats stats = fit_normalization(raw);
    const Dataset ds = apply_normalization(raw, stats, NormDirection::Forward);

    TrainConfig cfg = small_config();
    cfg.neighbors.eps_min = 1e-3;
    cfg.neighbors.r_max = 1.0;
    const auto latent = precompute_latent_features(ds, cfg);
    REQUIRE(latent.features.size() == 4);
    const Matrix s = stats.state_std.asDiagonal();
    const Matrix a_norm = s.inverse() * kDemoA * s;
    for (const auto& f : latent.features) {
      CHECK((f.j_ref - a_norm).norm() <= 1e-5 * a_norm.norm());
      CHECK(f.u_ss.size() == 1);
    }
  }

  SUBCASE("never-settling trajectories are excluded with a reason") {
    const PlantModel plant = PlantModel::gfm_droop();
    const Vector x0 = *plant.find_equilibrium(vec2(1, 1), vec2(0.1, 0.5));
    GenerationConfig gcfg;
    gcfg.dt = 1e-3;
    gcfg.duration = 20.0;
    Dataset raw = generate_dataset(
        plant, {{vec2(0.95, 1.0), x0}, {vec2(0.5, 0.9), x0}}, gcfg);
    const NormStats stats = fit_normalization(raw);
    const Dataset ds = apply_normalization(raw, stats, NormDirection::Forward);

    TrainConfig cfg = small_config();
    cfg.eq_residual_max = 0.02;
    cfg.neighbors.eps_min = 1e-4;
    cfg.neighbors.r_max = 2.0;
    const auto latent = precompute_latent_features(ds, cfg);
    CHECK(latent.features.size() == 1);
    CHECK(latent.features[0].trajectory == 0);
    REQUIRE(latent.skipped.size() == 1);
    CHECK(latent.skipped[0].find("traj 1") != std::string::npos);
  }
}

TEST_CASE("vanilla mode is exactly lfi with lambda2 zero") {
  const Dataset ds = linear_dataset(3, 1e-2, 3.0, 11);
  TrainConfig cfg = small_config();
  cfg.seed = 21;
  cfg.lambda2 = 0.0;
  cfg.mode = TrainMode::Lfi;
  const TrainResult a = train(ds, cfg);
  cfg.mode = TrainMode::Vanilla;
  const TrainResult b = train(ds, cfg);
  CHECK(same_params(a.model, b.model));
  CHECK(same_records(a.log, b.log));
}

TEST_CASE("training is deterministic per seed") {
  const Dataset ds = linear_dataset(3, 1e-2, 3.0, 12);
  TrainConfig cfg = small_config();
  cfg.seed = 5;
  const TrainResult a = train(ds, cfg);
  const TrainResult b = train(ds, cfg);
  CHECK(same_params(a.model, b.model));
  CHECK(same_records(a.log, b.log));
  cfg.seed = 6;
  const TrainResult c = train(ds, cfg);
  CHECK_FALSE(same_params(a.model, c.model));
}

TEST_CASE("doubling both loss weights doubles losses and gradients at step one") {
  const Dataset ds = linear_dataset(3, 1e-2, 8.0, 13);
  TrainConfig cfg = small_config();
  cfg.iterations = 1;
  cfg.seed = 9;
  cfg.lambda1 = 1.0;
  cfg.lambda2 = 0.01;
  const TrainResult base = train(ds, cfg);
  TrainConfig doubled = cfg;
  doubled.lambda1 = 2.0;
  doubled.lambda2 = 0.02;
  const TrainResult twice = train(ds, doubled);

  const auto& r1 = base.log.records[0];
  const auto& r2 = twice.log.records[0];
  CHECK(r2.l_total == 2.0 * r1.l_total);
  CHECK(r2.grad_norm == 2.0 * r1.grad_norm);

  // Sign pattern of the first update is unchanged.
  const MlpParams init = [&] {
    std::vector<int> dims = {3, 8, 8, 2};
    MlpParams p = init_mlp(dims, cfg.activation, cfg.seed);
    p.norm = *ds.norm;
    return p;
  }();
  for (std::size_t layer = 0; layer < init.weights.size(); ++layer) {
    const Matrix d1 = base.model.weights[layer] - init.weights[layer];
    const Matrix d2 = twice.model.weights[layer] - init.weights[layer];
    for (Eigen::Index r = 0; r < d1.rows(); ++r)
      for (Eigen::Index c = 0; c < d1.cols(); ++c)
        if (std::abs(d1(r, c)) > 1e-12)
          CHECK(d1(r, c) * d2(r, c) >= 0.0);
  }
}

TEST_CASE("end-to-end composite gradient matches finite differences") {
  Rng rng(14);
  for (int trial = 0; trial < 4; ++trial) {
    const MlpParams net = test::random_mlp({3, 5, 2}, Activation::Tanh, rng);
    const Vector x0 = test::random_vector(2, rng, 0.5);
    const Matrix inputs = test::random_matrix(3, 1, rng);
    const Matrix reference = test::random_matrix(3, 2, rng, 0.5);
    const Vector x_ss = test::random_vector(2, rng, 0.3);
    const Vector u_ss = test::random_vector(1, rng, 0.3);
    const Matrix j_ref = test::random_matrix(2, 2, rng);
    const double h = 0.05, lambda1 = 1.0, lambda2 = 0.05;

    const auto rollout = rollout_window(net, x0, inputs, h, true);
    REQUIRE(rollout.finite);
    const auto wg = grad_forward_loss(net, rollout, reference);
    const auto jg = jac_loss_and_grad(net, x_ss, u_ss, j_ref);
    MlpGrad total = MlpGrad::zeros_like(net);
    total.add_scaled(wg.grad, lambda1);
    total.add_scaled(jg.grad, lambda2);

    const auto loss_of = [&](const MlpParams& p) {
      const auto r = rollout_window(p, x0, inputs, h, false);
      const double ld = (r.states - reference).squaredNorm() / 3.0;
      const double lj = (mlp_state_jacobian(p, x_ss, u_ss) - j_ref).squaredNorm();
      return lambda1 * ld + lambda2 * lj;
    };
    const MlpGrad fd = test::fd_param_gradient(net, loss_of);
    CHECK(test::grad_relative_error(total, fd) <= 1e-4);
  }
}

TEST_CASE("training reduces the trajectory loss on a linear plant") {
  const Dataset ds = linear_dataset(4, 1e-2, 8.0, 15);
  TrainConfig cfg = small_config();
  cfg.iterations = 400;
  cfg.lr = 0.005;
  cfg.seed = 3;
  const TrainResult res = train(ds, cfg);
  // Per-iteration values fluctuate with the batch draw; compare medians of
  // the first and last stretches.
  const auto median_range = [&](int begin, int end) {
    std::vector<double> v;
    for (int i = begin; i < end; ++i) v.push_back(res.log.records[i].l_data);
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double head = median_range(0, 10);
  const double tail = median_range(350, 400);
  CHECK(tail < head / 5.0);
  CHECK(tail <= 2e-3);
  CHECK(res.log.records.size() == 400);
}

TEST_CASE("jacobian regularizer lowers the post-hoc jacobian loss, median over seeds") {
  const Dataset ds = linear_dataset(4, 1e-2, 8.0, 16);
  TrainConfig cfg = small_config();
  cfg.iterations = 150;
  cfg.lambda2 = 0.05;

  const auto post_hoc = [&](const MlpParams& model, const LatentFeatureSet& latent) {
    double acc = 0.0;
    for (const auto& f : latent.features)
      acc += jac_loss_and_grad(model, f.x_ss, f.u_ss, f.j_ref).loss;
    return acc / latent.features.size();
  };

  std::vector<double> lfi_vals, vanilla_vals;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    cfg.mode = TrainMode::Lfi;
    const TrainResult lfi = train(ds, cfg);
    TrainConfig vcfg = cfg;
    vcfg.mode = TrainMode::Vanilla;
    vcfg.lambda2 = 0.0;
    const TrainResult vanilla = train(ds, vcfg);
    REQUIRE(!lfi.latent.features.empty());
    lfi_vals.push_back(post_hoc(lfi.model, lfi.latent));
    vanilla_vals.push_back(post_hoc(vanilla.model, lfi.latent));
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(lfi_vals) <= median(vanilla_vals));
}

TEST_CASE("narx baseline") {
  SUBCASE("constant data teaches the identity map") {
    Dataset ds;
    Trajectory t;
    t.dt = 0.01;
    t.states.resize(200, 2);
    for (int k = 0; k < 200; ++k) t.states.row(k) = vec2(1.3, -0.4).transpose();
    t.inputs = Matrix::Ones(200, 1);
    ds.trajectories.push_back(t);
    const NormStats stats = fit_normalization(ds);
    const Dataset norm = apply_normalization(ds, stats, NormDirection::Forward);

    TrainConfig cfg = small_config();
    cfg.iterations = 300;
    const NarxTrainResult res = train_narx(norm, cfg);

    double worst = 0.0;
    const auto& traj = norm.trajectories[0];
    for (int k = 0; k + 1 < traj.n_samples(); ++k) {
      const Vector pred = mlp_forward(res.model.params, traj.states.row(k).transpose(),
                                      traj.inputs.row(k).transpose());
      worst = std::max(worst, (pred - traj.states.row(k + 1).transpose()).norm());
    }
    CHECK(worst <= 1e-4);
  }

  SUBCASE("same seed gives identical logs") {
    const Dataset ds = linear_dataset(2, 1e-2, 2.0, 17);
    TrainConfig cfg = small_config();
    cfg.iterations = 30;
    cfg.seed = 4;
    const NarxTrainResult a = train_narx(ds, cfg);
    const NarxTrainResult b = train_narx(ds, cfg);
    CHECK(same_records(a.log, b.log));
    CHECK(same_params(a.model.params, b.model.params));
  }

  SUBCASE("closed-loop rollout compounds beyond the one-step error") {
    const Dataset train_ds = linear_dataset(4, 1e-2, 3.0, 18);
    TrainConfig cfg = small_config();
    cfg.iterations = 400;
    cfg.seed = 2;
    const NarxTrainResult res = train_narx(train_ds, cfg);

    // Held-out trajectory from a fresh initial condition, same pipeline.
    const Dataset held = linear_dataset(1, 1e-2, 3.0, 99);
    const auto& traj = held.trajectories[0];
    double one_step = 0.0;
    for (int k = 0; k + 1 < traj.n_samples(); ++k) {
      const Vector pred = mlp_forward(res.model.params, traj.states.row(k).transpose(),
                                      traj.inputs.row(k).transpose());
      one_step += (pred - traj.states.row(k + 1).transpose()).squaredNorm();
    }
    one_step = std::sqrt(one_step / (traj.n_samples() - 1));

    Vector x = traj.states.row(0).transpose();
    double closed = 0.0;
    for (int k = 0; k + 1 < traj.n_samples(); ++k) {
      x = mlp_forward(res.model.params, x, traj.inputs.row(k).transpose());
      closed += (x - traj.states.row(k + 1).transpose()).squaredNorm();
    }
    closed = std::sqrt(closed / (traj.n_samples() - 1));
    CHECK(closed >= one_step);
  }
}

TEST_CASE("predict") {
  SUBCASE("zero-weight neural model holds the initial state") {
    MlpParams p = init_mlp({3, 4, 2}, Activation::Tanh, 0);
    for (auto& w : p.weights) w.setZero();
    const Trajectory traj =
        predict(p, vec2(0.4, -0.1), PiecewiseConstantInput::constant(vec1(0.3)), 0.01, 0.5);
    CHECK((traj.states.rowwise() - vec2(0.4, -0.1).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("narx refuses a foreign dt") {
    NarxModel model;
    model.params = init_mlp({3, 4, 2}, Activation::Tanh, 0);
    model.dt = 0.01;
    CHECK_THROWS_AS(predict(model, vec2(0, 0), PiecewiseConstantInput::constant(vec1(0)), 0.02, 1.0),
                    DtMismatchError);
  }
}

TEST_CASE("persistent blow-up aborts with NonConvergence") {
  const Dataset ds = linear_dataset(2, 1e-2, 2.0, 19);
  TrainConfig cfg = small_config();
  cfg.iterations = 100;
  // tanh saturates and keeps every rollout finite no matter how large the
  // weights get; relu lets the blow-up reach non-finite states.
  cfg.activation = Activation::Relu;
  cfg.lr = 1e14;
  CHECK_THROWS_AS(train(ds, cfg), NonConvergenceError);
}

TEST_CASE("train log csv") {
  const Dataset ds = linear_dataset(2, 1e-2, 2.0, 20);
  TrainConfig cfg = small_config();
  cfg.iterations = 7;
  const TrainResult res = train(ds, cfg);
  const auto file = std::filesystem::temp_directory_path() / "lfinode_train_log.csv";
  write_train_log(res.log, file);
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,L_data,L_jac,L_total,grad_norm,wall_ms");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 7);
}
