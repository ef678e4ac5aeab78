#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lfinode/integrate.hpp"
#include "test_util.hpp"

using namespace lfi;

namespace {

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

const OdeField kDecay = [](const Vector& x, const Vector&) { return Vector(-x); };

double rk4_global_error(double h) {
  Vector x = vec1(1.0);
  const long n = std::lround(1.0 / h);
  for (long k = 0; k < n; ++k) x = step_rk4(kDecay, x, vec1(0), h);
  return std::abs(x(0) - std::exp(-1.0));
}

}  // namespace

TEST_CASE("rk4 step basics") {
  const OdeField zero = [](const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
  const Vector x0 = vec1(1.0);
  CHECK((step_rk4(zero, x0, vec1(0), 0.1) - x0).norm() == 0.0);

  const Vector x1 = step_rk4(kDecay, x0, vec1(0), 0.1);
  CHECK(x1(0) == doctest::Approx(0.9048375).epsilon(1e-9));
  // One step reproduces the degree-4 Taylor polynomial of exp(-h), so the
  // defect against exp(-0.1) is h^5/120 - h^6/720 + ... = 8.196e-8.
  const double expected_defect = std::pow(0.1, 5) / 120.0 - std::pow(0.1, 6) / 720.0;
  CHECK(std::abs(x1(0) - std::exp(-0.1)) == doctest::Approx(expected_defect).epsilon(1e-4));
  CHECK(std::abs(x1(0) - std::exp(-0.1)) <= 1e-7);
}

TEST_CASE("rk4 of a linear field is linear in the state") {
  Rng rng(3);
  const Matrix a = test::random_matrix(3, 3, rng);
  const OdeField field = [&a](const Vector& x, const Vector&) { return Vector(a * x); };
  for (int i = 0; i < 10; ++i) {
    const Vector x1 = test::random_vector(3, rng);
    const Vector x2 = test::random_vector(3, rng);
    const double c1 = rng.uniform(-2, 2), c2 = rng.uniform(-2, 2);
    const Vector lhs = step_rk4(field, c1 * x1 + c2 * x2, vec1(0), 0.05);
    const Vector rhs = c1 * step_rk4(field, x1, vec1(0), 0.05) + c2 * step_rk4(field, x2, vec1(0), 0.05);
    CHECK((lhs - rhs).norm() <= 1e-13 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("rk4 empirical convergence order is at least 3.8") {
  const double e1 = rk4_global_error(0.1);
  const double e2 = rk4_global_error(0.05);
  const double order = std::log2(e1 / e2);
  CHECK(order >= 3.8);
}

TEST_CASE("adaptive solver tracks exp(-t) within 1e-6 at rtol 1e-7") {
  IntegratorConfig cfg;
  cfg.rtol = 1e-7;
  const auto res = solve_adaptive(kDecay, vec1(1.0), PiecewiseConstantInput::constant(vec1(0)),
                                  0.0, 5.0, 0.01, cfg);
  REQUIRE(res.complete);
  double max_err = 0.0;
  for (int k = 0; k < res.trajectory.n_samples(); ++k)
    max_err = std::max(max_err, std::abs(res.trajectory.states(k, 0) - std::exp(-res.trajectory.time_at(k))));
  CHECK(max_err <= 1e-6);
}

TEST_CASE("tightening rtol does not hurt accuracy on the decay problem") {
  const auto run = [](double rtol) {
    IntegratorConfig cfg;
    cfg.rtol = rtol;
    const auto res = solve_adaptive(kDecay, vec1(1.0), PiecewiseConstantInput::constant(vec1(0)),
                                    0.0, 5.0, 0.01, cfg);
    double max_err = 0.0;
    for (int k = 0; k < res.trajectory.n_samples(); ++k)
      max_err = std::max(max_err,
                         std::abs(res.trajectory.states(k, 0) - std::exp(-res.trajectory.time_at(k))));
    return max_err;
  };
  CHECK(run(1e-7) <= run(1e-5));
}

TEST_CASE("finite-time blow-up reports an integration failure near t=1") {
  const OdeField quad = [](const Vector& x, const Vector&) { return Vector(x.cwiseProduct(x)); };
  const auto res = solve_adaptive(quad, vec1(1.0), PiecewiseConstantInput::constant(vec1(0)),
                                  0.0, 2.0, 0.01);
  CHECK_FALSE(res.complete);
  CHECK(res.t_reached > 0.9);
  CHECK(res.t_reached <= 1.01);
  CHECK(res.trajectory.n_samples() < 200);
}

TEST_CASE("input schedule steps land on integration boundaries") {
  // xdot = -x + u with u stepping 0 -> 1 at t = 0.5: the response kinks at
  // the breakpoint and follows the exact two-piece solution.
  const OdeField field = [](const Vector& x, const Vector& u) { return Vector(u - x); };
  PiecewiseConstantInput input;
  input.times = {0.0, 0.5};
  input.values = {vec1(0.0), vec1(1.0)};
  IntegratorConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-12;
  const auto res = solve_adaptive(field, vec1(1.0), input, 0.0, 1.0, 0.001, cfg);
  REQUIRE(res.complete);
  for (int k = 0; k < res.trajectory.n_samples(); ++k) {
    const double t = res.trajectory.time_at(k);
    const double expect = t < 0.5 ? std::exp(-t)
                                  : 1.0 + (std::exp(-0.5) - 1.0) * std::exp(-(t - 0.5));
    CHECK(std::abs(res.trajectory.states(k, 0) - expect) <= 1e-7);
    CHECK(res.trajectory.inputs(k, 0) == (t < 0.5 ? 0.0 : 1.0));
  }
}

TEST_CASE("solver determinism") {
  const auto run = [] {
    return solve_adaptive(kDecay, vec1(1.0), PiecewiseConstantInput::constant(vec1(0)), 0.0, 2.0,
                          0.01);
  };
  const auto a = run();
  const auto b = run();
  CHECK((a.trajectory.states - b.trajectory.states).norm() == 0.0);
}

TEST_CASE("rollout of a zero network repeats the initial state") {
  MlpParams net = init_mlp({3, 4, 2}, Activation::Tanh, 1);
  for (auto& w : net.weights) w.setZero();
  Rng rng(5);
  const Vector x0 = test::random_vector(2, rng);
  const Matrix inputs = Matrix::Zero(6, 1);
  const auto res = rollout_window(net, x0, inputs, 0.1, false);
  REQUIRE(res.finite);
  for (int k = 0; k < 6; ++k) CHECK((res.states.row(k).transpose() - x0).norm() == 0.0);
}

TEST_CASE("single-step rollout equals an rk4 step of the same field") {
  Rng rng(11);
  const MlpParams net = test::random_mlp({4, 6, 2}, Activation::Tanh, rng);
  const Vector x0 = test::random_vector(2, rng);
  const Matrix inputs = test::random_matrix(1, 2, rng);
  const auto res = rollout_window(net, x0, inputs, 0.05, false);
  const OdeField field = [&net](const Vector& x, const Vector& u) { return mlp_forward(net, x, u); };
  const Vector direct = step_rk4(field, x0, inputs.row(0).transpose(), 0.05);
  CHECK((res.states.row(0).transpose() - direct).norm() == 0.0);
}

TEST_CASE("rollout agrees with the adaptive solver on a smooth learned field") {
  Rng rng(13);
  MlpParams net = test::random_mlp({3, 8, 2}, Activation::Tanh, rng);
  // Keep the field mild so one window stays well inside the asymptotic regime.
  for (auto& w : net.weights) w *= 0.4;
  const Vector x0 = test::random_vector(2, rng, 0.5);
  const int steps = 40;
  const double h = 0.01;
  Matrix inputs(steps, 1);
  for (int k = 0; k < steps; ++k) inputs(k, 0) = 0.3;

  const auto rolled = rollout_window(net, x0, inputs, h, false);
  REQUIRE(rolled.finite);

  const OdeField field = [&net](const Vector& x, const Vector& u) { return mlp_forward(net, x, u); };
  IntegratorConfig cfg;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-12;
  const auto solved = solve_adaptive(field, x0, PiecewiseConstantInput::constant(vec1(0.3)), 0.0,
                                     (steps + 1) * h, h, cfg);
  REQUIRE(solved.complete);
  // solved.states.row(k+1) corresponds to rolled.states.row(k).
  double max_diff = 0.0;
  for (int k = 0; k < steps; ++k)
    max_diff = std::max(max_diff,
                        (rolled.states.row(k) - solved.trajectory.states.row(k + 1)).norm());
  CHECK(max_diff <= 1e-5);
}

TEST_CASE("rollout gradient matches finite differences of the window loss") {
  Rng rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    const MlpParams net = test::random_mlp({3, 5, 4, 2}, Activation::Tanh, rng);
    const Vector x0 = test::random_vector(2, rng, 0.7);
    const Matrix inputs = test::random_matrix(3, 1, rng);
    const Matrix reference = test::random_matrix(3, 2, rng);
    const double h = 0.05;

    const auto rollout = rollout_window(net, x0, inputs, h, true);
    REQUIRE(rollout.finite);
    const auto got = grad_forward_loss(net, rollout, reference);

    const auto loss_of = [&](const MlpParams& p) {
      const auto r = rollout_window(p, x0, inputs, h, false);
      return (r.states - reference).squaredNorm() / 3.0;
    };
    CHECK(got.loss == doctest::Approx(loss_of(net)));
    const MlpGrad fd = test::fd_param_gradient(net, loss_of);
    CHECK(test::grad_relative_error(got.grad, fd) <= 1e-4);
  }
}

TEST_CASE("missing tape raises") {
  const MlpParams net = init_mlp({3, 4, 2}, Activation::Tanh, 1);
  const auto rollout = rollout_window(net, Vector::Zero(2), Matrix::Zero(2, 1), 0.1, false);
  CHECK_THROWS_AS(grad_forward_loss(net, rollout, Matrix::Zero(2, 2)), TapeMissingError);
}
