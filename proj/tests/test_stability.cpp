#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "lfinode/plants.hpp"
#include "lfinode/stability.hpp"
#include "test_util.hpp"

using namespace lfi;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

/// Match two complex multisets by trying both the library pairing and a
/// brute-force minimum for small sizes.
double max_matched_distance(const ComplexList& a, const ComplexList& b) {
  const EigError err = eig_error(a, b);
  double worst = 0.0;
  for (const auto& [x, y] : err.pairs) worst = std::max(worst, std::abs(x - y));
  return worst;
}

}  // namespace

TEST_CASE("eigvals basics") {
  SUBCASE("diagonal matrix") {
    Matrix m = Matrix::Zero(3, 3);
    m.diagonal() << 1, 2, 3;
    const auto eigs = eigvals(m);
    REQUIRE(eigs.size() == 3);
    CHECK(eigs[0] == std::complex<double>(1, 0));
    CHECK(eigs[1] == std::complex<double>(2, 0));
    CHECK(eigs[2] == std::complex<double>(3, 0));
  }

  SUBCASE("companion of lambda^2+3lambda+2") {
    Matrix m(2, 2);
    m << 0, 1, -2, -3;
    const auto eigs = eigvals(m);
    CHECK(std::abs(eigs[0] - std::complex<double>(-2, 0)) <= 1e-9);
    CHECK(std::abs(eigs[1] - std::complex<double>(-1, 0)) <= 1e-9);
  }

  SUBCASE("gfm droop operating-point matrix") {
    const double j21 = (1.0 / (0.3 * 0.02)) * std::sqrt(1.0 - 0.15 * 0.15);
    Matrix m(2, 2);
    m << 0, -0.05, j21, -50;
    // Quadratic-formula oracle: roots of lambda^2 + 50 lambda + 0.05*j21.
    const double det = 0.05 * j21;
    const double disc = std::sqrt(2500.0 - 4.0 * det);
    const double slow = (-50.0 + disc) / 2.0;
    const double fast = (-50.0 - disc) / 2.0;
    const auto eigs = eigvals(m);
    CHECK(std::abs(eigs[0] - std::complex<double>(fast, 0)) <= 1e-9);
    CHECK(std::abs(eigs[1] - std::complex<double>(slow, 0)) <= 1e-9);
    CHECK(slow == doctest::Approx(-0.16532).epsilon(1e-3));
    CHECK(fast == doctest::Approx(-49.83468).epsilon(1e-3));
  }

  SUBCASE("residual of returned pairs is small") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = test::random_matrix(4, 4, rng, 2.0);
      for (const auto& lambda : eigvals(m)) {
        const Eigen::MatrixXcd shifted =
            m.cast<std::complex<double>>() - lambda * Eigen::MatrixXcd::Identity(4, 4);
        // Smallest singular value of (M - lambda I) measures the residual.
        const double smin = shifted.jacobiSvd().singularValues().minCoeff();
        CHECK(smin <= 1e-8 * m.operatorNorm());
      }
    }
  }
}

TEST_CASE("eigvals agrees with the characteristic-polynomial root oracle") {
  Rng rng(5);
  int checked = 0;
  for (int d = 2; d <= 5; ++d) {
    for (int trial = 0; trial < 25; ++trial) {
      const Matrix m = test::random_matrix(d, d, rng, 1.5);
      const auto got = eigvals(m);
      const auto coeffs = test::char_poly(m);
      const auto roots = test::poly_roots(coeffs);
      ComplexList want(roots.begin(), roots.end());
      CHECK(max_matched_distance(got, want) <= 1e-8 * std::max(1.0, m.operatorNorm()));
      ++checked;
    }
  }
  CHECK(checked == 100);
}

TEST_CASE("conjugate symmetry for real input") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = test::random_matrix(5, 5, rng);
    auto eigs = eigvals(m);
    // Pair each eigenvalue with its conjugate inside the returned set.
    for (const auto& e : eigs) {
      double best = 1e9;
      for (const auto& f : eigs) best = std::min(best, std::abs(std::conj(e) - f));
      CHECK(best <= 1e-9 * std::max(1.0, std::abs(e)));
    }
  }
}

TEST_CASE("classify") {
  CHECK(classify({{-1, 0}, {-2, 0}}, 1e-6) == StabilityVerdict::Stable);
  CHECK(classify({{0.1, 2}, {0.1, -2}}, 1e-6) == StabilityVerdict::Unstable);
  CHECK(classify({{0, 0}}, 1e-6) == StabilityVerdict::Marginal);
  CHECK(classify({{-1e-9, 0}}, 1e-6) == StabilityVerdict::Marginal);
  CHECK_THROWS_AS(classify({}, 1e-6), DimensionError);
}

TEST_CASE("eig_error") {
  SUBCASE("identical sets have zero error") {
    const ComplexList a = {{-1, 2}, {-1, -2}, {-3, 0}};
    CHECK(eig_error(a, a).mae == 0.0);
  }

  SUBCASE("hand example with both bijections enumerated") {
    const ComplexList est = {{-1.1, 0}, {-2.2, 0}};
    const ComplexList ref = {{-1, 0}, {-2, 0}};
    // Oracle: bijection 1 pairs (-1.1,-1),(-2.2,-2) -> mean 0.15;
    // bijection 2 pairs (-1.1,-2),(-2.2,-1) -> mean (0.9+1.2)/2 = 1.05.
    const double direct = (0.1 + 0.2) / 2.0;
    const double swapped = (0.9 + 1.2) / 2.0;
    CHECK(direct < swapped);
    CHECK(eig_error(est, ref).mae == doctest::Approx(direct).epsilon(1e-12));
  }

  SUBCASE("permutation invariance and symmetry") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      ComplexList a, b;
      for (int i = 0; i < 4; ++i) {
        a.emplace_back(rng.uniform(-3, 0), rng.uniform(-2, 2));
        b.emplace_back(rng.uniform(-3, 0), rng.uniform(-2, 2));
      }
      const double mae = eig_error(a, b).mae;
      ComplexList shuffled = a;
      std::swap(shuffled[0], shuffled[3]);
      std::swap(shuffled[1], shuffled[2]);
      CHECK(eig_error(shuffled, b).mae == doctest::Approx(mae).epsilon(1e-12));
      CHECK(eig_error(b, a).mae == doctest::Approx(mae).epsilon(1e-12));
    }
  }

  SUBCASE("unequal sizes match the min-size subset and report leftovers") {
    const ComplexList est = {{-1.05, 0}, {-9, 0}, {-2.1, 0}};
    const ComplexList ref = {{-1, 0}, {-2, 0}};
    const EigError err = eig_error(est, ref);
    CHECK(err.pairs.size() == 2);
    CHECK(err.unmatched_estimated.size() == 1);
    CHECK(err.unmatched_estimated[0] == std::complex<double>(-9, 0));
    CHECK(err.mae == doctest::Approx((0.05 + 0.1) / 2.0));
  }
}

TEST_CASE("optimal assignment beats greedy on clustered eigenvalues") {
  // Greedy matching from the first element pairs -1 -> -1.04 and is then
  // forced into -1.05 -> -3; the optimal assignment avoids that trap.
  const ComplexList est = {{-1, 0}, {-1.05, 0}};
  const ComplexList ref = {{-1.04, 0}, {-3, 0}};
  const EigError err = eig_error(est, ref);
  const double greedy = (0.04 + (3.0 - 1.05)) / 2.0;
  const double optimal = (std::abs(-1.05 + 1.04) + std::abs(-1.0 + 3.0)) / 2.0;
  CHECK(err.mae == doctest::Approx(std::min(greedy, optimal)));
}

TEST_CASE("denormalize_jacobian") {
  Rng rng(8);
  const Matrix j = test::random_matrix(3, 3, rng);
  NormStats stats;
  stats.state_mean = Vector::Zero(3);
  stats.state_std = (Vector(3) << 2.0, 0.5, 1.5).finished();
  stats.input_mean = Vector::Zero(1);
  stats.input_std = Vector::Ones(1);

  SUBCASE("similarity transform preserves eigenvalues, time scale divides them") {
    const Matrix j_phys = denormalize_jacobian(j, stats, 2.0);
    const auto a = eigvals(j);
    const auto b = eigvals(j_phys);
    ComplexList scaled;
    for (const auto& e : a) scaled.push_back(e / 2.0);
    CHECK(max_matched_distance(b, scaled) <= 1e-9 * std::max(1.0, j.operatorNorm()));
  }

  SUBCASE("hand check of the entry scaling") {
    const Matrix j_phys = denormalize_jacobian(j, stats, 1.0);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(j_phys(r, c) == doctest::Approx(j(r, c) * stats.state_std(r) / stats.state_std(c)));
  }
}

TEST_CASE("model_linearize") {
  SUBCASE("zero-weight network is marginal everywhere") {
    MlpParams p = init_mlp({4, 6, 2}, Activation::Tanh, 0);
    for (auto& w : p.weights) w.setZero();
    const auto lin = model_linearize(p, vec2(1, 1), vec2(0.3, -0.2));
    REQUIRE(lin.found);
    CHECK(lin.j_normalized.norm() == 0.0);
    CHECK((lin.x_ss - vec2(0.3, -0.2)).norm() == 0.0);
    const auto rep = make_eigen_report(lin.j_physical, EigenSource::ModelJnn, 1e-6);
    CHECK(rep.verdict == StabilityVerdict::Marginal);
  }

  SUBCASE("single affine layer reproduces the linear-system equilibrium") {
    // Normalized field f(xn, un) = A xn + B un; Newton must land on
    // xn* = -A^{-1} B un and report J = A (denormalized by the stats).
    Rng rng(9);
    Matrix a(2, 2);
    a << -1, 0.3, 0.2, -2;
    const Matrix b = test::random_matrix(2, 2, rng);
    MlpParams p;
    p.layer_dims = {4, 2};
    Matrix w(2, 4);
    w << a, b;
    p.weights = {w};
    p.biases = {Vector::Zero(2)};
    p.norm.state_mean = vec2(0.1, -0.4);
    p.norm.state_std = vec2(2.0, 0.5);
    p.norm.input_mean = vec2(1.0, 1.0);
    p.norm.input_std = vec2(0.1, 0.05);

    const Vector u = vec2(1.02, 0.99);
    const Vector u_n = (u - p.norm.input_mean).cwiseQuotient(p.norm.input_std);
    const Vector want_xn = -a.fullPivLu().solve(b * u_n);
    const auto lin = model_linearize(p, u, vec2(0, 0));
    REQUIRE(lin.found);
    CHECK((lin.x_ss_normalized - want_xn).norm() <= 1e-9);
    CHECK((lin.j_normalized - a).norm() <= 1e-12);
    const Matrix want_phys = denormalize_jacobian(a, p.norm);
    CHECK((lin.j_physical - want_phys).norm() <= 1e-12);
  }

  SUBCASE("constant nonzero field has no equilibrium") {
    MlpParams p = init_mlp({4, 2}, Activation::Tanh, 0);
    p.weights[0].setZero();
    p.biases[0] << 0.5, -0.25;
    const auto lin = model_linearize(p, vec2(1, 1), vec2(0, 0));
    CHECK_FALSE(lin.found);
  }
}

TEST_CASE("analytic pipeline matches the gfm closed-form stability rule") {
  // For every grid input with an equilibrium on the principal branch the
  // verdict must be Stable (cos(delta_ss) > 0 there), and inputs beyond
  // pull-out must yield no equilibrium.
  const PlantModel plant = PlantModel::gfm_droop();
  const GfmDroopParams par;
  int with_eq = 0, without_eq = 0;
  for (int iv = 0; iv < 8; ++iv) {
    for (int iw = 0; iw < 6; ++iw) {
      const double vg = 0.5 + 0.7 * iv / 7.0;
      const double wg = 0.9 + 0.2 * iw / 5.0;
      const Vector u = vec2(vg, wg);
      const double p_req = par.P_ref + (par.omega_set - wg) / par.m;
      const double sin_required = p_req * par.X / (par.E * vg);
      const auto eq = plant.find_equilibrium(u, vec2(0.1, 0.5));
      if (std::abs(sin_required) <= 1.0 - 1e-9) {
        REQUIRE(eq.has_value());
        const auto rep =
            make_eigen_report(plant.state_jacobian(*eq, u), EigenSource::AnalyticPlant, 1e-6);
        CHECK(std::cos((*eq)(0)) > 0.0);
        CHECK(rep.verdict == StabilityVerdict::Stable);
        ++with_eq;
      } else if (std::abs(sin_required) >= 1.0 + 1e-9) {
        CHECK_FALSE(eq.has_value());
        ++without_eq;
      }
    }
  }
  CHECK(with_eq > 0);
  CHECK(without_eq > 0);
}
