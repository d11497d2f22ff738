#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "hdt/domains.hpp"
#include "hdt/errors.hpp"
#include "hdt/metrics.hpp"
#include "oracles.hpp"

using namespace hdt;

namespace {

// Brute-force W1 for equal-size samples: mean absolute difference of sorted values.
double w1_sorted(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

HamiltonianField small_field(std::uint64_t seed) {
  return HamiltonianField::neural(
      Mlp::random({2, 8, 8, 8, 1}, Activation::Tanh, OutputActivation::Identity, seed));
}

}  // namespace

TEST_CASE("wasserstein_1d") {
  CHECK(wasserstein_1d({0.0}, {1.0}) == 1.0);
  CHECK(wasserstein_1d({0.0, 2.0}, {0.0, 2.0}) == 0.0);
  // Half of the mass moves by 1.
  CHECK(wasserstein_1d({0.0, 1.0}, {1.0}) == doctest::Approx(0.5).epsilon(1e-15));
  // Thirds against halves: quantile difference integrates to 1/6 + 1/6.
  CHECK(wasserstein_1d({0.0, 0.0, 1.0}, {0.0, 1.0}) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));

  testing::TestRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(37), b(37);
    for (auto& v : a) v = rng.uniform(-3.0, 3.0);
    for (auto& v : b) v = rng.uniform(-1.0, 5.0);
    CHECK(wasserstein_1d(a, b) == doctest::Approx(w1_sorted(a, b)).epsilon(1e-12));
    CHECK(wasserstein_1d(a, b) == wasserstein_1d(b, a));
  }
  CHECK_THROWS_AS(wasserstein_1d({}, {1.0}), Error);
}

TEST_CASE("sliced_wasserstein basic properties") {
  testing::TestRng rng(2);
  const Matrix x = rng.matrix(2, 50, -2.0, 2.0);
  const Matrix y = rng.matrix(2, 70, 0.0, 3.0);
  CHECK(sliced_wasserstein(x, x, 64, 1) == 0.0);
  CHECK(sliced_wasserstein(x, y, 64, 1) == sliced_wasserstein(y, x, 64, 1));
  CHECK(sliced_wasserstein(x, y, 64, 1) > 0.0);
  CHECK(sliced_wasserstein(x, y, 64, 1) == sliced_wasserstein(x, y, 64, 1));
  CHECK_THROWS_AS(sliced_wasserstein(x, Matrix(2, 0), 8, 1), Error);
  CHECK_THROWS_AS(sliced_wasserstein(x, Matrix::Zero(4, 3), 8, 1), ShapeError);
  CHECK_THROWS_AS(sliced_wasserstein(x, y, 0, 1), Error);
}

TEST_CASE("sliced_wasserstein of one-dimensional point masses") {
  const Matrix a = Matrix::Zero(1, 1);
  const Matrix b = Matrix::Ones(1, 1);
  for (int n : {1, 7, 128}) CHECK(sliced_wasserstein(a, b, n, 5) == 1.0);
}

TEST_CASE("translation bound") {
  testing::TestRng rng(3);
  const Matrix x = rng.matrix(4, 200);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector c = rng.vector(4, -2.0, 2.0);
    const Matrix y = x.colwise() + c;
    const double sw = sliced_wasserstein(x, y, 1000, static_cast<std::uint64_t>(trial));
    CHECK(sw <= c.norm() * (1.0 + 1e-12));
    // E|u·c| over the unit sphere in R^4 is (4/(3π))·‖c‖ ≈ 0.42·‖c‖.
    CHECK(sw == doctest::Approx(4.0 / (3.0 * std::numbers::pi) * c.norm()).epsilon(0.08));
  }
}

TEST_CASE("hamiltonian_drift and round_trip_error examples") {
  const auto c = HamiltonianField::constant(2, 2.0);
  const auto tr = integrate(c, State(Vector{{1.0, 1.0}}), {0.0, 1.0, 10});
  CHECK(hamiltonian_drift(c, tr) == 0.0);
  CHECK(round_trip_error(c, Matrix::Ones(2, 5), {0.0, 1.0, 10}) == 0.0);
  CHECK_THROWS_AS(hamiltonian_drift(HamiltonianField::harmonic(4), tr), ShapeError);
}

TEST_CASE("harmonic round trip decreases with the step count") {
  const auto f = HamiltonianField::harmonic(2);
  testing::TestRng rng(4);
  const Matrix x = rng.matrix(2, 16, -2.0, 2.0);
  double prev = INFINITY;
  for (int n : {50, 100, 200}) {
    const double e = round_trip_error(f, x, {0.0, 1.0, n});
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("excessive integration sweep") {
  const auto f = small_field(6);
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  const Matrix a = Sampler(da, 1).sample(64);
  const Matrix b = Sampler(db, 2).sample(64);
  const IntegrationSpec spec{0.0, 1.0, 100};

  const auto r = excessive_integration_sweep(f, a, b, 2.5, spec, {32, 9});
  REQUIRE(r.times.size() == 26);
  CHECK(r.times.front() == 0.0);
  CHECK(r.times.back() == doctest::Approx(2.5));
  for (std::size_t i = 1; i < r.times.size(); ++i) CHECK(r.times[i] > r.times[i - 1]);
  CHECK(r.ham_drift.front() == 0.0);
  CHECK(r.sw_to_a.front() == sliced_wasserstein(a, a, 32, 9));
  CHECK_FALSE(r.diverged);

  SUBCASE("factor one matches a direct translate") {
    const auto one = excessive_integration_sweep(f, a, b, 1.0, spec, {32, 9});
    REQUIRE(one.times.size() == 11);
    const Matrix fa = integrate_batch(f, a, spec);
    CHECK(one.sw_to_b.back() == sliced_wasserstein(fa, b, 32, 9));
    CHECK(r.sw_to_b[10] == one.sw_to_b.back());
  }
  SUBCASE("csv layout") {
    std::istringstream in(r.to_csv());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t_frac,sw_to_B,sw_to_A,mean_norm,ham_drift,diverged");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 26);
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(excessive_integration_sweep(f, a, b, 0.5, spec), Error);
    CHECK_THROWS_AS(excessive_integration_sweep(f, a, b, 2.0, {0.0, 1.0, 25}), Error);
  }
}

TEST_CASE("sweep reports divergence instead of throwing") {
  // H = w·p has a constant field dq/dt = w; a huge w and a long horizon
  // push q past the double range while H itself stays 0.
  Mlp net = Mlp::zeros({2, 1}, Activation::Tanh, OutputActivation::Identity);
  ParamVector p = net.flatten();
  p.flat[0] = 1e306;
  const auto f = HamiltonianField::neural(net.unflatten(p));
  Matrix a = Matrix::Zero(2, 4);
  a.row(1).setConstant(1e307);
  const auto r = excessive_integration_sweep(f, a, a, 2.5, {0.0, 100.0, 10}, {8, 1});
  CHECK(r.diverged);
  CHECK(r.times.size() < 26);
  CHECK(r.to_csv().find(",1\n") != std::string::npos);
}

TEST_CASE("relative_error") {
  CHECK(relative_error(Vector::Zero(3), Vector::Zero(3)) == 0.0);
  CHECK(relative_error(Vector{{1.0}}, Vector{{0.0}}) == 1.0);
  CHECK(relative_error(Vector{{2.0}}, Vector{{1.0}}) == 0.5);
}

TEST_CASE("gradient consistency report") {
  const IntegrationSpec spec{0.0, 1.0, 50};
  SUBCASE("zero-weight field") {
    const auto f = HamiltonianField::neural(
        Mlp::zeros({2, 8, 8, 8, 1}, Activation::Tanh, OutputActivation::Identity));
    const auto r = gradient_consistency_report(f, Matrix::Ones(2, 3), spec);
    CHECK(r.adjoint_vs_unrolled == 0.0);
    CHECK(r.adjoint_vs_finite_diff == 0.0);
  }
  SUBCASE("random small fields") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      testing::TestRng rng(seed);
      const auto r = gradient_consistency_report(small_field(seed), rng.matrix(2, 4, -2.0, 2.0), spec);
      CHECK(r.adjoint_vs_unrolled < 1e-6);
      CHECK(r.adjoint_vs_finite_diff < 1e-3);
      CHECK(r.fd_coordinates == 177);
    }
  }
  SUBCASE("strided subset for large nets") {
    const auto f = HamiltonianField::neural(
        Mlp::random({2, 32, 32, 1}, Activation::Tanh, OutputActivation::Identity, 1));
    const auto r = gradient_consistency_report(f, Matrix::Ones(2, 2), {0.0, 0.5, 20}, {1e-5, 40});
    CHECK(r.fd_coordinates == 40);
    CHECK(r.adjoint_vs_finite_diff < 1e-3);
  }
  SUBCASE("analytic fields are rejected") {
    CHECK_THROWS_AS(gradient_consistency_report(HamiltonianField::harmonic(2), Matrix::Ones(2, 1), spec),
                    ContractError);
  }
}
