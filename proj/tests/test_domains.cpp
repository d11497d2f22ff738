#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "hdt/domains.hpp"
#include "hdt/errors.hpp"
#include "hdt/metrics.hpp"

using namespace hdt;

namespace {

SyntheticDomain single(Vector mean, Vector cov) {
  const int d = static_cast<int>(mean.size());
  return SyntheticDomain(d, {{1.0, std::move(mean), std::move(cov)}});
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hdt_test_domains";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("domain validation") {
  CHECK_THROWS_AS(SyntheticDomain(3, {{1.0, Vector::Zero(3), Vector::Ones(3)}}), SchemaError);
  CHECK_THROWS_AS(SyntheticDomain(2, {{0.5, Vector::Zero(2), Vector::Ones(2)}}), SchemaError);
  CHECK_THROWS_AS(SyntheticDomain(2, {{1.0, Vector::Zero(2), Vector{{1.0, 0.0}}}}), SchemaError);
  CHECK_THROWS_AS(SyntheticDomain(2, {{1.0, Vector::Zero(4), Vector::Ones(4)}}), SchemaError);
  CHECK_THROWS_AS(SyntheticDomain(2, {}), SchemaError);
  CHECK_NOTHROW(SyntheticDomain(2, {{0.25, Vector::Zero(2), Vector::Ones(2)},
                                    {0.75, Vector::Ones(2), Vector::Ones(2)}}));
}

TEST_CASE("degenerate width collapses onto the mean") {
  Sampler s(single(Vector{{1.5, -2.0}}, Vector::Constant(2, 1e-12)), 3);
  const Matrix x = s.sample(200);
  for (Eigen::Index j = 0; j < x.cols(); ++j) REQUIRE((x.col(j) - Vector{{1.5, -2.0}}).norm() <= 1e-5);
}

TEST_CASE("gaussian moments at n = 10000") {
  Sampler s(single(Vector{{-4.0, 0.0}}, Vector::Constant(2, 0.25)), 42);
  const Matrix x = s.sample(10000);
  const Vector mean = x.rowwise().mean();
  CHECK(std::abs(mean[0] + 4.0) <= 0.02);
  CHECK(std::abs(mean[1]) <= 0.02);
  const Matrix c = x.colwise() - mean;
  const Vector var = c.array().square().rowwise().sum() / (x.cols() - 1);
  CHECK(std::abs(var[0] - 0.25) <= 0.025);
  CHECK(std::abs(var[1] - 0.25) <= 0.025);
}

TEST_CASE("mixture weights are respected") {
  const SyntheticDomain dom(2, {{0.2, Vector{{-10.0, 0.0}}, Vector::Constant(2, 0.01)},
                                {0.8, Vector{{10.0, 0.0}}, Vector::Constant(2, 0.01)}});
  Sampler s(dom, 5);
  const Matrix x = s.sample(20000);
  const double frac = (x.row(0).array() < 0.0).cast<double>().mean();
  CHECK(std::abs(frac - 0.2) < 0.015);
}

TEST_CASE("draw k does not depend on batching") {
  const auto [a, b] = builtin_benchmark(Benchmark::MixtureToMixture);
  Sampler one(a, 9), two(a, 9);
  const Matrix all = one.sample(10);
  Matrix parts(a.dim(), 10);
  parts.leftCols(3) = two.sample(3);
  parts.middleCols(3, 6) = two.sample(6);
  parts.rightCols(1) = two.sample(1);
  CHECK(all == parts);
  CHECK(two.counter() == 10);
  CHECK(Sampler(a, 9).draw(7) == all.col(7));
  CHECK(Sampler(a, 9, 4).sample(2) == all.middleCols(4, 2));
  CHECK(Sampler(a, 10).draw(0) != all.col(0));
}

TEST_CASE("sampling byte stream") {
  // Draw k of a unit Gaussian: uniforms 2 and 3 of Philox stream k feed Box-Muller.
  Sampler s(single(Vector::Zero(2), Vector::Ones(2)), 1234);
  for (std::uint64_t k : {0u, 1u, 77u}) {
    const CounterStream cs(1234, k);
    const auto z = box_muller(cs.uniform(2), cs.uniform(3));
    const Vector x = s.draw(k);
    CHECK(x[0] == z[0]);
    CHECK(x[1] == z[1]);
  }
}

TEST_CASE("builtin benchmarks") {
  const auto [a, b] = builtin_benchmark(Benchmark::TwoGaussians);
  CHECK(a.dim() == 2);
  CHECK(a.components().size() == 1);
  CHECK(a.components()[0].mean == Vector{{-4.0, 0.0}});
  CHECK(b.components()[0].mean == Vector{{4.0, 0.0}});
  CHECK(b.components()[0].cov_diag == Vector::Constant(2, 0.25));
  CHECK(a.components()[0].weight == 1.0);

  const auto [ra, rb] = builtin_benchmark(Benchmark::GaussianRingPair);
  CHECK(ra.components()[0].cov_diag == Vector::Ones(2));
  REQUIRE(rb.components().size() == 8);
  for (int k = 0; k < 8; ++k) {
    const Vector& m = rb.components()[static_cast<std::size_t>(k)].mean;
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    CHECK(std::abs(m[0] - 4.0 * std::cos(angle)) < 1e-12);
    CHECK(std::abs(m[1] - 4.0 * std::sin(angle)) < 1e-12);
  }

  CHECK(builtin_benchmark(Benchmark::MixtureToMixture).first.dim() == 4);
  CHECK(builtin_benchmark(Benchmark::MixtureToMixture).first.components().size() == 4);
  CHECK_THROWS_AS(benchmark_from_string("celeba"), Error);
  for (const auto& name : benchmark_names()) CHECK(to_string(benchmark_from_string(name)) == name);
}

TEST_CASE("benchmarks start well separated") {
  for (const auto& name : benchmark_names()) {
    CAPTURE(name);
    const auto [a, b] = builtin_benchmark(benchmark_from_string(name));
    const Matrix xa = Sampler(a, 1).sample(4096);
    const Matrix xb = Sampler(b, 2).sample(4096);
    CHECK(sliced_wasserstein(xa, xb, 128, 3) > 1.0);
  }
}

TEST_CASE("domain json") {
  const auto [a, b] = builtin_benchmark(Benchmark::GaussianRingPair);
  const auto back = domain_from_json(nlohmann::json::parse(domain_to_json(b).dump()));
  CHECK(back.components().size() == 8);
  CHECK(Sampler(back, 4).sample(5) == Sampler(b, 4).sample(5));
  auto doc = domain_to_json(a);
  doc["extra"] = 1;
  CHECK_THROWS_AS(domain_from_json(doc), SchemaError);
  CHECK_THROWS_AS(domain_from_json(nlohmann::json{{"d", 2}}), SchemaError);
}

TEST_CASE("batch csv round trip") {
  Sampler s(builtin_benchmark(Benchmark::MixtureToMixture).second, 8);
  const Matrix x = s.sample(100);
  const auto path = scratch("batch.csv");
  save_batch(path.string(), x);
  CHECK(load_batch(path.string()) == x);
  CHECK_FALSE(std::filesystem::exists(path.string() + ".partial"));

  const Matrix empty = parse_batch_csv("p_0,p_1,q_0,q_1\n");
  CHECK(empty.rows() == 4);
  CHECK(empty.cols() == 0);
  CHECK(batch_to_csv(Matrix(2, 0)) == "p_0,q_0\n");
}

TEST_CASE("batch csv errors") {
  try {
    parse_batch_csv("p_0,p_1,q_0,q_1\n1,2,3,4\n1,2,3\n");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
  try {
    parse_batch_csv("p_0,q_0\n1,abc\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_batch_csv("x,y\n1,2\n"), SchemaError);
  CHECK_THROWS_AS(load_batch(scratch("missing.csv").string()), Error);
}
