#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hdt/mlp.hpp"
#include "hdt/random.hpp"

namespace hdt {

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  Vector cov_diag;
};

/// Diagonal Gaussian mixture over ℝ^d.
class SyntheticDomain {
 public:
  /// Throws SchemaError unless d is even, weights are positive and sum to 1
  /// (within 1e-12), and covariance entries are positive.
  SyntheticDomain(int d, std::vector<MixtureComponent> components);

  int dim() const { return d_; }
  const std::vector<MixtureComponent>& components() const { return components_; }

 private:
  int d_;
  std::vector<MixtureComponent> components_;
};

/// Counter-based sampler. Draw k of (domain, seed) uses Philox stream k with
/// key `seed`: uniform 0 picks the component by cumulative weight, uniforms
/// 2 + 2i and 3 + 2i feed Box-Muller for coordinates 2i and 2i + 1.
/// Uniform 1 is left unused so every Gaussian pair starts on a block boundary.
class Sampler {
 public:
  Sampler(SyntheticDomain domain, std::uint64_t seed, std::uint64_t counter = 0)
      : domain_(std::move(domain)), seed_(seed), counter_(counter) {}

  /// The next n draws as a d x n batch; advances the counter by n.
  Matrix sample(int n);

  /// Draw number k, independent of any batching.
  Vector draw(std::uint64_t k) const;

  const SyntheticDomain& domain() const { return domain_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  SyntheticDomain domain_;
  std::uint64_t seed_;
  std::uint64_t counter_;
};

enum class Benchmark { TwoGaussians, GaussianRingPair, MixtureToMixture };

/// Known names: two_gaussians, gaussian_ring_pair, mixture_to_mixture.
Benchmark benchmark_from_string(const std::string& name);
std::string to_string(Benchmark b);
std::vector<std::string> benchmark_names();

/// (domain A, domain B).
std::pair<SyntheticDomain, SyntheticDomain> builtin_benchmark(Benchmark b);

nlohmann::json domain_to_json(const SyntheticDomain& domain);
SyntheticDomain domain_from_json(const nlohmann::json& doc);
SyntheticDomain load_domain(const std::string& path);

/// CSV with header `p_0..,q_0..`; one sample per row.
void save_batch(const std::string& path, const Matrix& batch);
std::string batch_to_csv(const Matrix& batch);
Matrix load_batch(const std::string& path);
Matrix parse_batch_csv(const std::string& text);

}  // namespace hdt
