#pragma once

#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "hdt/adversarial.hpp"

namespace hdt::cli {

struct MetricSettings {
  /// Projection count and seed for the sweep; unset means the checkpoint's
  /// own evaluation settings, so the t = T sweep row reproduces its sw_final.
  std::optional<int> n_proj;
  double sweep_factor = 2.5;
  std::optional<std::uint64_t> seed;
};

/// Pass/fail thresholds for `verify`. The round-trip bound is relative:
/// round_trip_error <= max_round_trip * mean(1 + ‖x‖).
struct VerifyThresholds {
  double max_ham_drift = 1e-6;
  double max_round_trip = 1e-6;
  double max_adjoint_vs_unrolled = 1e-6;
  double max_adjoint_vs_fd = 1e-3;
  int samples = 256;
  int gradient_samples = 4;
};

struct RunConfig {
  TrainConfig train;
  std::string benchmark = "two_gaussians";
  std::optional<std::string> domain_a;  // domain spec files; both or neither
  std::optional<std::string> domain_b;
  std::string out_dir = "run";
  MetricSettings metrics;
  VerifyThresholds verify;

  /// Throws SchemaError on the first invalid field.
  void validate() const;
  /// (A, B) from the domain files if given, else the builtin benchmark.
  std::pair<SyntheticDomain, SyntheticDomain> domains() const;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Reads and validates; ParseError / SchemaError / Error naming the path.
RunConfig load_run_config(const std::string& path);

}  // namespace hdt::cli
