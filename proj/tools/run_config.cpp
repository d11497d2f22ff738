#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hdt/errors.hpp"

namespace hdt::cli {

namespace {

void fail(const std::string& what) { throw SchemaError("run config: " + what); }

template <typename Fn>
void for_each_key(const nlohmann::json& doc, const char* section, Fn&& fn) {
  if (!doc.is_object()) fail(std::string(section) + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!fn(key, value)) fail("unknown key '" + std::string(section) + "." + key + "'");
  }
}

// Integer fields must be JSON integers; 3.5 is rejected rather than truncated.
int as_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) fail(key + " must be an integer");
  return v.get<int>();
}

double as_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) fail(key + " must be a number");
  return v.get<double>();
}

std::string as_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) fail(key + " must be a string");
  return v.get<std::string>();
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (domain_a.has_value() != domain_b.has_value()) fail("domain_a and domain_b must be given together");
  if (!domain_a) benchmark_from_string(benchmark);
  if (out_dir.empty()) fail("out_dir must not be empty");
  if (metrics.n_proj && *metrics.n_proj < 1) fail("metrics.n_proj must be positive");
  if (!(metrics.sweep_factor >= 1.0) || !std::isfinite(metrics.sweep_factor)) {
    fail("metrics.sweep_factor must be >= 1");
  }
  if (train.n_steps % 10 != 0) fail("train.n_steps must be a multiple of 10 for the sweep grid");
  for (double t : {verify.max_ham_drift, verify.max_round_trip, verify.max_adjoint_vs_unrolled,
                   verify.max_adjoint_vs_fd}) {
    if (!(t >= 0.0)) fail("verify thresholds must be non-negative");
  }
  if (verify.samples < 1 || verify.gradient_samples < 1) fail("verify sample counts must be positive");
}

std::pair<SyntheticDomain, SyntheticDomain> RunConfig::domains() const {
  if (domain_a) return {load_domain(*domain_a), load_domain(*domain_b)};
  return builtin_benchmark(benchmark_from_string(benchmark));
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  for_each_key(doc, "config", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "train") c.train = train_config_from_json(v);
    else if (key == "benchmark") c.benchmark = as_string(v, key);
    else if (key == "domain_a") c.domain_a = as_string(v, key);
    else if (key == "domain_b") c.domain_b = as_string(v, key);
    else if (key == "out_dir") c.out_dir = as_string(v, key);
    else if (key == "metrics") {
      for_each_key(v, "metrics", [&](const std::string& k, const nlohmann::json& m) {
        if (k == "n_proj") {
          if (!m.is_null()) c.metrics.n_proj = as_int(m, k);
        }
        else if (k == "sweep_factor") c.metrics.sweep_factor = as_double(m, k);
        else if (k == "seed") {
          if (m.is_null()) return true;
          if (!m.is_number_unsigned()) fail("metrics.seed must be a non-negative integer");
          c.metrics.seed = m.get<std::uint64_t>();
        } else return false;
        return true;
      });
    } else if (key == "verify") {
      for_each_key(v, "verify", [&](const std::string& k, const nlohmann::json& t) {
        if (k == "max_ham_drift") c.verify.max_ham_drift = as_double(t, k);
        else if (k == "max_round_trip") c.verify.max_round_trip = as_double(t, k);
        else if (k == "max_adjoint_vs_unrolled") c.verify.max_adjoint_vs_unrolled = as_double(t, k);
        else if (k == "max_adjoint_vs_fd") c.verify.max_adjoint_vs_fd = as_double(t, k);
        else if (k == "samples") c.verify.samples = as_int(t, k);
        else if (k == "gradient_samples") c.verify.gradient_samples = as_int(t, k);
        else return false;
        return true;
      });
    } else return false;
    return true;
  });
  c.validate();
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json doc{{"train", train_config_to_json(c.train)},
                     {"benchmark", c.benchmark},
                     {"out_dir", c.out_dir},
                     {"metrics",
                      {{"n_proj", c.metrics.n_proj ? nlohmann::json(*c.metrics.n_proj) : nlohmann::json()},
                       {"sweep_factor", c.metrics.sweep_factor},
                       {"seed", c.metrics.seed ? nlohmann::json(*c.metrics.seed) : nlohmann::json()}}},
                     {"verify",
                      {{"max_ham_drift", c.verify.max_ham_drift},
                       {"max_round_trip", c.verify.max_round_trip},
                       {"max_adjoint_vs_unrolled", c.verify.max_adjoint_vs_unrolled},
                       {"max_adjoint_vs_fd", c.verify.max_adjoint_vs_fd},
                       {"samples", c.verify.samples},
                       {"gradient_samples", c.verify.gradient_samples}}}};
  if (c.domain_a) {
    doc["domain_a"] = *c.domain_a;
    doc["domain_b"] = *c.domain_b;
  }
  return doc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
  try {
    return run_config_from_json(doc);
  } catch (const SchemaError& e) {
    throw SchemaError("config file '" + path + "': " + e.what());
  }
}

}  // namespace hdt::cli
