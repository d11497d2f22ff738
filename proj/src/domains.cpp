#include "hdt/domains.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hdt/csv.hpp"
#include "hdt/errors.hpp"

namespace hdt {

SyntheticDomain::SyntheticDomain(int d, std::vector<MixtureComponent> components)
    : d_(d), components_(std::move(components)) {
  if (d_ < 2 || d_ % 2 != 0) throw SchemaError("domain dimension must be even and >= 2");
  if (components_.empty()) throw SchemaError("domain needs at least one component");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw SchemaError("component weights must be positive");
    }
    if (c.mean.size() != d_ || c.cov_diag.size() != d_) {
      throw SchemaError("component mean and cov_diag must have length " + std::to_string(d_));
    }
    if (!c.mean.allFinite() || !c.cov_diag.allFinite() || (c.cov_diag.array() <= 0.0).any()) {
      throw SchemaError("component means must be finite and covariances positive");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw SchemaError("component weights sum to " + csv::format_double(total) + ", expected 1");
  }
}

Vector Sampler::draw(std::uint64_t k) const {
  const CounterStream stream(seed_, k);
  const auto& comps = domain_.components();
  const double u = stream.uniform(0);
  std::size_t pick = comps.size() - 1;
  double cumulative = 0.0;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    cumulative += comps[c].weight;
    if (u < cumulative) {
      pick = c;
      break;
    }
  }
  const auto& comp = comps[pick];
  Vector x(domain_.dim());
  for (int i = 0; i < domain_.dim(); i += 2) {
    const auto u12 = stream.block(1 + static_cast<std::uint64_t>(i / 2));
    const auto z = box_muller(u12[0], u12[1]);
    x[i] = comp.mean[i] + std::sqrt(comp.cov_diag[i]) * z[0];
    x[i + 1] = comp.mean[i + 1] + std::sqrt(comp.cov_diag[i + 1]) * z[1];
  }
  return x;
}

Matrix Sampler::sample(int n) {
  if (n < 0) throw DomainError("sample count must be non-negative");
  Matrix out(domain_.dim(), n);
  for (int j = 0; j < n; ++j) out.col(j) = draw(counter_ + static_cast<std::uint64_t>(j));
  counter_ += static_cast<std::uint64_t>(n);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> benchmark_names() {
  return {"two_gaussians", "gaussian_ring_pair", "mixture_to_mixture"};
}

Benchmark benchmark_from_string(const std::string& name) {
  if (name == "two_gaussians") return Benchmark::TwoGaussians;
  if (name == "gaussian_ring_pair") return Benchmark::GaussianRingPair;
  if (name == "mixture_to_mixture") return Benchmark::MixtureToMixture;
  throw SchemaError("unknown benchmark '" + name +
                    "' (valid: two_gaussians, gaussian_ring_pair, mixture_to_mixture)");
}

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::TwoGaussians: return "two_gaussians";
    case Benchmark::GaussianRingPair: return "gaussian_ring_pair";
    case Benchmark::MixtureToMixture: return "mixture_to_mixture";
  }
  return "?";
}

namespace {

MixtureComponent isotropic(double weight, std::vector<double> mean, double var) {
  Vector m = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  return {weight, m, Vector::Constant(m.size(), var)};
}

}  // namespace

std::pair<SyntheticDomain, SyntheticDomain> builtin_benchmark(Benchmark b) {
  switch (b) {
    case Benchmark::TwoGaussians:
      return {SyntheticDomain(2, {isotropic(1.0, {-4.0, 0.0}, 0.25)}),
              SyntheticDomain(2, {isotropic(1.0, {4.0, 0.0}, 0.25)})};
    case Benchmark::GaussianRingPair: {
      std::vector<MixtureComponent> ring;
      for (int k = 0; k < 8; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / 8.0;
        ring.push_back(isotropic(0.125, {4.0 * std::cos(angle), 4.0 * std::sin(angle)}, 0.09));
      }
      return {SyntheticDomain(2, {isotropic(1.0, {0.0, 0.0}, 1.0)}),
              SyntheticDomain(2, std::move(ring))};
    }
    case Benchmark::MixtureToMixture: {
      // A: corners of a square in the (p_0, p_1) plane; B: a cross in the
      // (q_0, q_1) plane, shifted.
      std::vector<MixtureComponent> a, bb;
      const double s = 3.0;
      a.push_back(isotropic(0.25, {s, s, 0.0, 0.0}, 0.25));
      a.push_back(isotropic(0.25, {-s, s, 0.0, 0.0}, 0.25));
      a.push_back(isotropic(0.25, {-s, -s, 0.0, 0.0}, 0.25));
      a.push_back(isotropic(0.25, {s, -s, 0.0, 0.0}, 0.25));
      bb.push_back(isotropic(0.25, {0.0, 0.0, 4.0, 0.0}, 0.25));
      bb.push_back(isotropic(0.25, {0.0, 0.0, 0.0, 4.0}, 0.25));
      bb.push_back(isotropic(0.25, {0.0, 0.0, -4.0, 0.0}, 0.25));
      bb.push_back(isotropic(0.25, {0.0, 0.0, 0.0, -4.0}, 0.25));
      return {SyntheticDomain(4, std::move(a)), SyntheticDomain(4, std::move(bb))};
    }
  }
  throw SchemaError("unknown benchmark");
}

// ---------------------------------------------------------------------------

nlohmann::json domain_to_json(const SyntheticDomain& domain) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : domain.components()) {
    comps.push_back({{"weight", c.weight},
                     {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"cov_diag", std::vector<double>(c.cov_diag.data(),
                                                      c.cov_diag.data() + c.cov_diag.size())}});
  }
  return {{"d", domain.dim()}, {"components", std::move(comps)}};
}

SyntheticDomain domain_from_json(const nlohmann::json& doc) {
  try {
    for (const auto& [key, _] : doc.items()) {
      if (key != "d" && key != "components") throw SchemaError("unknown domain field '" + key + "'");
    }
    std::vector<MixtureComponent> comps;
    for (const auto& c : doc.at("components")) {
      for (const auto& [key, _] : c.items()) {
        if (key != "weight" && key != "mean" && key != "cov_diag") {
          throw SchemaError("unknown component field '" + key + "'");
        }
      }
      const auto mean = c.at("mean").get<std::vector<double>>();
      const auto cov = c.at("cov_diag").get<std::vector<double>>();
      comps.push_back({c.at("weight").get<double>(),
                       Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                       Eigen::Map<const Vector>(cov.data(), static_cast<Eigen::Index>(cov.size()))});
    }
    return SyntheticDomain(doc.at("d").get<int>(), std::move(comps));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("domain document: ") + e.what());
  }
}

SyntheticDomain load_domain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open domain file '" + path + "'");
  try {
    return domain_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("domain file '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::string batch_to_csv(const Matrix& batch) {
  std::ostringstream out;
  out << csv::state_header(static_cast<int>(batch.rows())) << '\n';
  std::vector<double> row(static_cast<std::size_t>(batch.rows()));
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    for (Eigen::Index i = 0; i < batch.rows(); ++i) row[static_cast<std::size_t>(i)] = batch(i, j);
    csv::write_row(out, row);
  }
  return out.str();
}

void save_batch(const std::string& path, const Matrix& batch) {
  csv::write_file_atomic(path, batch_to_csv(batch));
}

Matrix parse_batch_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("batch CSV is empty: missing header", 1);
  const auto header = csv::split(line);
  const int d = static_cast<int>(header.size());
  if (d < 2 || d % 2 != 0 || csv::state_header(d) != line.substr(0, line.find_last_not_of('\r') + 1)) {
    throw SchemaError("batch CSV header must be p_0..,q_0.. with an even column count", 1);
  }
  std::vector<double> values;
  std::size_t line_no = 1;
  Eigen::Index n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    if (static_cast<int>(fields.size()) != d) {
      throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " values, header declares " + std::to_string(d),
                        line_no);
    }
    for (const auto& f : fields) values.push_back(csv::parse_double(f, line_no));
    ++n;
  }
  return Eigen::Map<const Matrix>(values.data(), d, n);
}

Matrix load_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open batch file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_batch_csv(text.str());
}

}  // namespace hdt
