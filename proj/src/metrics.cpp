#include "hdt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hdt/csv.hpp"
#include "hdt/errors.hpp"
#include "hdt/random.hpp"

namespace hdt {
namespace {

Vector projection_direction(int d, std::uint64_t seed, int j) {
  const CounterStream stream(seed, static_cast<std::uint64_t>(j));
  Vector u(d);
  for (int i = 0; i < d; i += 2) {
    const auto b = stream.block(static_cast<std::uint64_t>(i / 2));
    const auto z = box_muller(b[0], b[1]);
    u[i] = z[0];
    if (i + 1 < d) u[i + 1] = z[1];
  }
  return u / u.norm();
}

}  // namespace

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  // Integrate |Qa(u) - Qb(u)| over the merged breakpoints i/na and j/nb.
  std::size_t i = 0, j = 0;
  double level = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - level) * std::abs(a[i] - b[j]);
    level = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return total;
}

double sliced_wasserstein(const Matrix& x, const Matrix& y, int n_proj, std::uint64_t seed) {
  if (x.cols() == 0 || y.cols() == 0) throw DomainError("sliced_wasserstein: empty batch");
  if (x.rows() != y.rows()) throw ShapeError("sliced_wasserstein: batches differ in dimension");
  if (n_proj < 1) throw DomainError("sliced_wasserstein: n_proj must be >= 1");
  const int d = static_cast<int>(x.rows());
  double sum = 0.0;
  for (int j = 0; j < n_proj; ++j) {
    const Vector u = projection_direction(d, seed, j);
    const Vector px = x.transpose() * u;
    const Vector py = y.transpose() * u;
    sum += wasserstein_1d(std::vector<double>(px.data(), px.data() + px.size()),
                          std::vector<double>(py.data(), py.data() + py.size()));
  }
  return sum / n_proj;
}

double hamiltonian_drift(const HamiltonianField& field, const Trajectory& traj) {
  if (traj.states.empty()) throw DomainError("hamiltonian_drift: empty trajectory");
  const double h0 = hamiltonian_value(field, traj.states.front());
  double drift = 0.0;
  for (const auto& s : traj.states) drift = std::max(drift, std::abs(hamiltonian_value(field, s) - h0));
  return drift;
}

double round_trip_error(const HamiltonianField& field, const Matrix& batch,
                        const IntegrationSpec& spec) {
  require_state_batch(batch, field.dim());
  if (batch.cols() == 0) throw DomainError("round_trip_error: empty batch");
  const Matrix forward = integrate_batch(field, batch, spec);
  const Matrix back = integrate_batch(field, forward, spec.reversed());
  return (back - batch).colwise().norm().mean();
}

// ---------------------------------------------------------------------------

std::string SweepReport::to_csv() const {
  std::ostringstream out;
  out << "t_frac,sw_to_B,sw_to_A,mean_norm,ham_drift,diverged\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << csv::format_double(times[i]) << ',' << csv::format_double(sw_to_b[i]) << ','
        << csv::format_double(sw_to_a[i]) << ',' << csv::format_double(mean_norm[i]) << ','
        << csv::format_double(ham_drift[i]) << ',' << 0 << '\n';
  }
  if (diverged) {
    const double t = times.size() < 1 ? 0.0 : times.back() + 0.1;
    out << csv::format_double(t) << ",nan,nan,nan,nan,1\n";
  }
  return out.str();
}

SweepReport excessive_integration_sweep(const HamiltonianField& field, const Matrix& batch_a,
                                        const Matrix& batch_b_ref, double t_max_factor,
                                        const IntegrationSpec& spec, const SweepOptions& opts) {
  spec.validate();
  if (!(t_max_factor >= 1.0)) throw DomainError("sweep: t_max_factor must be >= 1");
  if (spec.t0 != 0.0 || spec.n_steps % 10 != 0) {
    throw DomainError("sweep: spec must start at t0 = 0 with n_steps a multiple of 10");
  }
  require_state_batch(batch_a, field.dim());
  require_state_batch(batch_b_ref, field.dim());

  const long segments = std::lround(t_max_factor * 10.0);
  const int steps_per_segment = spec.n_steps / 10;
  const double h = spec.step();

  SweepReport report;
  Matrix x = batch_a;
  const Vector h0 = hamiltonian_value_batch(field, x);
  auto record = [&](long k) {
    report.times.push_back(static_cast<double>(k) / 10.0);
    report.sw_to_b.push_back(sliced_wasserstein(x, batch_b_ref, opts.n_proj, opts.seed));
    report.sw_to_a.push_back(sliced_wasserstein(x, batch_a, opts.n_proj, opts.seed));
    report.mean_norm.push_back(x.colwise().norm().mean());
    report.ham_drift.push_back((hamiltonian_value_batch(field, x) - h0).cwiseAbs().maxCoeff());
  };
  record(0);
  for (long k = 1; k <= segments; ++k) {
    try {
      for (int s = 0; s < steps_per_segment; ++s) rk4_step_batch(field, x, h);
    } catch (const DivergenceError&) {
      report.diverged = true;
      break;
    }
    record(k);
  }
  return report;
}

// ---------------------------------------------------------------------------

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

GradientConsistency gradient_consistency_report(const HamiltonianField& field, const Matrix& batch,
                                                const IntegrationSpec& spec,
                                                const GradientCheckOptions& opts) {
  if (!field.is_neural()) throw ContractError("gradient_consistency_report needs a neural field");
  const Matrix final_states = integrate_batch(field, batch, spec);
  const auto adjoint = adjoint_gradients(field, batch, final_states, spec);
  const auto unrolled = unrolled_gradients(field, batch, final_states, spec);

  const ParamVector theta = field.net().flatten();
  const std::size_t n = theta.size();
  std::vector<Eigen::Index> coords;
  if (n <= opts.max_fd_coordinates) {
    for (std::size_t i = 0; i < n; ++i) coords.push_back(static_cast<Eigen::Index>(i));
  } else {
    for (std::size_t i = 0; i < opts.max_fd_coordinates; ++i) {
      coords.push_back(static_cast<Eigen::Index>(i * n / opts.max_fd_coordinates));
    }
  }

  auto loss = [&](const ParamVector& p) {
    return 0.5 * integrate_batch(field.with_params(p), batch, spec).squaredNorm();
  };
  Vector fd(static_cast<Eigen::Index>(coords.size()));
  Vector adj(fd.size());
  ParamVector probe = theta;
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const Eigen::Index i = coords[c];
    probe.flat[i] = theta.flat[i] + opts.fd_eps;
    const double up = loss(probe);
    probe.flat[i] = theta.flat[i] - opts.fd_eps;
    const double down = loss(probe);
    probe.flat[i] = theta.flat[i];
    fd[static_cast<Eigen::Index>(c)] = (up - down) / (2.0 * opts.fd_eps);
    adj[static_cast<Eigen::Index>(c)] = adjoint.theta.flat[i];
  }

  return {relative_error(adjoint.theta.flat, unrolled.theta.flat), relative_error(adj, fd),
          coords.size()};
}

}  // namespace hdt
