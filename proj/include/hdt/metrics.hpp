#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdt/ode.hpp"

namespace hdt {

/// Mean over `n_proj` seeded unit directions of the 1-D Wasserstein-1
/// distance between the projected samples. Batches are columns of any common
/// dimension; sizes may differ (exact integral of the quantile difference).
double sliced_wasserstein(const Matrix& x, const Matrix& y, int n_proj, std::uint64_t seed);

/// W1 between two 1-D empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// max_t |H(x_t) - H(x_0)|.
double hamiltonian_drift(const HamiltonianField& field, const Trajectory& traj);

/// Mean over the batch of ‖R(F(x)) - x‖.
double round_trip_error(const HamiltonianField& field, const Matrix& batch,
                        const IntegrationSpec& spec);

struct SweepReport {
  std::vector<double> times;  // fractions of T
  std::vector<double> sw_to_b;
  std::vector<double> sw_to_a;
  std::vector<double> mean_norm;
  std::vector<double> ham_drift;  // max over the batch of |H(x_t) - H(x_0)|
  bool diverged = false;

  std::string to_csv() const;
};

struct SweepOptions {
  int n_proj = 128;
  std::uint64_t seed = 0;
};

/// Integrates `batch_a` over [0, factor·T] with the step of `spec`
/// (spec.t0 must be 0 and spec.n_steps a multiple of 10), recording metrics
/// every 0.1·T. Non-finite states truncate the report and set `diverged`.
SweepReport excessive_integration_sweep(const HamiltonianField& field, const Matrix& batch_a,
                                        const Matrix& batch_b_ref, double t_max_factor,
                                        const IntegrationSpec& spec, const SweepOptions& opts = {});

/// ‖a - b‖ / max(‖a‖, ‖b‖); 0 when both vanish.
double relative_error(const Vector& a, const Vector& b);

struct GradientConsistency {
  double adjoint_vs_unrolled = 0.0;
  double adjoint_vs_finite_diff = 0.0;
  std::size_t fd_coordinates = 0;
};

struct GradientCheckOptions {
  double fd_eps = 1e-5;
  /// Finite differences cover all parameters when there are at most this
  /// many, otherwise an evenly strided subset of this size.
  std::size_t max_fd_coordinates = 256;
};

/// Compares adjoint, unrolled and finite-difference parameter gradients of
/// L = Σ ½‖x(T)‖² over the batch.
GradientConsistency gradient_consistency_report(const HamiltonianField& field, const Matrix& batch,
                                                const IntegrationSpec& spec,
                                                const GradientCheckOptions& opts = {});

}  // namespace hdt
