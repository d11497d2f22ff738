#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hdt/hamiltonian.hpp"

namespace hdt {

enum class Method { RK4 };

/// Uniform fixed-step grid from t0 to t1 (t1 < t0 integrates backward).
struct IntegrationSpec {
  double t0 = 0.0;
  double t1 = 1.0;
  int n_steps = 100;
  Method method = Method::RK4;

  /// Throws DomainError if n_steps < 1, t0 == t1 or a bound is non-finite.
  void validate() const;
  double step() const { return (t1 - t0) / n_steps; }
  /// Grid point k: t0 + k·(t1 − t0)/n_steps; the last point is exactly t1.
  double time(int k) const;
  /// Same grid traversed from t1 to t0.
  IntegrationSpec reversed() const { return {t1, t0, n_steps, method}; }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;

  const State& final_state() const { return states.back(); }
};

/// One classical RK4 step of dx/dt = f(x). `t` is bookkeeping only.
State rk4_step(const HamiltonianField& field, const State& x, double t, double h);

/// In-place RK4 step on every column of `x`.
void rk4_step_batch(const HamiltonianField& field, Matrix& x, double h);

Trajectory integrate(const HamiltonianField& field, const State& x0, const IntegrationSpec& spec);

/// Integrates from `forward.t1` back to `forward.t0` with the same step count
/// (i.e. the inverse of `integrate(field, ·, forward)`).
Trajectory reverse_integrate(const HamiltonianField& field, const State& xT,
                             const IntegrationSpec& forward);

/// Final states of a batch integrated over `spec`.
Matrix integrate_batch(const HamiltonianField& field, const Matrix& x0,
                       const IntegrationSpec& spec);

/// Integrates a batch step by step, calling `observer(step_index, x)` after
/// each step (step_index runs 1..n_steps) and once with 0 before the first.
void integrate_batch_observed(const HamiltonianField& field, Matrix x,
                              const IntegrationSpec& spec,
                              const std::function<void(int, const Matrix&)>& observer);

struct GradientResult {
  ParamVector theta;  // Σ over samples of dL/dθ
  Matrix x0;          // per-sample dL/dx(t0), d x batch
};

/// Continuous adjoint: integrates (x, a, g_θ) jointly from t1 back to t0,
/// with x reconstructed from x(t1). `cotangents` are dL/dx(t1).
GradientResult adjoint_gradients(const HamiltonianField& field, const Matrix& x0,
                                 const Matrix& cotangents, const IntegrationSpec& spec);

/// As above, starting from already-integrated final states x(t1).
GradientResult adjoint_gradients_from_final(const HamiltonianField& field, const Matrix& x_final,
                                            const Matrix& cotangents,
                                            const IntegrationSpec& spec);

/// Exact reverse-mode gradient of the discrete RK4 map.
GradientResult unrolled_gradients(const HamiltonianField& field, const Matrix& x0,
                                  const Matrix& cotangents, const IntegrationSpec& spec);

/// CSV `t,p_0..,q_0..` with 17 significant digits.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void save_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace hdt
