#include "hdt/ode.hpp"

#include <cmath>
#include <sstream>

#include "hdt/csv.hpp"
#include "hdt/errors.hpp"

namespace hdt {
namespace {

void check_stage(const Matrix& k, const char* stage, std::ptrdiff_t step) {
  if (!k.allFinite()) {
    throw DivergenceError(std::string("non-finite RK4 stage ") + stage + " at step " +
                              std::to_string(step),
                          step);
  }
}

void rk4_advance(const HamiltonianField& field, Matrix& x, double h, std::ptrdiff_t step) {
  auto stage = [&](const Matrix& arg, const char* name) {
    check_stage(arg, name, step);
    Matrix k = vector_field_batch(field, arg);
    check_stage(k, name, step);
    return k;
  };
  const Matrix k1 = stage(x, "k1");
  const Matrix k2 = stage(x + (0.5 * h) * k1, "k2");
  const Matrix k3 = stage(x + (0.5 * h) * k2, "k3");
  const Matrix k4 = stage(x + h * k3, "k4");
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!x.allFinite()) {
    throw DivergenceError("non-finite state after step " + std::to_string(step), step);
  }
}

void require_neural(const HamiltonianField& field, const char* op) {
  if (!field.is_neural()) {
    throw ContractError(std::string(op) + " needs a neural field: analytic fields have no parameters");
  }
}

void require_gradient_inputs(const HamiltonianField& field, const Matrix& x,
                             const Matrix& cotangents) {
  require_state_batch(x, field.dim());
  if (cotangents.rows() != x.rows() || cotangents.cols() != x.cols()) {
    throw ShapeError("loss cotangents must have the same shape as the state batch");
  }
}

}  // namespace

void IntegrationSpec::validate() const {
  if (n_steps < 1) throw DomainError("n_steps must be >= 1");
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw DomainError("time bounds must be finite");
  if (t0 == t1) throw DomainError("t0 and t1 must differ");
}

double IntegrationSpec::time(int k) const {
  if (k == n_steps) return t1;
  return t0 + k * (t1 - t0) / n_steps;
}

State rk4_step(const HamiltonianField& field, const State& x, double /*t*/, double h) {
  if (h == 0.0 || !std::isfinite(h)) throw DomainError("rk4_step: step must be finite and non-zero");
  Matrix m = x.vec();
  rk4_advance(field, m, h, 0);
  return State(m.col(0));
}

void rk4_step_batch(const HamiltonianField& field, Matrix& x, double h) {
  if (h == 0.0 || !std::isfinite(h)) throw DomainError("rk4_step: step must be finite and non-zero");
  require_state_batch(x, field.dim());
  rk4_advance(field, x, h, 0);
}

Trajectory integrate(const HamiltonianField& field, const State& x0, const IntegrationSpec& spec) {
  spec.validate();
  require_state_batch(x0.vec(), field.dim());
  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(spec.n_steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(spec.n_steps) + 1);
  traj.times.push_back(spec.time(0));
  traj.states.push_back(x0);
  const double h = spec.step();
  Matrix x = x0.vec();
  for (int k = 0; k < spec.n_steps; ++k) {
    rk4_advance(field, x, h, k);
    traj.times.push_back(spec.time(k + 1));
    traj.states.emplace_back(x.col(0));
  }
  return traj;
}

Trajectory reverse_integrate(const HamiltonianField& field, const State& xT,
                             const IntegrationSpec& forward) {
  return integrate(field, xT, forward.reversed());
}

void integrate_batch_observed(const HamiltonianField& field, Matrix x, const IntegrationSpec& spec,
                              const std::function<void(int, const Matrix&)>& observer) {
  spec.validate();
  require_state_batch(x, field.dim());
  const double h = spec.step();
  observer(0, x);
  for (int k = 0; k < spec.n_steps; ++k) {
    rk4_advance(field, x, h, k);
    observer(k + 1, x);
  }
}

Matrix integrate_batch(const HamiltonianField& field, const Matrix& x0, const IntegrationSpec& spec) {
  spec.validate();
  require_state_batch(x0, field.dim());
  Matrix x = x0;
  const double h = spec.step();
  for (int k = 0; k < spec.n_steps; ++k) rk4_advance(field, x, h, k);
  return x;
}

// ---------------------------------------------------------------------------

GradientResult adjoint_gradients(const HamiltonianField& field, const Matrix& x0,
                                 const Matrix& cotangents, const IntegrationSpec& spec) {
  require_neural(field, "adjoint_gradients");
  require_gradient_inputs(field, x0, cotangents);
  return adjoint_gradients_from_final(field, integrate_batch(field, x0, spec), cotangents, spec);
}

// Augmented system, integrated from t1 to t0 with step -h:
//   dx/dt = f(x),  da/dt = -aᵀ ∂f/∂x,  dg/dt = -aᵀ ∂f/∂θ,  g(t1) = 0.
GradientResult adjoint_gradients_from_final(const HamiltonianField& field, const Matrix& x_final,
                                            const Matrix& cotangents,
                                            const IntegrationSpec& spec) {
  require_neural(field, "adjoint_gradients");
  spec.validate();
  require_gradient_inputs(field, x_final, cotangents);

  const double h = -spec.step();
  Matrix x = x_final;
  Matrix a = cotangents;
  Vector g = Vector::Zero(static_cast<Eigen::Index>(field.num_params()));

  for (int n = 0; n < spec.n_steps; ++n) {
    const std::ptrdiff_t step = spec.n_steps - 1 - n;
    auto s1 = field_vjp_batch(field, x, a);
    check_stage(s1.field, "k1", step);
    auto s2 = field_vjp_batch(field, x + (0.5 * h) * s1.field, a - (0.5 * h) * s1.x_cotangent);
    check_stage(s2.field, "k2", step);
    auto s3 = field_vjp_batch(field, x + (0.5 * h) * s2.field, a - (0.5 * h) * s2.x_cotangent);
    check_stage(s3.field, "k3", step);
    auto s4 = field_vjp_batch(field, x + h * s3.field, a - h * s3.x_cotangent);
    check_stage(s4.field, "k4", step);

    x += (h / 6.0) * (s1.field + 2.0 * s2.field + 2.0 * s3.field + s4.field);
    a -= (h / 6.0) * (s1.x_cotangent + 2.0 * s2.x_cotangent + 2.0 * s3.x_cotangent + s4.x_cotangent);
    g -= (h / 6.0) * (s1.theta_cotangent.flat + 2.0 * s2.theta_cotangent.flat +
                      2.0 * s3.theta_cotangent.flat + s4.theta_cotangent.flat);
    if (!x.allFinite() || !a.allFinite() || !g.allFinite()) {
      throw DivergenceError("non-finite adjoint state at step " + std::to_string(step), step);
    }
  }
  return {ParamVector{std::move(g), field.net().layer_dims()}, std::move(a)};
}

GradientResult unrolled_gradients(const HamiltonianField& field, const Matrix& x0,
                                  const Matrix& cotangents, const IntegrationSpec& spec) {
  require_neural(field, "unrolled_gradients");
  spec.validate();
  require_gradient_inputs(field, x0, cotangents);

  const double h = spec.step();
  std::vector<Matrix> tape;
  tape.reserve(static_cast<std::size_t>(spec.n_steps));
  Matrix x = x0;
  for (int k = 0; k < spec.n_steps; ++k) {
    tape.push_back(x);
    rk4_advance(field, x, h, k);
  }

  Matrix a = cotangents;
  Vector g = Vector::Zero(static_cast<Eigen::Index>(field.num_params()));
  for (int k = spec.n_steps; k-- > 0;) {
    const Matrix& xk = tape[static_cast<std::size_t>(k)];
    const Matrix k1 = vector_field_batch(field, xk);
    const Matrix y2 = xk + (0.5 * h) * k1;
    const Matrix k2 = vector_field_batch(field, y2);
    const Matrix y3 = xk + (0.5 * h) * k2;
    const Matrix k3 = vector_field_batch(field, y3);
    const Matrix y4 = xk + h * k3;

    // x_{k+1} = x_k + h/6 (k1 + 2 k2 + 2 k3 + k4), k_i = f(y_i).
    const auto r4 = field_vjp_batch(field, y4, (h / 6.0) * a);
    const auto r3 = field_vjp_batch(field, y3, (h / 3.0) * a + h * r4.x_cotangent);
    const auto r2 = field_vjp_batch(field, y2, (h / 3.0) * a + (0.5 * h) * r3.x_cotangent);
    const auto r1 = field_vjp_batch(field, xk, (h / 6.0) * a + (0.5 * h) * r2.x_cotangent);
    a += r1.x_cotangent + r2.x_cotangent + r3.x_cotangent + r4.x_cotangent;
    g += r1.theta_cotangent.flat + r2.theta_cotangent.flat + r3.theta_cotangent.flat +
         r4.theta_cotangent.flat;
    if (!a.allFinite() || !g.allFinite()) {
      throw DivergenceError("non-finite unrolled adjoint at step " + std::to_string(k), k);
    }
  }
  return {ParamVector{std::move(g), field.net().layer_dims()}, std::move(a)};
}

// ---------------------------------------------------------------------------

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const int d = traj.states.empty() ? 0 : traj.states.front().dim();
  out << "t," << csv::state_header(d) << '\n';
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    std::vector<double> row{traj.times[i]};
    const Vector& x = traj.states[i].vec();
    row.insert(row.end(), x.data(), x.data() + x.size());
    csv::write_row(out, row);
  }
}

void save_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  csv::write_file_atomic(path, out.str());
}

}  // namespace hdt
