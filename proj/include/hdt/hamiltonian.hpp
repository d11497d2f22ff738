#pragma once

#include <variant>

#include <nlohmann/json_fwd.hpp>

#include "hdt/mlp.hpp"

namespace hdt {

/// A point x = [p, q] of the phase space; p is the first half, q the second.
class State {
 public:
  /// Throws ShapeError for odd or < 2 dimension, DomainError if non-finite.
  explicit State(Vector x);
  State(const Vector& p, const Vector& q);

  int dim() const { return static_cast<int>(x_.size()); }
  int half_dim() const { return dim() / 2; }
  const Vector& vec() const { return x_; }
  auto p() const { return x_.head(half_dim()); }
  auto q() const { return x_.tail(half_dim()); }

 private:
  Vector x_;
};

/// Column batch of states (d x n). Checks dimension parity only.
void require_state_batch(const Matrix& batch, int d);

// Canonical symplectic matrix J = [[0, -I], [I, 0]] acting on (p, q) blocks.
Vector apply_symplectic(const Vector& g);            // J g
Vector apply_symplectic_transpose(const Vector& a);  // Jᵀ a = -J a
Matrix apply_symplectic(const Matrix& g);
Matrix apply_symplectic_transpose(const Matrix& a);
/// Dense J of size d x d.
Matrix symplectic_matrix(int d);

struct HarmonicOscillator {};  // H = ½(‖p‖² + ‖q‖²)
struct ConstantHamiltonian {
  double value = 0.0;
};
struct NeuralHamiltonian {
  Mlp net;
};

/// H: ℝ^d → ℝ, either a neural network or a closed-form test field.
class HamiltonianField {
 public:
  using Kind = std::variant<NeuralHamiltonian, HarmonicOscillator, ConstantHamiltonian>;

  /// Neural field; the net must have an even input dim, scalar output and a
  /// Tanh/Softplus hidden activation (throws ContractError otherwise).
  static HamiltonianField neural(Mlp net);
  static HamiltonianField harmonic(int d);
  static HamiltonianField constant(int d, double c);

  int dim() const { return dim_; }
  bool is_neural() const { return std::holds_alternative<NeuralHamiltonian>(kind_); }
  const Kind& kind() const { return kind_; }
  /// Throws ContractError for analytic fields.
  const Mlp& net() const;
  std::size_t num_params() const { return is_neural() ? net().num_params() : 0; }
  /// Same kind with the neural parameters replaced.
  HamiltonianField with_params(const ParamVector& p) const;

 private:
  HamiltonianField(Kind kind, int dim) : kind_(std::move(kind)), dim_(dim) {}
  Kind kind_;
  int dim_;
};

double hamiltonian_value(const HamiltonianField& field, const State& x);
/// H at every column.
Vector hamiltonian_value_batch(const HamiltonianField& field, const Matrix& x);

/// ∇H at x.
Vector hamiltonian_gradient(const HamiltonianField& field, const State& x);
Matrix hamiltonian_gradient_batch(const HamiltonianField& field, const Matrix& x);

/// f(x) = (-∂H/∂q, ∂H/∂p).
Vector vector_field(const HamiltonianField& field, const State& x);
Matrix vector_field_batch(const HamiltonianField& field, const Matrix& x);

struct FieldVjp {
  Vector x_cotangent;
  ParamVector theta_cotangent;  // empty layout for analytic fields
};

/// (∂(a·f)/∂x, ∂(a·f)/∂θ).
FieldVjp field_vjp(const HamiltonianField& field, const State& x, const Vector& a);

struct FieldVjpBatch {
  Matrix field;        // f at each column, computed in the same sweep
  Matrix x_cotangent;  // per column
  ParamVector theta_cotangent;  // summed over columns
};

FieldVjpBatch field_vjp_batch(const HamiltonianField& field, const Matrix& x, const Matrix& a,
                              bool want_params = true);

/// Σ_i ∂f_i/∂x_i, via d basis cotangents.
double divergence(const HamiltonianField& field, const State& x);

nlohmann::json field_to_json(const HamiltonianField& field);
HamiltonianField field_from_json(const nlohmann::json& doc);

}  // namespace hdt
