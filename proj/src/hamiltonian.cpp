#include "hdt/hamiltonian.hpp"

#include <nlohmann/json.hpp>

#include "hdt/errors.hpp"

namespace hdt {
namespace {

void require_dim(int d) {
  if (d < 2 || d % 2 != 0) {
    throw ShapeError("state dimension must be even and >= 2, got " + std::to_string(d));
  }
}

void require_conforming(const HamiltonianField& field, Eigen::Index rows) {
  if (rows != field.dim()) {
    throw ShapeError("state has dimension " + std::to_string(rows) + ", field expects " +
                     std::to_string(field.dim()));
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

State::State(Vector x) : x_(std::move(x)) {
  require_dim(static_cast<int>(x_.size()));
  if (!x_.allFinite()) throw DomainError("state entries must be finite");
}

State::State(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw ShapeError("p and q must have equal length");
  Vector x(p.size() + q.size());
  x << p, q;
  *this = State(std::move(x));
}

void require_state_batch(const Matrix& batch, int d) {
  if (batch.rows() != d) {
    throw ShapeError("batch has dimension " + std::to_string(batch.rows()) + ", expected " +
                     std::to_string(d));
  }
}

Matrix apply_symplectic(const Matrix& g) {
  const Eigen::Index h = g.rows() / 2;
  Matrix out(g.rows(), g.cols());
  out.topRows(h) = -g.bottomRows(h);
  out.bottomRows(h) = g.topRows(h);
  return out;
}

Matrix apply_symplectic_transpose(const Matrix& a) {
  const Eigen::Index h = a.rows() / 2;
  Matrix out(a.rows(), a.cols());
  out.topRows(h) = a.bottomRows(h);
  out.bottomRows(h) = -a.topRows(h);
  return out;
}

Vector apply_symplectic(const Vector& g) { return apply_symplectic(Matrix(g)).col(0); }
Vector apply_symplectic_transpose(const Vector& a) {
  return apply_symplectic_transpose(Matrix(a)).col(0);
}

Matrix symplectic_matrix(int d) {
  require_dim(d);
  return apply_symplectic(Matrix(Matrix::Identity(d, d)));
}

// ---------------------------------------------------------------------------

HamiltonianField HamiltonianField::neural(Mlp net) {
  if (net.output_dim() != 1) {
    throw ContractError("a neural Hamiltonian must have output dim 1, got " +
                        std::to_string(net.output_dim()));
  }
  if (!net.has_smooth_hidden()) {
    throw ContractError("a neural Hamiltonian needs a Tanh or Softplus hidden activation");
  }
  const int d = net.input_dim();
  require_dim(d);
  return HamiltonianField(NeuralHamiltonian{std::move(net)}, d);
}

HamiltonianField HamiltonianField::harmonic(int d) {
  require_dim(d);
  return HamiltonianField(HarmonicOscillator{}, d);
}

HamiltonianField HamiltonianField::constant(int d, double c) {
  require_dim(d);
  return HamiltonianField(ConstantHamiltonian{c}, d);
}

const Mlp& HamiltonianField::net() const {
  if (const auto* n = std::get_if<NeuralHamiltonian>(&kind_)) return n->net;
  throw ContractError("analytic Hamiltonian has no network parameters");
}

HamiltonianField HamiltonianField::with_params(const ParamVector& p) const {
  return neural(net().unflatten(p));
}

// ---------------------------------------------------------------------------

Vector hamiltonian_value_batch(const HamiltonianField& field, const Matrix& x) {
  require_conforming(field, x.rows());
  return std::visit(
      Overloaded{
          [&](const NeuralHamiltonian& n) -> Vector {
            return mlp_forward_batch(n.net, x).row(0).transpose();
          },
          [&](const HarmonicOscillator&) -> Vector {
            return 0.5 * x.colwise().squaredNorm().transpose();
          },
          [&](const ConstantHamiltonian& c) -> Vector {
            return Vector::Constant(x.cols(), c.value);
          }},
      field.kind());
}

double hamiltonian_value(const HamiltonianField& field, const State& x) {
  return hamiltonian_value_batch(field, x.vec())[0];
}

Matrix hamiltonian_gradient_batch(const HamiltonianField& field, const Matrix& x) {
  require_conforming(field, x.rows());
  return std::visit(
      Overloaded{[&](const NeuralHamiltonian& n) -> Matrix { return input_gradient_batch(n.net, x); },
                 [&](const HarmonicOscillator&) -> Matrix { return x; },
                 [&](const ConstantHamiltonian&) -> Matrix {
                   return Matrix::Zero(x.rows(), x.cols());
                 }},
      field.kind());
}

Vector hamiltonian_gradient(const HamiltonianField& field, const State& x) {
  return hamiltonian_gradient_batch(field, x.vec()).col(0);
}

Matrix vector_field_batch(const HamiltonianField& field, const Matrix& x) {
  return apply_symplectic(hamiltonian_gradient_batch(field, x));
}

Vector vector_field(const HamiltonianField& field, const State& x) {
  return vector_field_batch(field, x.vec()).col(0);
}

// a·f = a·J∇H = (Jᵀa)·∇H, so both cotangents come from one second-order
// sweep with direction Jᵀa.
FieldVjpBatch field_vjp_batch(const HamiltonianField& field, const Matrix& x, const Matrix& a,
                              bool want_params) {
  require_conforming(field, x.rows());
  if (a.rows() != x.rows() || a.cols() != x.cols()) {
    throw ShapeError("field_vjp cotangent must match the state batch shape");
  }
  const Matrix direction = apply_symplectic_transpose(a);
  return std::visit(
      Overloaded{
          [&](const NeuralHamiltonian& n) -> FieldVjpBatch {
            auto r = grad_vjp_batch(n.net, x, direction, want_params);
            return {apply_symplectic(r.gradient), std::move(r.x_cotangent),
                    std::move(r.theta_cotangent)};
          },
          [&](const HarmonicOscillator&) -> FieldVjpBatch {
            return {apply_symplectic(x), direction, ParamVector{}};
          },
          [&](const ConstantHamiltonian&) -> FieldVjpBatch {
            return {Matrix::Zero(x.rows(), x.cols()), Matrix::Zero(x.rows(), x.cols()),
                    ParamVector{}};
          }},
      field.kind());
}

FieldVjp field_vjp(const HamiltonianField& field, const State& x, const Vector& a) {
  auto r = field_vjp_batch(field, x.vec(), a);
  return {r.x_cotangent.col(0), std::move(r.theta_cotangent)};
}

double divergence(const HamiltonianField& field, const State& x) {
  const int d = x.dim();
  require_conforming(field, d);
  // Column i of the batch probes ∂f_i/∂x_i with basis cotangent e_i.
  const Matrix xs = x.vec().replicate(1, d);
  const Matrix basis = Matrix::Identity(d, d);
  const Matrix cot = field_vjp_batch(field, xs, basis, false).x_cotangent;
  return cot.diagonal().sum();
}

// ---------------------------------------------------------------------------

nlohmann::json field_to_json(const HamiltonianField& field) {
  return std::visit(
      Overloaded{[&](const NeuralHamiltonian& n) -> nlohmann::json {
                   return {{"kind", "neural"}, {"mlp", mlp_to_json(n.net)}};
                 },
                 [&](const HarmonicOscillator&) -> nlohmann::json {
                   return {{"kind", "harmonic_oscillator"}, {"d", field.dim()}};
                 },
                 [&](const ConstantHamiltonian& c) -> nlohmann::json {
                   return {{"kind", "constant"}, {"d", field.dim()}, {"value", c.value}};
                 }},
      field.kind());
}

HamiltonianField field_from_json(const nlohmann::json& doc) {
  try {
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "neural") return HamiltonianField::neural(mlp_from_json(doc.at("mlp")));
    if (kind == "harmonic_oscillator") return HamiltonianField::harmonic(doc.at("d").get<int>());
    if (kind == "constant") {
      return HamiltonianField::constant(doc.at("d").get<int>(), doc.at("value").get<double>());
    }
    throw SchemaError("unknown Hamiltonian kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("Hamiltonian document: ") + e.what());
  }
}

}  // namespace hdt
