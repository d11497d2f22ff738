#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hdt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { Tanh, Softplus, Identity, Sigmoid };
enum class OutputActivation { Identity, Sigmoid };

std::string to_string(Activation a);
std::string to_string(OutputActivation a);
Activation activation_from_string(const std::string& s);
OutputActivation output_activation_from_string(const std::string& s);

/// Flat parameter coordinates of an Mlp: all weight matrices (row-major,
/// layer order) followed by all bias vectors (layer order).
struct ParamVector {
  Vector flat;
  std::vector<int> layout;  // layer_dims of the owning network

  static ParamVector zeros(const std::vector<int>& layout);
  static std::size_t size_for(const std::vector<int>& layout);

  std::size_t size() const { return static_cast<std::size_t>(flat.size()); }
  double norm() const { return flat.norm(); }
};

/// Fully-connected network. Hidden layers share one activation; the last
/// layer applies `output_activation`.
class Mlp {
 public:
  /// Validates shapes and finiteness; throws ShapeError / DomainError.
  Mlp(std::vector<int> layer_dims, Activation activation,
      OutputActivation output_activation, std::vector<Matrix> weights,
      std::vector<Vector> biases);

  static Mlp zeros(std::vector<int> layer_dims, Activation activation,
                   OutputActivation output_activation);

  /// Weights and biases uniform in [-s, s], s = sqrt(1 / fan_in), drawn from
  /// a counter stream keyed by `seed`.
  static Mlp random(std::vector<int> layer_dims, Activation activation,
                    OutputActivation output_activation, std::uint64_t seed);

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  Activation activation() const { return activation_; }
  OutputActivation output_activation() const { return output_activation_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

  int input_dim() const { return layer_dims_.front(); }
  int output_dim() const { return layer_dims_.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t num_hidden_layers() const { return weights_.size() - 1; }
  std::size_t num_params() const { return ParamVector::size_for(layer_dims_); }

  /// True when every activation in the network is twice differentiable and
  /// hidden layers (if any) use Tanh or Softplus.
  bool has_smooth_hidden() const;

  ParamVector flatten() const;
  /// Same architecture, parameters taken from `p` (layout must match).
  Mlp unflatten(const ParamVector& p) const;

 private:
  std::vector<int> layer_dims_;
  Activation activation_;
  OutputActivation output_activation_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

// ---------------------------------------------------------------------------
// Single-sample operations.

Vector mlp_forward(const Mlp& net, const Vector& x);

/// ∇_x net(x) for a scalar-output net.
Vector input_gradient(const Mlp& net, const Vector& x);

/// ∂(v · net(x)) / ∂θ.
ParamVector param_vjp(const Mlp& net, const Vector& x, const Vector& v);

struct GradVjp {
  Vector x_cotangent;       // ∂(v · ∇_x H) / ∂x  (= Hessian · v)
  ParamVector theta_cotangent;  // ∂(v · ∇_x H) / ∂θ
};

/// Second-order vector products of a scalar-output net with smooth hidden
/// activation.
GradVjp grad_vjp(const Mlp& net, const Vector& x, const Vector& v);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double eps);

// ---------------------------------------------------------------------------
// Batched operations. Batches are column-major: one sample per column.
// Parameter gradients are summed over the batch.

Matrix mlp_forward_batch(const Mlp& net, const Matrix& x);

/// ∇_x net for every column; scalar-output nets only.
Matrix input_gradient_batch(const Mlp& net, const Matrix& x);

struct Backprop {
  Matrix input_cotangent;  // in_dim x batch
  ParamVector param_grad;  // summed over the batch
};

/// Reverse pass of Σ_j v_j · net(x_j). `v` is out_dim x batch.
Backprop backprop_batch(const Mlp& net, const Matrix& x, const Matrix& v,
                        bool want_params = true);

struct GradVjpBatch {
  Matrix gradient;         // ∇_x H at each column (computed as a by-product)
  Matrix x_cotangent;      // Hessian(x_j) v_j
  ParamVector theta_cotangent;  // Σ_j ∂(v_j · ∇_x H(x_j)) / ∂θ
};

GradVjpBatch grad_vjp_batch(const Mlp& net, const Matrix& x, const Matrix& v,
                            bool want_params = true);

// ---------------------------------------------------------------------------
// Serialization.

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);

}  // namespace hdt
