#include "hdt/mlp.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hdt/errors.hpp"
#include "hdt/random.hpp"

namespace hdt {
namespace {

using Array = Eigen::ArrayXXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Activation values and the first two derivatives, elementwise on a
// pre-activation block.
Array act_value(Activation a, const Array& z) {
  switch (a) {
    case Activation::Tanh: {
      // exp vectorizes for doubles, std::tanh does not.
      const Array e = (-2.0 * z.abs()).exp();
      const Array t = (1.0 - e) / (1.0 + e);
      return (z < 0.0).select(-t, t);
    }
    case Activation::Softplus:
      return z.max(0.0) + (-z.abs()).exp().log1p();
    case Activation::Identity:
      return z;
    case Activation::Sigmoid:
      return 1.0 / (1.0 + (-z).exp());
  }
  return z;
}

// Derivatives are expressed through the activation value `h` where cheaper.
Array act_d1(Activation a, const Array& z, const Array& h) {
  switch (a) {
    case Activation::Tanh:
      return 1.0 - h.square();
    case Activation::Softplus:
      return 1.0 / (1.0 + (-z).exp());
    case Activation::Identity:
      return Array::Ones(z.rows(), z.cols());
    case Activation::Sigmoid:
      return h * (1.0 - h);
  }
  return z;
}

Array act_d2(Activation a, const Array& z, const Array& h) {
  switch (a) {
    case Activation::Tanh:
      return -2.0 * h * (1.0 - h.square());
    case Activation::Softplus: {
      const Array s = 1.0 / (1.0 + (-z).exp());
      return s * (1.0 - s);
    }
    case Activation::Identity:
      return Array::Zero(z.rows(), z.cols());
    case Activation::Sigmoid:
      return h * (1.0 - h) * (1.0 - 2.0 * h);
  }
  return z;
}

Activation layer_activation(const Mlp& net, std::size_t k) {
  if (k + 1 < net.num_layers()) return net.activation();
  return net.output_activation() == OutputActivation::Sigmoid ? Activation::Sigmoid
                                                               : Activation::Identity;
}

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite input");
}

void require_input(const Mlp& net, const Matrix& x) {
  if (x.rows() != net.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(x.rows()) +
                     ", network expects " + std::to_string(net.input_dim()));
  }
  require_finite(x, "mlp input");
}

void require_scalar(const Mlp& net, const char* op) {
  if (net.output_dim() != 1) {
    throw ContractError(std::string(op) + " requires a scalar-output network, got output dim " +
                        std::to_string(net.output_dim()));
  }
}

// Writes per-layer weight/bias gradients into a flat vector.
class ParamWriter {
 public:
  explicit ParamWriter(const std::vector<int>& layout, bool allocate = true)
      : out_(allocate ? ParamVector::zeros(layout) : ParamVector{Vector(), layout}) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k + 1 < layout.size(); ++k) {
      weight_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(layout[k + 1]) * layout[k];
    }
    for (std::size_t k = 0; k + 1 < layout.size(); ++k) {
      bias_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(layout[k + 1]);
    }
  }

  Eigen::Map<RowMajorMatrix> weight(std::size_t k) {
    const auto& l = out_.layout;
    return {out_.flat.data() + weight_offsets_[k], l[k + 1], l[k]};
  }
  Eigen::Map<Vector> bias(std::size_t k) {
    return {out_.flat.data() + bias_offsets_[k], out_.layout[k + 1]};
  }
  ParamVector take() { return std::move(out_); }

 private:
  ParamVector out_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
};

struct ForwardTape {
  std::vector<Matrix> pre;   // z_k, k = 1..L
  std::vector<Matrix> post;  // h_k, k = 0..L (h_0 = input)
};

ForwardTape run_forward(const Mlp& net, const Matrix& x) {
  ForwardTape tape;
  tape.post.reserve(net.num_layers() + 1);
  tape.pre.reserve(net.num_layers());
  tape.post.push_back(x);
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    Matrix z = net.weights()[k] * tape.post.back();
    z.colwise() += net.biases()[k];
    tape.post.push_back(act_value(layer_activation(net, k), z.array()).matrix());
    tape.pre.push_back(std::move(z));
  }
  return tape;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

std::string to_string(OutputActivation a) {
  return a == OutputActivation::Sigmoid ? "sigmoid" : "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  if (s == "identity") return Activation::Identity;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw SchemaError("unknown activation '" + s + "'");
}

OutputActivation output_activation_from_string(const std::string& s) {
  if (s == "identity") return OutputActivation::Identity;
  if (s == "sigmoid") return OutputActivation::Sigmoid;
  throw SchemaError("unknown output activation '" + s + "'");
}

// ---------------------------------------------------------------------------

std::size_t ParamVector::size_for(const std::vector<int>& layout) {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < layout.size(); ++k) {
    n += static_cast<std::size_t>(layout[k + 1]) * layout[k] + layout[k + 1];
  }
  return n;
}

ParamVector ParamVector::zeros(const std::vector<int>& layout) {
  return {Vector::Zero(static_cast<Eigen::Index>(size_for(layout))), layout};
}

Mlp::Mlp(std::vector<int> layer_dims, Activation activation,
         OutputActivation output_activation, std::vector<Matrix> weights,
         std::vector<Vector> biases)
    : layer_dims_(std::move(layer_dims)),
      activation_(activation),
      output_activation_(output_activation),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  if (layer_dims_.size() < 2) throw ShapeError("an Mlp needs at least two layer dims");
  for (int n : layer_dims_) {
    if (n <= 0) throw ShapeError("layer dims must be positive");
  }
  const std::size_t layers = layer_dims_.size() - 1;
  if (weights_.size() != layers || biases_.size() != layers) {
    throw ShapeError("expected " + std::to_string(layers) + " weight matrices and bias vectors");
  }
  for (std::size_t k = 0; k < layers; ++k) {
    if (weights_[k].rows() != layer_dims_[k + 1] || weights_[k].cols() != layer_dims_[k]) {
      throw ShapeError("weight matrix " + std::to_string(k) + " has shape " +
                       std::to_string(weights_[k].rows()) + "x" +
                       std::to_string(weights_[k].cols()));
    }
    if (biases_[k].size() != layer_dims_[k + 1]) {
      throw ShapeError("bias vector " + std::to_string(k) + " has length " +
                       std::to_string(biases_[k].size()));
    }
    if (!weights_[k].allFinite() || !biases_[k].allFinite()) {
      throw DomainError("network parameters must be finite");
    }
  }
}

Mlp Mlp::zeros(std::vector<int> layer_dims, Activation activation,
               OutputActivation output_activation) {
  std::vector<Matrix> w;
  std::vector<Vector> b;
  for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
    w.push_back(Matrix::Zero(layer_dims[k + 1], layer_dims[k]));
    b.push_back(Vector::Zero(layer_dims[k + 1]));
  }
  return Mlp(std::move(layer_dims), activation, output_activation, std::move(w), std::move(b));
}

Mlp Mlp::random(std::vector<int> layer_dims, Activation activation,
                OutputActivation output_activation, std::uint64_t seed) {
  Mlp net = zeros(std::move(layer_dims), activation, output_activation);
  ParamVector p = net.flatten();
  // Row-major weights first, then biases: each coordinate knows its fan-in.
  const CounterStream stream(seed, 0);
  std::uint64_t i = 0;
  Eigen::Index pos = 0;
  const auto& dims = net.layer_dims();
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const double s = std::sqrt(1.0 / dims[k]);
    for (int j = 0; j < dims[k + 1] * dims[k]; ++j) p.flat[pos++] = s * (2.0 * stream.uniform(i++) - 1.0);
  }
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const double s = std::sqrt(1.0 / dims[k]);
    for (int j = 0; j < dims[k + 1]; ++j) p.flat[pos++] = s * (2.0 * stream.uniform(i++) - 1.0);
  }
  return net.unflatten(p);
}

bool Mlp::has_smooth_hidden() const {
  if (num_hidden_layers() == 0) return true;
  return activation_ == Activation::Tanh || activation_ == Activation::Softplus;
}

ParamVector Mlp::flatten() const {
  ParamWriter w(layer_dims_);
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    w.weight(k) = weights_[k];
    w.bias(k) = biases_[k];
  }
  return w.take();
}

Mlp Mlp::unflatten(const ParamVector& p) const {
  if (p.layout != layer_dims_ || p.size() != num_params()) {
    throw ShapeError("parameter vector layout does not match the network");
  }
  std::vector<Matrix> w;
  std::vector<Vector> b;
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const int rows = layer_dims_[k + 1], cols = layer_dims_[k];
    w.push_back(Eigen::Map<const RowMajorMatrix>(p.flat.data() + pos, rows, cols));
    pos += static_cast<Eigen::Index>(rows) * cols;
  }
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    b.push_back(p.flat.segment(pos, layer_dims_[k + 1]));
    pos += layer_dims_[k + 1];
  }
  return Mlp(layer_dims_, activation_, output_activation_, std::move(w), std::move(b));
}

// ---------------------------------------------------------------------------

Matrix mlp_forward_batch(const Mlp& net, const Matrix& x) {
  require_input(net, x);
  Matrix h = x;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    Matrix z = net.weights()[k] * h;
    z.colwise() += net.biases()[k];
    h = act_value(layer_activation(net, k), z.array()).matrix();
  }
  return h;
}

Backprop backprop_batch(const Mlp& net, const Matrix& x, const Matrix& v, bool want_params) {
  require_input(net, x);
  if (v.rows() != net.output_dim() || v.cols() != x.cols()) {
    throw ShapeError("cotangent has shape " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + ", expected " +
                     std::to_string(net.output_dim()) + "x" + std::to_string(x.cols()));
  }
  const ForwardTape tape = run_forward(net, x);
  ParamWriter grads(net.layer_dims(), want_params);
  Matrix g = v;
  for (std::size_t k = net.num_layers(); k-- > 0;) {
    const Activation a = layer_activation(net, k);
    const Matrix delta =
        (g.array() * act_d1(a, tape.pre[k].array(), tape.post[k + 1].array())).matrix();
    if (want_params) {
      grads.weight(k).noalias() = delta * tape.post[k].transpose();
      grads.bias(k) = delta.rowwise().sum();
    }
    g.noalias() = net.weights()[k].transpose() * delta;
  }
  return {std::move(g), grads.take()};
}

Matrix input_gradient_batch(const Mlp& net, const Matrix& x) {
  require_scalar(net, "input_gradient");
  return backprop_batch(net, x, Matrix::Ones(1, x.cols()), false).input_cotangent;
}

// s = Σ_j v_j · ∇H(x_j) is the directional derivative of H along v, so it is
// obtained by a tangent (forward-mode) sweep seeded with v; the reverse sweep
// over both the primal and tangent streams yields ∂s/∂x, ∂s/∂θ, and, as the
// adjoint of the tangent seed, ∇H itself.
GradVjpBatch grad_vjp_batch(const Mlp& net, const Matrix& x, const Matrix& v, bool want_params) {
  require_scalar(net, "grad_vjp");
  if (!net.has_smooth_hidden()) {
    throw ContractError("grad_vjp requires a Tanh or Softplus hidden activation, got " +
                        to_string(net.activation()));
  }
  require_input(net, x);
  if (v.rows() != x.rows() || v.cols() != x.cols()) {
    throw ShapeError("grad_vjp direction must match the input batch shape");
  }
  require_finite(v, "grad_vjp direction");

  const std::size_t layers = net.num_layers();
  const ForwardTape tape = run_forward(net, x);
  std::vector<Matrix> tangent_pre(layers);
  std::vector<Array> d1(layers), d2(layers);
  Matrix tangent = v;
  std::vector<Matrix> tangent_post;
  tangent_post.reserve(layers + 1);
  tangent_post.push_back(v);
  for (std::size_t k = 0; k < layers; ++k) {
    const Activation a = layer_activation(net, k);
    d1[k] = act_d1(a, tape.pre[k].array(), tape.post[k + 1].array());
    d2[k] = act_d2(a, tape.pre[k].array(), tape.post[k + 1].array());
    tangent_pre[k].noalias() = net.weights()[k] * tangent_post.back();
    tangent_post.push_back((d1[k] * tangent_pre[k].array()).matrix());
  }

  ParamWriter grads(net.layer_dims(), want_params);
  Matrix primal_bar = Matrix::Zero(1, x.cols());
  Matrix tangent_bar = Matrix::Ones(1, x.cols());
  for (std::size_t k = layers; k-- > 0;) {
    const Matrix tangent_pre_bar = (tangent_bar.array() * d1[k]).matrix();
    const Matrix pre_bar =
        (primal_bar.array() * d1[k] + tangent_bar.array() * d2[k] * tangent_pre[k].array())
            .matrix();
    if (want_params) {
      auto wk = grads.weight(k);
      wk.noalias() = tangent_pre_bar * tangent_post[k].transpose();
      wk.noalias() += pre_bar * tape.post[k].transpose();
      grads.bias(k) = pre_bar.rowwise().sum();
    }
    tangent_bar.noalias() = net.weights()[k].transpose() * tangent_pre_bar;
    primal_bar.noalias() = net.weights()[k].transpose() * pre_bar;
  }
  return {std::move(tangent_bar), std::move(primal_bar), grads.take()};
}

// ---------------------------------------------------------------------------

Vector mlp_forward(const Mlp& net, const Vector& x) { return mlp_forward_batch(net, x); }

Vector input_gradient(const Mlp& net, const Vector& x) { return input_gradient_batch(net, x); }

ParamVector param_vjp(const Mlp& net, const Vector& x, const Vector& v) {
  return backprop_batch(net, x, v).param_grad;
}

GradVjp grad_vjp(const Mlp& net, const Vector& x, const Vector& v) {
  auto r = grad_vjp_batch(net, x, v);
  return {r.x_cotangent.col(0), std::move(r.theta_cotangent)};
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                        double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("finite_diff_grad: eps must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DomainError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

// ---------------------------------------------------------------------------

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const Matrix& w = net.weights()[k];
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) rows.push_back(w(r, c));
    weights.push_back(rows);
    const Vector& b = net.biases()[k];
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  return {{"layer_dims", net.layer_dims()},
          {"activation", to_string(net.activation())},
          {"output_activation", to_string(net.output_activation())},
          {"weights", std::move(weights)},
          {"biases", std::move(biases)}};
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  try {
    for (const auto& [key, _] : doc.items()) {
      if (key != "layer_dims" && key != "activation" && key != "output_activation" &&
          key != "weights" && key != "biases") {
        throw SchemaError("unknown Mlp field '" + key + "'");
      }
    }
    const auto dims = doc.at("layer_dims").get<std::vector<int>>();
    const auto& wdoc = doc.at("weights");
    const auto& bdoc = doc.at("biases");
    if (dims.size() < 2 || wdoc.size() != dims.size() - 1 || bdoc.size() != dims.size() - 1) {
      throw SchemaError("Mlp document: layer count mismatch");
    }
    std::vector<Matrix> w;
    std::vector<Vector> b;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      const auto flat = wdoc[k].get<std::vector<double>>();
      if (dims[k] <= 0 || dims[k + 1] <= 0 ||
          flat.size() != static_cast<std::size_t>(dims[k + 1]) * dims[k]) {
        throw SchemaError("Mlp document: weight " + std::to_string(k) + " has wrong size");
      }
      w.push_back(Eigen::Map<const RowMajorMatrix>(flat.data(), dims[k + 1], dims[k]));
      const auto bias = bdoc[k].get<std::vector<double>>();
      b.push_back(Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size())));
    }
    return Mlp(dims, activation_from_string(doc.at("activation").get<std::string>()),
               output_activation_from_string(doc.at("output_activation").get<std::string>()),
               std::move(w), std::move(b));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("Mlp document: ") + e.what());
  }
}

}  // namespace hdt
