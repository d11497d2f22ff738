#include "hdt/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hdt/csv.hpp"
#include "hdt/errors.hpp"
#include "hdt/metrics.hpp"

namespace hdt {
namespace fs = std::filesystem;

namespace {

std::vector<int> three_hidden(int d, int width) { return {d, width, width, width, 1}; }

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

bool inside_clamp(double p) { return p > kProbClamp && p < 1.0 - kProbClamp; }

void require_batch(const Matrix& x, int d, const char* what) {
  if (x.cols() == 0) throw ContractError(std::string(what) + ": empty batch");
  require_state_batch(x, d);
}

}  // namespace

Discriminator::Discriminator(Mlp net) : net_(std::move(net)) {
  if (net_.num_hidden_layers() != 3) {
    throw ContractError("discriminator needs exactly 3 hidden layers, got " +
                        std::to_string(net_.num_hidden_layers()));
  }
  if (net_.output_dim() != 1 || net_.output_activation() != OutputActivation::Sigmoid) {
    throw ContractError("discriminator needs a single sigmoid output");
  }
}

Discriminator Discriminator::make(int d, int hidden_width, std::uint64_t seed) {
  return Discriminator(
      Mlp::random(three_hidden(d, hidden_width), Activation::Tanh, OutputActivation::Sigmoid, seed));
}

Vector Discriminator::probabilities(const Matrix& x) const {
  return mlp_forward_batch(net_, x).row(0).transpose();
}

HamiltonianField make_flow(int d, int hidden_width, std::uint64_t seed) {
  return HamiltonianField::neural(
      Mlp::random(three_hidden(d, hidden_width), Activation::Tanh, OutputActivation::Identity, seed));
}

// ---------------------------------------------------------------------------

LossGradient discriminator_loss_grad(const Discriminator& disc, const Matrix& real,
                                     const Matrix& fake) {
  const int d = disc.net().input_dim();
  require_batch(real, d, "discriminator_loss");
  require_batch(fake, d, "discriminator_loss");
  const Vector pr = disc.probabilities(real);
  const Vector pf = disc.probabilities(fake);
  const double nr = static_cast<double>(pr.size());
  const double nf = static_cast<double>(pf.size());

  double loss_real = 0.0, loss_fake = 0.0;
  Matrix vr(1, pr.size()), vf(1, pf.size());
  for (Eigen::Index j = 0; j < pr.size(); ++j) {
    loss_real -= std::log(clamp_prob(pr[j]));
    vr(0, j) = inside_clamp(pr[j]) ? -1.0 / (nr * pr[j]) : 0.0;
  }
  for (Eigen::Index j = 0; j < pf.size(); ++j) {
    loss_fake -= std::log(1.0 - clamp_prob(pf[j]));
    vf(0, j) = inside_clamp(pf[j]) ? 1.0 / (nf * (1.0 - pf[j])) : 0.0;
  }
  ParamVector grad = backprop_batch(disc.net(), real, vr).param_grad;
  grad.flat += backprop_batch(disc.net(), fake, vf).param_grad.flat;
  return {loss_real / nr + loss_fake / nf, std::move(grad)};
}

double discriminator_loss(const Discriminator& disc, const Matrix& real, const Matrix& fake) {
  const int d = disc.net().input_dim();
  require_batch(real, d, "discriminator_loss");
  require_batch(fake, d, "discriminator_loss");
  const Vector pr = disc.probabilities(real);
  const Vector pf = disc.probabilities(fake);
  double loss_real = 0.0, loss_fake = 0.0;
  for (double p : pr) loss_real -= std::log(clamp_prob(p));
  for (double p : pf) loss_fake -= std::log(1.0 - clamp_prob(p));
  return loss_real / static_cast<double>(pr.size()) + loss_fake / static_cast<double>(pf.size());
}

GeneratorLoss generator_loss(const Discriminator& disc, const Matrix& fake) {
  require_batch(fake, disc.net().input_dim(), "generator_loss");
  const Vector pf = disc.probabilities(fake);
  const double n = static_cast<double>(pf.size());
  double loss = 0.0;
  Matrix v(1, pf.size());
  for (Eigen::Index j = 0; j < pf.size(); ++j) {
    loss -= std::log(clamp_prob(pf[j]));
    v(0, j) = inside_clamp(pf[j]) ? -1.0 / (n * pf[j]) : 0.0;
  }
  return {loss / n, backprop_batch(disc.net(), fake, v, false).input_cotangent};
}

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::zeros(std::size_t n) {
  const auto size = static_cast<Eigen::Index>(n);
  return {Vector::Zero(size), Vector::Zero(size), 0};
}

AdamResult adam_update(const ParamVector& params, const ParamVector& grad,
                       const OptimizerState& opt, const AdamSettings& s) {
  if (grad.size() != params.size() || opt.first_moment.size() != params.flat.size() ||
      opt.second_moment.size() != params.flat.size()) {
    throw ShapeError("adam_update: parameter, gradient and moment sizes differ");
  }
  OptimizerState next;
  next.step_count = opt.step_count + 1;
  next.first_moment = s.beta1 * opt.first_moment + (1.0 - s.beta1) * grad.flat;
  next.second_moment =
      s.beta2 * opt.second_moment + (1.0 - s.beta2) * grad.flat.cwiseAbs2();
  const double t = static_cast<double>(next.step_count);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  ParamVector out = params;
  out.flat.array() -= s.lr * (next.first_moment.array() / c1) /
                      ((next.second_moment.array() / c2).sqrt() + s.eps);
  return {std::move(out), std::move(next)};
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw SchemaError("train config: " + what); };
  if (d < 2 || d % 2 != 0) fail("d must be even and >= 2");
  if (hidden_width < 1) fail("hidden_width must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) fail("T must be positive");
  if (n_steps < 1) fail("n_steps must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(lr_flow >= 0.0) || !(lr_disc >= 0.0)) fail("learning rates must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (disc_steps_per_flow_step < 1) fail("disc_steps_per_flow_step must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (samples_per_epoch < 1) fail("samples_per_epoch must be positive");
  if (n_proj < 1) fail("n_proj must be positive");
  if (eval_samples < 1) fail("eval_samples must be positive");
}

std::uint64_t TrainConfig::sampler_a_seed() const { return mix_seed(seed, 1); }
std::uint64_t TrainConfig::sampler_b_seed() const { return mix_seed(seed, 2); }
std::uint64_t TrainConfig::eval_a_seed() const { return mix_seed(seed, 3); }
std::uint64_t TrainConfig::eval_b_seed() const { return mix_seed(seed, 4); }
std::uint64_t TrainConfig::flow_init_seed() const { return mix_seed(seed, 10); }
std::uint64_t TrainConfig::disc_init_seed() const { return mix_seed(seed, 11); }
std::uint64_t TrainConfig::projection_seed(std::int64_t step) const {
  return mix_seed(mix_seed(seed, 5), static_cast<std::uint64_t>(step));
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"d", c.d},
          {"hidden_width", c.hidden_width},
          {"T", c.T},
          {"n_steps", c.n_steps},
          {"batch_size", c.batch_size},
          {"lr_flow", c.lr_flow},
          {"lr_disc", c.lr_disc},
          {"betas", {c.beta1, c.beta2}},
          {"adam_eps", c.adam_eps},
          {"disc_steps_per_flow_step", c.disc_steps_per_flow_step},
          {"epochs", c.epochs},
          {"samples_per_epoch", c.samples_per_epoch},
          {"seed", c.seed},
          {"n_proj", c.n_proj},
          {"eval_samples", c.eval_samples}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "d") c.d = value.get<int>();
      else if (key == "hidden_width") c.hidden_width = value.get<int>();
      else if (key == "T") c.T = value.get<double>();
      else if (key == "n_steps") c.n_steps = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "lr_flow") c.lr_flow = value.get<double>();
      else if (key == "lr_disc") c.lr_disc = value.get<double>();
      else if (key == "betas") {
        const auto b = value.get<std::vector<double>>();
        if (b.size() != 2) throw SchemaError("train config: betas must have two entries");
        c.beta1 = b[0];
        c.beta2 = b[1];
      } else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "disc_steps_per_flow_step") c.disc_steps_per_flow_step = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "samples_per_epoch") c.samples_per_epoch = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "n_proj") c.n_proj = value.get<int>();
      else if (key == "eval_samples") c.eval_samples = value.get<int>();
      else throw SchemaError("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainState TrainState::initial(const TrainConfig& cfg) {
  cfg.validate();
  HamiltonianField flow = make_flow(cfg.d, cfg.hidden_width, cfg.flow_init_seed());
  Discriminator disc = Discriminator::make(cfg.d, cfg.hidden_width, cfg.disc_init_seed());
  const auto nf = flow.num_params();
  const auto nd = disc.net().num_params();
  return {std::move(flow), std::move(disc), OptimizerState::zeros(nf), OptimizerState::zeros(nd), 0};
}

// ---------------------------------------------------------------------------

StepResult train_step(const TrainState& state, const Matrix& batch_a, const Matrix& batch_b,
                      const TrainConfig& cfg, const DiscBatches& extra_disc_batches) {
  if (!state.flow.is_neural()) throw ContractError("train_step needs a neural flow");
  require_batch(batch_a, cfg.d, "train_step");
  require_batch(batch_b, cfg.d, "train_step");
  if (state.flow.dim() != cfg.d) throw ShapeError("flow dimension does not match the config");
  if (extra_disc_batches.size() + 1 != static_cast<std::size_t>(cfg.disc_steps_per_flow_step)) {
    throw ContractError("train_step needs disc_steps_per_flow_step - 1 extra discriminator batches");
  }

  const IntegrationSpec spec = cfg.integration();
  const AdamSettings disc_adam{cfg.lr_disc, cfg.beta1, cfg.beta2, cfg.adam_eps};
  const AdamSettings flow_adam{cfg.lr_flow, cfg.beta1, cfg.beta2, cfg.adam_eps};

  StepMetrics m;
  m.step = state.step;

  // The flow is unchanged until the end of the step, so the transported
  // batch is used both as detached discriminator input and as the generator
  // sample whose adjoint is taken.
  const Matrix fake = integrate_batch(state.flow, batch_a, spec);

  Discriminator disc = state.disc;
  OptimizerState opt_disc = state.opt_disc;
  auto disc_update = [&](const Matrix& real, const Matrix& fakes) {
    const auto lg = discriminator_loss_grad(disc, real, fakes);
    auto r = adam_update(disc.net().flatten(), lg.grad, opt_disc, disc_adam);
    disc = Discriminator(disc.net().unflatten(r.params));
    opt_disc = std::move(r.state);
    return lg;
  };
  const auto first = disc_update(batch_b, fake);
  m.loss_disc = first.loss;
  m.grad_norm_disc = first.grad.norm();
  for (const auto& [extra_a, extra_b] : extra_disc_batches) {
    disc_update(extra_b, integrate_batch(state.flow, extra_a, spec));
  }

  const GeneratorLoss gen = generator_loss(disc, fake);
  m.loss_gen = gen.loss;
  const GradientResult grads = adjoint_gradients_from_final(state.flow, fake, gen.cotangents, spec);
  m.grad_norm_flow = grads.theta.norm();
  auto flow_next = adam_update(state.flow.net().flatten(), grads.theta, state.opt_flow, flow_adam);

  m.ham_drift = (hamiltonian_value_batch(state.flow, fake) -
                 hamiltonian_value_batch(state.flow, batch_a))
                    .cwiseAbs()
                    .mean();
  m.sw_dist = sliced_wasserstein(fake, batch_b, cfg.n_proj, cfg.projection_seed(state.step));

  return {TrainState{state.flow.with_params(flow_next.params), std::move(disc),
                     std::move(flow_next.state), std::move(opt_disc), state.step + 1},
          m};
}

// ---------------------------------------------------------------------------

std::string TrainingHistory::steps_csv() const {
  std::ostringstream out;
  out << "step,epoch,loss_disc,loss_gen,ham_drift,grad_norm_flow,grad_norm_disc,sw_dist\n";
  for (const auto& s : steps) {
    out << s.step << ',' << s.epoch << ',' << csv::format_double(s.loss_disc) << ','
        << csv::format_double(s.loss_gen) << ',' << csv::format_double(s.ham_drift) << ','
        << csv::format_double(s.grad_norm_flow) << ',' << csv::format_double(s.grad_norm_disc)
        << ',' << csv::format_double(s.sw_dist) << '\n';
  }
  return out.str();
}

std::string TrainingHistory::epochs_csv() const {
  std::ostringstream out;
  out << "epoch,sw_eval\n";
  for (const auto& e : epochs) out << e.epoch << ',' << csv::format_double(e.sw_eval) << '\n';
  return out.str();
}

std::pair<Matrix, Matrix> evaluation_batches(const TrainConfig& cfg, const SyntheticDomain& a,
                                             const SyntheticDomain& b) {
  Sampler sa(a, cfg.eval_a_seed());
  Sampler sb(b, cfg.eval_b_seed());
  return {sa.sample(cfg.eval_samples), sb.sample(cfg.eval_samples)};
}

double evaluate_transport(const HamiltonianField& flow, const Matrix& eval_a, const Matrix& eval_b,
                          const TrainConfig& cfg) {
  return sliced_wasserstein(integrate_batch(flow, eval_a, cfg.integration()), eval_b, cfg.n_proj,
                            cfg.projection_seed(-1));
}

TrainResult train(TrainState init, const SyntheticDomain& domain_a,
                  const SyntheticDomain& domain_b, const TrainConfig& cfg,
                  const TrainOptions& opts) {
  cfg.validate();
  if (domain_a.dim() != cfg.d || domain_b.dim() != cfg.d) {
    throw ShapeError("domain dimension does not match the config");
  }
  TrainResult result{std::move(init), {}};
  if (cfg.epochs == 0) return result;

  Sampler sampler_a(domain_a, cfg.sampler_a_seed());
  Sampler sampler_b(domain_b, cfg.sampler_b_seed());
  const auto [eval_a, eval_b] = evaluation_batches(cfg, domain_a, domain_b);

  auto record_epoch = [&](int epoch) {
    EpochMetrics e{epoch, evaluate_transport(result.state.flow, eval_a, eval_b, cfg)};
    result.history.epochs.push_back(e);
    if (opts.on_epoch) opts.on_epoch(e);
  };
  record_epoch(0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int s = 0; s < cfg.steps_per_epoch(); ++s) {
      const Matrix batch_a = sampler_a.sample(cfg.batch_size);
      const Matrix batch_b = sampler_b.sample(cfg.batch_size);
      DiscBatches extra;
      for (int k = 1; k < cfg.disc_steps_per_flow_step; ++k) {
        Matrix ea = sampler_a.sample(cfg.batch_size);
        extra.emplace_back(std::move(ea), sampler_b.sample(cfg.batch_size));
      }
      try {
        auto step = train_step(result.state, batch_a, batch_b, cfg, extra);
        step.metrics.epoch = epoch;
        result.state = std::move(step.state);
        result.history.steps.push_back(step.metrics);
        if (opts.on_step) opts.on_step(step.metrics);
      } catch (const DivergenceError& e) {
        throw DivergenceError("epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(result.state.step) + ": " + e.what(),
                              e.step());
      }
    }
    record_epoch(epoch);
    if (opts.checkpoint_dir) save_checkpoint(*opts.checkpoint_dir, result.state, cfg);
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json optimizer_to_json(const OptimizerState& s) {
  return {{"step_count", s.step_count},
          {"first_moment",
           std::vector<double>(s.first_moment.data(), s.first_moment.data() + s.first_moment.size())},
          {"second_moment", std::vector<double>(s.second_moment.data(),
                                                s.second_moment.data() + s.second_moment.size())}};
}

OptimizerState optimizer_from_json(const nlohmann::json& doc, std::size_t n) {
  const auto m = doc.at("first_moment").get<std::vector<double>>();
  const auto v = doc.at("second_moment").get<std::vector<double>>();
  if (m.size() != n || v.size() != n) throw SchemaError("optimizer moments do not match the network");
  return {Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(n)),
          Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(n)),
          doc.at("step_count").get<std::int64_t>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& dir, const TrainState& state, const TrainConfig& cfg) {
  const fs::path target(dir);
  const fs::path partial(dir + ".partial");
  fs::remove_all(partial);
  fs::create_directories(partial);
  write_text(partial / "flow.json", mlp_to_json(state.flow.net()).dump() + "\n");
  write_text(partial / "disc.json", mlp_to_json(state.disc.net()).dump() + "\n");
  write_text(partial / "optim.json",
             nlohmann::json{{"step", state.step},
                            {"flow", optimizer_to_json(state.opt_flow)},
                            {"disc", optimizer_to_json(state.opt_disc)}}
                     .dump() +
                 "\n");
  write_text(partial / "config.json", train_config_to_json(cfg).dump(2) + "\n");
  fs::remove_all(target);
  fs::rename(partial, target);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error("checkpoint directory '" + dir + "' does not exist");
  TrainConfig cfg = train_config_from_json(read_json(root / "config.json"));
  const nlohmann::json flow_doc = read_json(root / "flow.json");
  HamiltonianField flow = flow_doc.contains("kind") ? field_from_json(flow_doc)
                                                    : HamiltonianField::neural(mlp_from_json(flow_doc));
  Discriminator disc(mlp_from_json(read_json(root / "disc.json")));
  if (flow.dim() != cfg.d || disc.net().input_dim() != cfg.d) {
    throw SchemaError("checkpoint networks do not match config dimension " + std::to_string(cfg.d));
  }
  OptimizerState of = OptimizerState::zeros(flow.num_params());
  OptimizerState od = OptimizerState::zeros(disc.net().num_params());
  std::int64_t step = 0;
  if (fs::exists(root / "optim.json")) {
    const auto doc = read_json(root / "optim.json");
    try {
      step = doc.at("step").get<std::int64_t>();
      of = optimizer_from_json(doc.at("flow"), flow.num_params());
      od = optimizer_from_json(doc.at("disc"), disc.net().num_params());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("optim.json: ") + e.what());
    }
  }
  return {TrainState{std::move(flow), std::move(disc), std::move(of), std::move(od), step},
          std::move(cfg)};
}

}  // namespace hdt
