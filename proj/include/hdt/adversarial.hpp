#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hdt/domains.hpp"
#include "hdt/ode.hpp"

namespace hdt {

/// Probability clamp applied before every log in the GAN losses.
inline constexpr double kProbClamp = 1e-7;

/// D: ℝ^d → (0, 1), an Mlp with exactly three hidden layers and a Sigmoid
/// output.
class Discriminator {
 public:
  explicit Discriminator(Mlp net);
  static Discriminator make(int d, int hidden_width, std::uint64_t seed);

  const Mlp& net() const { return net_; }
  /// D(x) for every column.
  Vector probabilities(const Matrix& x) const;

 private:
  Mlp net_;
};

/// Tanh MLP d → width ×3 → 1 used as H_θ.
HamiltonianField make_flow(int d, int hidden_width, std::uint64_t seed);

/// −mean log D(real) − mean log(1 − D(fake)).
double discriminator_loss(const Discriminator& disc, const Matrix& real, const Matrix& fake);

struct LossGradient {
  double loss = 0.0;
  ParamVector grad;
};

/// Discriminator loss and its gradient with respect to D's parameters.
LossGradient discriminator_loss_grad(const Discriminator& disc, const Matrix& real,
                                     const Matrix& fake);

struct GeneratorLoss {
  double loss = 0.0;
  Matrix cotangents;  // ∂loss/∂fake, one column per sample
};

/// Non-saturating generator loss −mean log D(fake) and its input cotangents.
GeneratorLoss generator_loss(const Discriminator& disc, const Matrix& fake);

struct OptimizerState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;

  static OptimizerState zeros(std::size_t n);
};

struct AdamSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamResult {
  ParamVector params;
  OptimizerState state;
};

/// Bias-corrected adaptive-moment update.
AdamResult adam_update(const ParamVector& params, const ParamVector& grad,
                       const OptimizerState& opt, const AdamSettings& settings);

struct TrainConfig {
  int d = 2;
  int hidden_width = 128;
  double T = 1.0;
  int n_steps = 100;
  int batch_size = 256;
  double lr_flow = 1e-4;
  double lr_disc = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int disc_steps_per_flow_step = 1;
  int epochs = 20;
  int samples_per_epoch = 10000;
  std::uint64_t seed = 42;
  /// Projections for the per-step and per-epoch sliced-Wasserstein metrics.
  int n_proj = 128;
  /// Size of the fixed held-out batches used for the per-epoch evaluation.
  int eval_samples = 1024;

  /// Throws SchemaError listing the first invalid field.
  void validate() const;
  IntegrationSpec integration() const { return {0.0, T, n_steps, Method::RK4}; }
  int steps_per_epoch() const { return std::max(1, samples_per_epoch / batch_size); }

  std::uint64_t flow_init_seed() const;
  std::uint64_t disc_init_seed() const;
  std::uint64_t sampler_a_seed() const;
  std::uint64_t sampler_b_seed() const;
  std::uint64_t eval_a_seed() const;
  std::uint64_t eval_b_seed() const;
  std::uint64_t projection_seed(std::int64_t step) const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys take defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct TrainState {
  HamiltonianField flow;
  Discriminator disc;
  OptimizerState opt_flow;
  OptimizerState opt_disc;
  std::int64_t step = 0;

  static TrainState initial(const TrainConfig& cfg);
};

struct StepMetrics {
  std::int64_t step = 0;
  int epoch = 0;
  double loss_disc = 0.0;
  double loss_gen = 0.0;
  double ham_drift = 0.0;  // mean over the batch of |H(F(x)) − H(x)|
  double grad_norm_flow = 0.0;
  double grad_norm_disc = 0.0;
  double sw_dist = 0.0;  // fake batch vs real batch
};

struct StepResult {
  TrainState state;
  StepMetrics metrics;
};

/// Extra (batch_a, batch_b) pairs for discriminator updates beyond the first.
using DiscBatches = std::vector<std::pair<Matrix, Matrix>>;

/// One adversarial update: discriminator on detached fakes, then the flow
/// through the adjoint of the generator loss. No cyclic term.
StepResult train_step(const TrainState& state, const Matrix& batch_a, const Matrix& batch_b,
                      const TrainConfig& cfg, const DiscBatches& extra_disc_batches = {});

struct EpochMetrics {
  int epoch = 0;  // 0 = before training
  double sw_eval = 0.0;
};

struct TrainingHistory {
  std::vector<StepMetrics> steps;
  std::vector<EpochMetrics> epochs;

  std::string steps_csv() const;
  std::string epochs_csv() const;
};

struct TrainOptions {
  /// Written after every epoch when set; the previous checkpoint is only
  /// replaced once the new one is complete.
  std::optional<std::string> checkpoint_dir;
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  TrainingHistory history;
};

/// Fixed held-out evaluation batches for (cfg, A, B).
std::pair<Matrix, Matrix> evaluation_batches(const TrainConfig& cfg, const SyntheticDomain& a,
                                             const SyntheticDomain& b);

/// SW(F#A_eval, B_eval) with the evaluation projection seed.
double evaluate_transport(const HamiltonianField& flow, const Matrix& eval_a, const Matrix& eval_b,
                          const TrainConfig& cfg);

/// epochs × steps_per_epoch train steps. Samplers are seeded from cfg.
/// DivergenceError propagates with epoch/step context.
TrainResult train(TrainState init, const SyntheticDomain& domain_a,
                  const SyntheticDomain& domain_b, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

void save_checkpoint(const std::string& dir, const TrainState& state, const TrainConfig& cfg);

struct Checkpoint {
  TrainState state;
  TrainConfig config;
};
/// Throws ParseError / SchemaError on malformed documents.
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace hdt
