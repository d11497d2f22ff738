#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "hdt/adversarial.hpp"
#include "hdt/errors.hpp"
#include "oracles.hpp"

using namespace hdt;
using hdt::testing::rel_err;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// D(x) = sigmoid(a·tanh(tanh(tanh(x_0))) + b) through three width-1 hidden layers.
Discriminator chain_disc(double a, double b) {
  std::vector<Matrix> w{Matrix{{1.0, 0.0}}, Matrix{{1.0}}, Matrix{{1.0}}, Matrix{{a}}};
  std::vector<Vector> bias{Vector::Zero(1), Vector::Zero(1), Vector::Zero(1), Vector{{b}}};
  return Discriminator(Mlp({2, 1, 1, 1, 1}, Activation::Tanh, OutputActivation::Sigmoid, w, bias));
}

Discriminator constant_disc(int d, double p) {
  Mlp net = Mlp::zeros({d, 4, 4, 4, 1}, Activation::Tanh, OutputActivation::Sigmoid);
  ParamVector flat = net.flatten();
  flat.flat[flat.flat.size() - 1] = logit(p);
  return Discriminator(net.unflatten(flat));
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.n_steps = 20;
  cfg.batch_size = 64;
  cfg.samples_per_epoch = 256;
  cfg.epochs = 2;
  cfg.n_proj = 16;
  cfg.eval_samples = 128;
  cfg.lr_flow = 1e-3;
  cfg.lr_disc = 1e-3;
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hdt_test_adversarial";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("discriminator shape contract") {
  CHECK_THROWS_AS(Discriminator(Mlp::zeros({2, 4, 4, 1}, Activation::Tanh, OutputActivation::Sigmoid)),
                  ContractError);
  CHECK_THROWS_AS(Discriminator(Mlp::zeros({2, 4, 4, 4, 1}, Activation::Tanh, OutputActivation::Identity)),
                  ContractError);
  CHECK_THROWS_AS(Discriminator(Mlp::zeros({2, 4, 4, 4, 2}, Activation::Tanh, OutputActivation::Sigmoid)),
                  ContractError);
  const auto d = Discriminator::make(2, 32, 1);
  CHECK(d.net().num_hidden_layers() == 3);
  testing::TestRng rng(1);
  const Vector p = d.probabilities(rng.matrix(2, 200, -50.0, 50.0));
  CHECK((p.array() > 0.0).all());
  CHECK((p.array() < 1.0).all());
}

TEST_CASE("discriminator loss examples") {
  const Matrix real = Matrix::Ones(2, 3), fake = -Matrix::Ones(2, 5);
  CHECK(discriminator_loss(constant_disc(2, 0.5), real, fake) == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(discriminator_loss(constant_disc(2, 0.5), real, fake) == doctest::Approx(1.386294).epsilon(1e-6));

  const double s = std::tanh(std::tanh(std::tanh(1.0)));
  const double b = 0.5 * (logit(0.8) + logit(0.3));
  const double a = 0.5 * (logit(0.8) - logit(0.3)) / s;
  const auto d = chain_disc(a, b);
  const Matrix x_real = Matrix{{1.0}, {0.0}}, x_fake = Matrix{{-1.0}, {0.0}};
  CHECK(d.probabilities(x_real)[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(d.probabilities(x_fake)[0] == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(discriminator_loss(d, x_real, x_fake) == doctest::Approx(0.579818).epsilon(1e-6));

  // Saturated discriminator: both terms hit the clamp.
  const auto sat = chain_disc(1e4, 0.0);
  CHECK(discriminator_loss(sat, x_real, x_fake) == doctest::Approx(-2.0 * std::log1p(-kProbClamp)));
  CHECK(discriminator_loss(sat, x_real, x_fake) < 3e-7);
  CHECK(std::isfinite(discriminator_loss(sat, x_fake, x_real)));

  CHECK_THROWS_AS(discriminator_loss(d, Matrix(2, 0), x_fake), ContractError);
  CHECK_THROWS_AS(discriminator_loss(d, x_real, Matrix(2, 0)), ContractError);
}

TEST_CASE("generator loss examples") {
  CHECK(generator_loss(constant_disc(2, 0.5), Matrix::Ones(2, 4)).loss == doctest::Approx(std::log(2.0)));
  const auto sat = generator_loss(chain_disc(1e4, 0.0), Matrix{{1.0}, {0.0}});
  CHECK(sat.loss == doctest::Approx(-std::log1p(-kProbClamp)));
  CHECK(sat.cotangents.isZero(0.0));
  CHECK_THROWS_AS(generator_loss(constant_disc(2, 0.5), Matrix(2, 0)), ContractError);
}

TEST_CASE("generator cotangents match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = Discriminator::make(2, 16, seed);
    testing::TestRng rng(seed);
    const Matrix fake = rng.matrix(2, 6, -2.0, 2.0);
    const auto g = generator_loss(d, fake);
    Matrix fd(2, 6);
    const double eps = 1e-6;
    for (Eigen::Index j = 0; j < 6; ++j) {
      for (Eigen::Index i = 0; i < 2; ++i) {
        Matrix up = fake, down = fake;
        up(i, j) += eps;
        down(i, j) -= eps;
        fd(i, j) = (generator_loss(d, up).loss - generator_loss(d, down).loss) / (2.0 * eps);
      }
    }
    CHECK(rel_err(Eigen::Map<const Vector>(g.cotangents.data(), 12), Eigen::Map<const Vector>(fd.data(), 12)) <
          1e-5);
  }
}

TEST_CASE("discriminator loss gradient matches finite differences") {
  const auto d = Discriminator::make(2, 8, 3);
  testing::TestRng rng(3);
  const Matrix real = rng.matrix(2, 5, 2.0, 5.0), fake = rng.matrix(2, 4, -5.0, -2.0);
  const auto lg = discriminator_loss_grad(d, real, fake);
  CHECK(lg.loss == discriminator_loss(d, real, fake));
  const Vector fd = testing::param_fd(
      [&](const ParamVector& p) { return discriminator_loss(Discriminator(d.net().unflatten(p)), real, fake); },
      d.net().flatten(), 1e-6);
  CHECK(rel_err(lg.grad.flat, fd) < 1e-6);
}

TEST_CASE("adam examples") {
  const AdamSettings s{0.1, 0.9, 0.999, 1e-8};
  ParamVector p;
  p.flat = Vector::Zero(1);
  p.layout = {1};
  ParamVector g = p;

  SUBCASE("zero gradient leaves parameters unchanged") {
    const auto r = adam_update(p, g, OptimizerState::zeros(1), s);
    CHECK(r.params.flat[0] == 0.0);
    CHECK(r.state.step_count == 1);
  }
  SUBCASE("first step is -lr·sign(grad)") {
    g.flat[0] = 1.0;
    const auto r = adam_update(p, g, OptimizerState::zeros(1), s);
    CHECK(r.params.flat[0] == doctest::Approx(-0.1).epsilon(1e-6));
    SUBCASE("second identical step has magnitude lr") {
      const auto r2 = adam_update(r.params, g, r.state, s);
      CHECK(std::abs(r2.params.flat[0] - r.params.flat[0]) == doctest::Approx(0.1).epsilon(0.01));
      CHECK(r2.state.step_count == 2);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(adam_update(p, g, OptimizerState::zeros(2), s), ShapeError);
  }
}

TEST_CASE("train config json") {
  TrainConfig cfg;
  CHECK(cfg.hidden_width == 128);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.lr_flow == 1e-4);
  CHECK(cfg.lr_disc == 2e-4);
  CHECK(cfg.steps_per_epoch() == 39);
  cfg.seed = 7;
  cfg.lr_flow = 3e-4;
  const auto back = train_config_from_json(nlohmann::json::parse(train_config_to_json(cfg).dump()));
  CHECK(back.seed == 7);
  CHECK(back.lr_flow == 3e-4);
  CHECK(train_config_from_json(nlohmann::json::object()).epochs == 20);

  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"learning_rate", 1.0}}), SchemaError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"betas", {0.9, 1.0}}}), SchemaError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"lr_flow", -1e-4}}), SchemaError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"d", 3}}), SchemaError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_size", "big"}}), SchemaError);
}

TEST_CASE("train_step with zero learning rates changes nothing") {
  TrainConfig cfg = small_config();
  cfg.lr_flow = 0.0;
  cfg.lr_disc = 0.0;
  const auto s0 = TrainState::initial(cfg);
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  const auto r = train_step(s0, Sampler(da, 1).sample(32), Sampler(db, 2).sample(32), cfg);
  CHECK(r.state.flow.net().flatten().flat == s0.flow.net().flatten().flat);
  CHECK(r.state.disc.net().flatten().flat == s0.disc.net().flatten().flat);
  CHECK(r.state.step == 1);
  CHECK(std::isfinite(r.metrics.loss_disc));
  CHECK(r.metrics.grad_norm_flow > 0.0);
}

TEST_CASE("train_step updates the flow with exactly the adversarial gradient") {
  const TrainConfig cfg = small_config();
  const auto s0 = TrainState::initial(cfg);
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  const Matrix a = Sampler(da, 3).sample(32), b = Sampler(db, 4).sample(32);
  const auto r = train_step(s0, a, b, cfg);

  // Discriminator: one Adam step on the BCE gradient with detached fakes.
  const Matrix fake = integrate_batch(s0.flow, a, cfg.integration());
  const auto dl = discriminator_loss_grad(s0.disc, b, fake);
  const auto disc1 = adam_update(s0.disc.net().flatten(), dl.grad, s0.opt_disc,
                                 {cfg.lr_disc, cfg.beta1, cfg.beta2, cfg.adam_eps});
  CHECK(r.state.disc.net().flatten().flat == disc1.params.flat);

  // Flow: adjoint of the non-saturating loss under the updated discriminator, nothing else.
  const auto gl = generator_loss(r.state.disc, fake);
  const auto grad = adjoint_gradients(s0.flow, a, gl.cotangents, cfg.integration());
  const auto flow1 = adam_update(s0.flow.net().flatten(), grad.theta, s0.opt_flow,
                                 {cfg.lr_flow, cfg.beta1, cfg.beta2, cfg.adam_eps});
  CHECK(r.state.flow.net().flatten().flat == flow1.params.flat);
  CHECK(r.metrics.loss_gen == gl.loss);
  CHECK(r.metrics.loss_disc == dl.loss);
}

TEST_CASE("generator gradient matches finite differences end to end") {
  const auto flow = HamiltonianField::neural(
      Mlp::random({2, 8, 8, 8, 1}, Activation::Tanh, OutputActivation::Identity, 5));
  const auto disc = Discriminator::make(2, 8, 6);
  testing::TestRng rng(5);
  const Matrix a = rng.matrix(2, 4, -2.0, 2.0);
  const IntegrationSpec spec{0.0, 1.0, 50};
  auto loss = [&](const ParamVector& p) {
    return generator_loss(disc, integrate_batch(flow.with_params(p), a, spec)).loss;
  };
  const auto gl = generator_loss(disc, integrate_batch(flow, a, spec));
  const auto g = adjoint_gradients(flow, a, gl.cotangents, spec);
  CHECK(rel_err(g.theta.flat, testing::param_fd(loss, flow.net().flatten(), 1e-5)) < 1e-4);
}

TEST_CASE("one step usually lowers the generator loss") {
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  int improved = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    TrainConfig cfg;
    cfg.seed = 42 + trial;
    const auto s0 = TrainState::initial(cfg);
    const Matrix a = Sampler(da, cfg.sampler_a_seed()).sample(cfg.batch_size);
    const Matrix b = Sampler(db, cfg.sampler_b_seed()).sample(cfg.batch_size);
    const auto r = train_step(s0, a, b, cfg);
    const double before = generator_loss(r.state.disc, integrate_batch(s0.flow, a, cfg.integration())).loss;
    const double after =
        generator_loss(r.state.disc, integrate_batch(r.state.flow, a, cfg.integration())).loss;
    if (after < before) ++improved;
  }
  CHECK(improved >= 12);
}

TEST_CASE("train_step is deterministic") {
  const TrainConfig cfg = small_config();
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  const Matrix a = Sampler(da, 1).sample(32), b = Sampler(db, 2).sample(32);
  const auto r1 = train_step(TrainState::initial(cfg), a, b, cfg);
  const auto r2 = train_step(TrainState::initial(cfg), a, b, cfg);
  CHECK(r1.state.flow.net().flatten().flat == r2.state.flow.net().flatten().flat);
  CHECK(r1.state.disc.net().flatten().flat == r2.state.disc.net().flatten().flat);
  CHECK(r1.metrics.sw_dist == r2.metrics.sw_dist);
}

TEST_CASE("extra discriminator batches") {
  TrainConfig cfg = small_config();
  cfg.disc_steps_per_flow_step = 2;
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  const Matrix a = Sampler(da, 1).sample(32), b = Sampler(db, 2).sample(32);
  const DiscBatches extra{{Sampler(da, 5).sample(32), Sampler(db, 6).sample(32)}};
  const auto r = train_step(TrainState::initial(cfg), a, b, cfg, extra);
  CHECK(r.state.opt_disc.step_count == 2);
  CHECK(r.state.opt_flow.step_count == 1);
  CHECK_THROWS_AS(train_step(TrainState::initial(cfg), a, b, cfg), ContractError);
}

TEST_CASE("train") {
  const auto [da, db] = builtin_benchmark(Benchmark::TwoGaussians);
  SUBCASE("zero epochs returns the inputs") {
    TrainConfig cfg = small_config();
    cfg.epochs = 0;
    const auto s0 = TrainState::initial(cfg);
    const auto r = train(s0, da, db, cfg);
    CHECK(r.history.steps.empty());
    CHECK(r.state.flow.net().flatten().flat == s0.flow.net().flatten().flat);
    CHECK(r.state.step == 0);
  }
  SUBCASE("history, determinism and checkpoints") {
    const TrainConfig cfg = small_config();
    const auto dir = scratch("ckpt");
    int epochs_seen = 0;
    TrainOptions opts;
    opts.checkpoint_dir = dir.string();
    opts.on_epoch = [&](const EpochMetrics&) { ++epochs_seen; };
    const auto r1 = train(TrainState::initial(cfg), da, db, cfg, opts);
    const auto r2 = train(TrainState::initial(cfg), da, db, cfg);
    CHECK(r1.history.steps.size() == 8);
    CHECK(r1.history.epochs.size() == 3);
    CHECK(epochs_seen == 3);
    CHECK(r1.history.steps_csv() == r2.history.steps_csv());
    CHECK(r1.history.epochs_csv() == r2.history.epochs_csv());
    CHECK(r1.history.steps_csv().rfind("step,epoch,loss_disc,loss_gen,ham_drift,grad_norm_flow,grad_norm_disc,sw_dist\n",
                                       0) == 0);
    CHECK(r1.history.epochs.back().sw_eval ==
          evaluate_transport(r1.state.flow, evaluation_batches(cfg, da, db).first,
                             evaluation_batches(cfg, da, db).second, cfg));

    for (const char* f : {"flow.json", "disc.json", "optim.json", "config.json"})
      CHECK(std::filesystem::exists(dir / f));
    CHECK_FALSE(std::filesystem::exists(dir.string() + ".partial"));
    const auto ck = load_checkpoint(dir.string());
    CHECK(ck.state.flow.net().flatten().flat == r1.state.flow.net().flatten().flat);
    CHECK(ck.state.disc.net().flatten().flat == r1.state.disc.net().flatten().flat);
    CHECK(ck.state.opt_flow.second_moment == r1.state.opt_flow.second_moment);
    CHECK(ck.state.step == r1.state.step);
    CHECK(ck.config.seed == cfg.seed);
    CHECK(ck.config.hidden_width == cfg.hidden_width);
  }
  SUBCASE("malformed checkpoint") {
    const auto dir = scratch("broken");
    std::filesystem::create_directories(dir);
    CHECK_THROWS_AS(load_checkpoint(dir.string()), Error);
  }
}
