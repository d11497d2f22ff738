#include <fcntl.h>
#include <unistd.h>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "hdt/adversarial.hpp"
#include "hdt/csv.hpp"
#include "hdt/errors.hpp"
#include "hdt/metrics.hpp"
#include "run_config.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace hdt;
using hdt::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitCheckFailed = 3;

struct GlobalFlags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

// Exclusive `.lock` sentinel in an output directory for the life of a command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw Error("output directory '" + dir.string() + "' is locked by another run (" +
                            path_.string() + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

RunConfig resolve_config(const GlobalFlags& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : cli::load_run_config(g.config);
  if (g.seed_given) cfg.train.seed = g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  csv::write_file_atomic(path.string(), doc.dump(2) + "\n");
}

// max over samples and grid times of |H(x_t) - H(x_0)|.
double batch_drift(const HamiltonianField& field, const Matrix& x, const IntegrationSpec& spec) {
  const Vector h0 = hamiltonian_value_batch(field, x);
  double worst = 0.0;
  integrate_batch_observed(field, x, spec, [&](int, const Matrix& xt) {
    worst = std::max(worst, (hamiltonian_value_batch(field, xt) - h0).cwiseAbs().maxCoeff());
  });
  return worst;
}

double mean_scale(const Matrix& x) { return (1.0 + x.colwise().norm().array()).mean(); }

void require_dim(const Matrix& x, int d, const std::string& what) {
  if (x.rows() != d) {
    throw ShapeError(what + ": expected dimension " + std::to_string(d) + ", got " +
                     std::to_string(x.rows()));
  }
}

// ---------------------------------------------------------------------------

int cmd_train(const GlobalFlags& g) {
  const RunConfig cfg = resolve_config(g);
  const fs::path out = cfg.out_dir;
  OutputLock lock(out);
  const auto [da, db] = cfg.domains();
  const TrainConfig& tc = cfg.train;
  write_json(out / "config.json", cli::run_config_to_json(cfg));

  TrainOptions opts;
  opts.checkpoint_dir = (out / "checkpoint").string();
  opts.on_epoch = [](const EpochMetrics& e) {
    std::cerr << "epoch " << e.epoch << " sw_eval " << csv::format_double(e.sw_eval) << "\n";
  };
  const auto result = train(TrainState::initial(tc), da, db, tc, opts);
  if (tc.epochs == 0) save_checkpoint(*opts.checkpoint_dir, result.state, tc);

  csv::write_file_atomic((out / "history.csv").string(), result.history.steps_csv());
  csv::write_file_atomic((out / "epochs.csv").string(), result.history.epochs_csv());

  const auto [eval_a, eval_b] = evaluation_batches(tc, da, db);
  const HamiltonianField& flow = result.state.flow;
  const double sw_final = evaluate_transport(flow, eval_a, eval_b, tc);
  const double sw_initial =
      result.history.epochs.empty() ? sw_final : result.history.epochs.front().sw_eval;
  const double round_trip = round_trip_error(flow, eval_a, tc.integration());
  nlohmann::json metrics{{"sw_initial", sw_initial},
                         {"sw_final", sw_final},
                         {"round_trip", round_trip},
                         {"round_trip_scale", mean_scale(eval_a)},
                         {"ham_drift", batch_drift(flow, eval_a, tc.integration())},
                         {"steps", result.state.step}};
  write_json(out / "metrics.json", metrics);
  std::cerr << "sw_initial " << csv::format_double(sw_initial) << " sw_final " << csv::format_double(sw_final)
            << "\n";
  return kExitOk;
}

struct TranslateArgs {
  std::string checkpoint, input, output;
  bool reverse = false;
  bool save_trajectory = false;
};

int cmd_translate(const TranslateArgs& a) {
  const auto ck = load_checkpoint(a.checkpoint);
  const HamiltonianField& flow = ck.state.flow;
  const Matrix x = load_batch(a.input);
  require_dim(x, flow.dim(), "input batch '" + a.input + "'");
  const IntegrationSpec forward = ck.config.integration();
  const IntegrationSpec spec = a.reverse ? forward.reversed() : forward;

  save_batch(a.output, integrate_batch(flow, x, spec));
  if (a.save_trajectory) {
    const fs::path dir = a.output + ".trajectories";
    fs::create_directories(dir);
    char name[32];
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::snprintf(name, sizeof name, "sample_%05ld.csv", static_cast<long>(j));
      save_trajectory_csv((dir / name).string(), integrate(flow, State(Vector(x.col(j))), spec));
    }
  }
  return kExitOk;
}

int cmd_verify(const GlobalFlags& g, const std::string& checkpoint) {
  RunConfig cfg = resolve_config(g);
  const auto ck = load_checkpoint(checkpoint);
  const HamiltonianField& flow = ck.state.flow;
  const fs::path out = cfg.out_dir;
  OutputLock lock(out);
  const auto [da, db] = cfg.domains();
  if (da.dim() != flow.dim()) {
    throw ShapeError("config domains have dimension " + std::to_string(da.dim()) +
                     " but the checkpoint flow has " + std::to_string(flow.dim()));
  }
  const IntegrationSpec spec = ck.config.integration();
  const std::uint64_t seed = mix_seed(g.seed_given ? g.seed : cfg.train.seed, 21);
  const Matrix x = Sampler(da, seed).sample(cfg.verify.samples);

  const double drift = batch_drift(flow, x, spec);
  const double round_trip = round_trip_error(flow, x, spec);
  const double scale = mean_scale(x);
  const auto grads =
      gradient_consistency_report(flow, x.leftCols(std::min<Eigen::Index>(x.cols(), cfg.verify.gradient_samples)),
                                  spec);

  struct Check {
    const char* name;
    double value, threshold;
  };
  const Check checks[] = {
      {"ham_drift", drift, cfg.verify.max_ham_drift},
      {"round_trip", round_trip, cfg.verify.max_round_trip * scale},
      {"adjoint_vs_unrolled", grads.adjoint_vs_unrolled, cfg.verify.max_adjoint_vs_unrolled},
      {"adjoint_vs_finite_diff", grads.adjoint_vs_finite_diff, cfg.verify.max_adjoint_vs_fd},
  };
  nlohmann::json report{{"checkpoint", checkpoint}, {"samples", x.cols()}, {"checks", nlohmann::json::array()}};
  bool all_pass = true;
  for (const auto& c : checks) {
    const bool pass = c.value <= c.threshold;
    all_pass = all_pass && pass;
    report["checks"].push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", pass}});
    if (!pass) {
      std::cerr << "FAILED " << c.name << ": " << csv::format_double(c.value) << " > "
                << csv::format_double(c.threshold) << "\n";
    }
  }
  report["pass"] = all_pass;
  write_json(out / "verify.json", report);
  return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_sweep(const GlobalFlags& g, const std::string& checkpoint, std::optional<double> factor_override) {
  RunConfig cfg = resolve_config(g);
  const auto ck = load_checkpoint(checkpoint);
  const HamiltonianField& flow = ck.state.flow;
  const fs::path out = cfg.out_dir;
  OutputLock lock(out);
  const auto [da, db] = cfg.domains();
  if (da.dim() != flow.dim()) throw ShapeError("config domains do not match the checkpoint dimension");
  const double factor = factor_override.value_or(cfg.metrics.sweep_factor);
  if (!(factor >= 1.0)) throw SchemaError("sweep factor must be >= 1");

  const TrainConfig& tc = ck.config;
  const auto [eval_a, eval_b] = evaluation_batches(tc, da, db);
  SweepOptions opts;
  opts.n_proj = cfg.metrics.n_proj.value_or(tc.n_proj);
  opts.seed = g.seed_given ? g.seed : cfg.metrics.seed.value_or(tc.projection_seed(-1));
  const IntegrationSpec spec = tc.integration();
  const SweepReport report = excessive_integration_sweep(flow, eval_a, eval_b, factor, spec, opts);
  csv::write_file_atomic((out / "sweep.csv").string(), report.to_csv());

  // Snapshots for the plot on the same grid as the report.
  const Eigen::Index shown = std::min<Eigen::Index>(eval_a.cols(), 256);
  std::vector<Matrix> snapshots{eval_a.leftCols(shown)};
  Matrix x = snapshots.front();
  const int per_segment = spec.n_steps / 10;
  const double h = spec.step();
  try {
    for (std::size_t k = 1; k < report.times.size(); ++k) {
      for (int s = 0; s < per_segment; ++s) rk4_step_batch(flow, x, h);
      snapshots.push_back(x);
    }
  } catch (const DivergenceError&) {
  }
  std::vector<double> times(report.times.begin(),
                            report.times.begin() + static_cast<std::ptrdiff_t>(snapshots.size()));
  csv::write_file_atomic((out / "sweep.svg").string(),
                         cli::sweep_svg(times, snapshots, eval_b.leftCols(shown)));

  if (report.diverged) {
    std::cerr << "FAILED sweep: integration diverged after t = " << report.times.back() << " T\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

struct SampleArgs {
  std::string benchmark = "two_gaussians";
  std::string domain_file;
  std::string side = "A";
  int n = 0;
  std::string output;
};

int cmd_sample(const GlobalFlags& g, const SampleArgs& a) {
  SyntheticDomain domain = [&] {
    if (!a.domain_file.empty()) return load_domain(a.domain_file);
    const auto pair = builtin_benchmark(benchmark_from_string(a.benchmark));
    return a.side == "B" ? pair.second : pair.first;
  }();
  if (a.n < 0) throw SchemaError("--n must be non-negative");
  save_batch(a.output, Sampler(domain, g.seed).sample(a.n));
  return kExitOk;
}

void tune_malloc() {
#ifdef __GLIBC__
  // Batches are re-allocated every RK4 stage; keep them off mmap and untrimmed.
  mallopt(M_MMAP_THRESHOLD, 100'000'000);
  mallopt(M_TRIM_THRESHOLD, 1'000'000'000);
#endif
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    std::cerr << "error: divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  tune_malloc();
  CLI::App app{"Hamiltonian-flow domain translation on synthetic benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "Run configuration JSON");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");

  auto* train_cmd = app.add_subcommand("train", "Train a flow adversarially from A to B");

  TranslateArgs ta;
  auto add_translate = [&](const char* name, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--checkpoint", ta.checkpoint, "Checkpoint directory")->required();
    cmd->add_option("--input", ta.input, "Input batch CSV")->required();
    cmd->add_option("--output", ta.output, "Output batch CSV")->required();
    cmd->add_flag("--save-trajectory", ta.save_trajectory,
                  "Also write one trajectory CSV per sample to <output>.trajectories/");
    return cmd;
  };
  auto* translate_cmd = add_translate("translate", "Push a batch through the flow (0 -> T)");
  translate_cmd->add_flag("--reverse", ta.reverse, "Integrate backward (T -> 0)");
  auto* reverse_cmd = add_translate("reverse", "Alias for translate --reverse");

  std::string checkpoint;
  auto* verify_cmd = app.add_subcommand("verify", "Structural checks on a checkpoint");
  verify_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();

  std::optional<double> factor;
  auto* sweep_cmd = app.add_subcommand("sweep", "Excessive-integration sweep with an SVG plot");
  sweep_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  sweep_cmd->add_option("--factor", factor, "Horizon multiple (overrides metrics.sweep_factor)");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Sample a benchmark or domain file to CSV");
  sample_cmd->add_option("--benchmark", sa.benchmark, "Builtin benchmark name");
  sample_cmd->add_option("--domain-file", sa.domain_file, "Domain spec JSON (overrides --benchmark)");
  sample_cmd->add_option("--side", sa.side, "Benchmark domain")->check(CLI::IsMember({"A", "B"}));
  sample_cmd->add_option("--n", sa.n, "Number of samples")->required();
  sample_cmd->add_option("--output", sa.output, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }
  g.seed_given = seed_opt->count() > 0;

  if (*train_cmd) return guarded([&] { return cmd_train(g); });
  if (*translate_cmd) return guarded([&] { return cmd_translate(ta); });
  if (*reverse_cmd) {
    ta.reverse = true;
    return guarded([&] { return cmd_translate(ta); });
  }
  if (*verify_cmd) return guarded([&] { return cmd_verify(g, checkpoint); });
  if (*sweep_cmd) return guarded([&] { return cmd_sweep(g, checkpoint, factor); });
  if (*sample_cmd) return guarded([&] { return cmd_sample(g, sa); });
  return kExitConfig;
}
