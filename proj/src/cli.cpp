#include "specmpc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>

#include "CLI11.hpp"
#include "specmpc/csv.hpp"
#include "specmpc/experiment.hpp"

namespace specmpc {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string dataset;
  std::string summary;
  std::optional<int> n_seeds;
  bool world_model = false;
};

Config load(const Options& o) {
  Config cfg = o.config.empty() ? Config{} : load_config(o.config);
  if (o.seed) cfg.env.seed = *o.seed;
  if (!o.out.empty()) cfg.paths.out_dir = o.out;
  cfg.validate();
  return cfg;
}

std::string prepare_run_dir(const Config& cfg) {
  const std::string dir = cfg.run_dir();
  fs::create_directories(dir);
  return dir;
}

std::string first_nonempty(std::initializer_list<std::string> options) {
  for (const auto& s : options) {
    if (!s.empty()) return s;
  }
  return {};
}

std::string fmt(double v) { return format_double(v); }

void print_tau(std::ostream& out, const Config& cfg, double tau) {
  out << "tau " << fmt(tau) << (cfg.speculation.tau ? " (configured)" : " (calibrated)") << "\n";
}

int cmd_collect(const Options& o, std::ostream& out) {
  const Config cfg = load(o);
  const std::string dir = prepare_run_dir(cfg);
  Setup s(cfg);
  const double tau = resolve_tau(s);
  print_tau(out, cfg, tau);
  const DistillationDataset data = collect_dataset(s, tau);
  const std::string path = first_nonempty({o.dataset, cfg.paths.dataset, dir + "/dataset.csv"});
  write_dataset_csv(path, data);

  std::vector<double> d, residual;
  for (const auto& smp : data.samples) {
    d.push_back(mismatch(smp.z_real, smp.z_hat));
    residual.push_back((smp.a_star - smp.a_spec).squaredNorm());
  }
  out << "dataset " << path << "\n";
  out << "samples " << data.size() << " episodes " << data.episodes() << "\n";
  if (!d.empty()) {
    out << "d_t quantiles p10 " << fmt(percentile(d, 10)) << " p50 " << fmt(percentile(d, 50))
        << " p70 " << fmt(percentile(d, 70)) << " p90 " << fmt(percentile(d, 90)) << "\n";
    out << "residual target |a* - a_spec|^2 mean " << fmt(mean_of(residual)) << " max "
        << fmt(percentile(residual, 100)) << "\n";
  }
  return kExitOk;
}

int cmd_train_world_model(const Options& o, const Config& cfg, const std::string& dir,
                          std::ostream& out) {
  const auto dyn = config_dynamics(cfg);
  Rng data_rng = Rng(cfg.env.seed).fork("world_model.data");
  const auto transitions =
      sample_transitions(*dyn, cfg.world_model.n_transitions, cfg.env.episode_steps, data_rng);
  write_transitions_csv(dir + "/transitions.csv", transitions);
  LearnedModelConfig mc{cfg.world_model.encoder, cfg.world_model.dynamics, cfg.world_model.reward,
                        cfg.world_model.hidden};
  Rng init_rng = Rng(cfg.env.seed).fork("world_model.init");
  auto init = LearnedWorldModel::create(dyn->spec().state_dim, dyn->spec().action_dim, mc, init_rng);
  WorldModelTrainConfig tc;
  tc.epochs = cfg.world_model.epochs;
  tc.lr = cfg.world_model.lr;
  tc.batch_size = cfg.world_model.batch;
  tc.seed = Rng(cfg.env.seed).fork("world_model.train").next_u64();
  const auto res = train_world_model(transitions, std::move(init), tc);
  const std::string ckpt = first_nonempty({o.checkpoint, dir + "/world_model.json"});
  write_json_file(ckpt, res.model.to_json());
  CsvWriter curve(dir + "/wm_loss_curve.csv");
  curve.row({"epoch", "dynamics_loss", "reward_loss"});
  for (std::size_t e = 0; e < res.history.size(); ++e) {
    curve.row({std::to_string(e + 1), fmt(res.history[e].dynamics), fmt(res.history[e].reward)});
  }
  curve.close();
  const WorldModelLoss final_loss = world_model_loss(res.model, transitions);
  out << "world model " << ckpt << "\n";
  out << "transitions " << transitions.size() << " final dynamics_loss " << fmt(final_loss.dynamics)
      << " reward_loss " << fmt(final_loss.reward) << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Config cfg = load(o);
  const std::string dir = prepare_run_dir(cfg);
  if (o.world_model) return cmd_train_world_model(o, cfg, dir, out);

  const std::string path = first_nonempty({o.dataset, cfg.paths.dataset, dir + "/dataset.csv"});
  if (!fs::exists(path)) throw std::runtime_error("dataset not found: " + path);
  const DistillationDataset data = read_dataset_csv(path);
  const CorrectorTrainResult res = train_corrector(data, cfg.corrector_train_config(cfg.corrector.arch));
  const std::string ckpt = first_nonempty({o.checkpoint, cfg.paths.checkpoint, dir + "/checkpoint.json"});
  save_corrector(*res.corrector, ckpt);
  CsvWriter curve(dir + "/loss_curve.csv");
  curve.row({"epoch", "train_loss", "holdout_loss"});
  for (std::size_t e = 0; e < res.train_loss.size(); ++e) {
    curve.row({std::to_string(e + 1), fmt(res.train_loss[e]), fmt(res.holdout_loss[e])});
  }
  curve.close();
  out << "checkpoint " << ckpt << " arch " << res.corrector->arch() << "\n";
  out << "samples train " << res.train_indices.size() << " holdout " << res.holdout_indices.size() << "\n";
  if (!res.train_loss.empty()) {
    out << "epoch 1 holdout " << fmt(res.holdout_loss.front()) << " final holdout "
        << fmt(res.holdout_loss.back()) << "\n";
  }
  if (!res.holdout_indices.empty()) {
    const ResidualStats st = residual_stats(*res.corrector, data, res.holdout_indices);
    out << "holdout |a_spec - a*|^2 " << fmt(st.uncorrected) << " |a_corr - a*|^2 " << fmt(st.corrected)
        << "\n";
  }
  return kExitOk;
}

std::unique_ptr<Corrector> load_checked(const std::string& path, const Config& cfg, const Setup& s,
                                        const std::string& arch) {
  if (!fs::exists(path)) throw std::runtime_error("corrector checkpoint not found: " + path);
  auto c = load_corrector(path);
  if (c->arch() != arch) {
    throw ConfigError("checkpoint " + path + " holds a " + c->arch() + " corrector, config asks for " + arch);
  }
  if (c->latent_dim() != s.model->latent_dim() || c->action_dim() != s.model->action_dim()) {
    throw ConfigError("checkpoint " + path + " dimensions do not match the configured model");
  }
  if (c->window() != 1 && c->window() != cfg.speculation.history_K) {
    throw ConfigError("checkpoint " + path + " window does not match speculation.history_K");
  }
  return c;
}

int cmd_run(const Options& o, std::ostream& out) {
  const Config cfg = load(o);
  const std::string dir = prepare_run_dir(cfg);
  Setup s(cfg);
  Environment env = s.make_env();
  EpisodeResult r;
  if (cfg.speculation.mode == "baseline") {
    r = run_baseline(env, *s.model, *s.planner, cfg.env.seed);
  } else {
    const double tau = resolve_tau(s);
    print_tau(out, cfg, tau);
    std::unique_ptr<Corrector> corrector;
    if (cfg.speculation.corrector != "none") {
      const std::string path = first_nonempty({o.checkpoint, cfg.paths.checkpoint, dir + "/checkpoint.json"});
      corrector = load_checked(path, cfg, s, cfg.speculation.corrector);
    }
    r = run_episode(env, cfg.spec_config(tau), *s.model, *s.planner, corrector.get(), cfg.env.seed);
  }
  const RunTelemetry& tel = r.telemetry;
  const int cols = std::max(histogram_columns(tel), std::max(3, cfg.speculation.L));
  export_csv(tel, cfg.latency, s.model->action_dim(), dir + "/summary.csv", dir + "/trace.csv", cols);
  const LatencyReport lat = tel.latency(cfg.latency);
  out << "steps " << tel.steps() << " planner_calls " << tel.planner_calls() << " fallbacks "
      << tel.fallbacks() << " corrected " << tel.corrected() << "\n";
  out << "cum_reward " << fmt(tel.cum_reward()) << "\n";
  out << "simulated ms/step " << fmt(lat.per_step_ms) << " speedup " << fmt(lat.speedup_pct) << "%\n";
  out << "wall-clock planning ms (measured, not simulated) " << std::fixed << std::setprecision(1)
      << tel.wall_plan_ms << std::defaultfloat << "\n";
  out << "outputs " << dir << "/summary.csv " << dir << "/trace.csv\n";
  return kExitOk;
}

std::unique_ptr<Corrector> eval_corrector(const Config& cfg, const Setup& s, const std::string& arch,
                                          const std::string& path, const DistillationDataset* data,
                                          const std::string& dir, std::ostream& out) {
  if (!path.empty()) return load_checked(path, cfg, s, arch);
  CorrectorTrainResult res = train_corrector(*data, cfg.corrector_train_config(arch));
  save_corrector(*res.corrector, dir + "/" + arch + "_checkpoint.json");
  CsvWriter curve(dir + "/" + arch + "_loss_curve.csv");
  curve.row({"epoch", "train_loss", "holdout_loss"});
  for (std::size_t e = 0; e < res.train_loss.size(); ++e) {
    curve.row({std::to_string(e + 1), fmt(res.train_loss[e]), fmt(res.holdout_loss[e])});
  }
  curve.close();
  out << "trained " << arch << " corrector on " << data->size() << " samples\n";
  return std::move(res.corrector);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Config cfg = load(o);
  const int n_seeds = o.n_seeds ? *o.n_seeds : cfg.eval.n_seeds;
  if (n_seeds < 1) throw ConfigError("--n-seeds must be >= 1");
  const std::string dir = prepare_run_dir(cfg);
  Setup s(cfg);
  const double tau = resolve_tau(s);
  print_tau(out, cfg, tau);

  std::optional<DistillationDataset> data;
  if (cfg.paths.gated_checkpoint.empty() || cfg.paths.temporal_checkpoint.empty()) {
    data = collect_dataset(s, tau);
    write_dataset_csv(dir + "/dataset.csv", *data);
  }
  const auto gated = eval_corrector(cfg, s, "gated", cfg.paths.gated_checkpoint, data ? &*data : nullptr, dir, out);
  const auto temporal =
      eval_corrector(cfg, s, "temporal", cfg.paths.temporal_checkpoint, data ? &*data : nullptr, dir, out);

  const EvalMatrix m = run_eval_matrix(s, n_seeds, tau, *gated, *temporal);
  int cols = std::max(3, cfg.speculation.L);
  for (const auto& arm : m.arms) {
    for (const auto& r : arm.runs) cols = std::max(cols, histogram_columns(r.telemetry));
  }
  write_eval_csv(m, cfg.latency, dir + "/eval.csv", dir + "/eval_runs.csv", cols);
  for (const auto& arm : m.arms) {
    out << std::left << std::setw(14) << arm.name << " reward " << fmt(mean_of(arm.rewards())) << " +- "
        << fmt(stddev_of(arm.rewards())) << "  calls " << fmt(mean_of(arm.calls())) << "\n";
  }
  out << "outputs " << dir << "/eval.csv " << dir << "/eval_runs.csv\n";
  return kExitOk;
}

int cmd_replay_latency(const Options& o, std::ostream& out) {
  const Config cfg = load(o);
  const std::string summary = first_nonempty({o.summary, cfg.run_dir() + "/summary.csv"});
  const CsvTable table = read_csv(summary);
  if (table.rows.size() != 1) throw std::runtime_error(summary + ": expected exactly one data row");
  auto count = [&](const char* name) {
    const double v = table.number(0, name);
    if (!(v >= 0.0) || v != std::floor(v)) throw std::runtime_error(summary + ": bad count in " + name);
    return static_cast<long>(v);
  };
  const CallCounts counts{count("steps"), count("planner_calls"), count("corrected")};
  const LatencyReport lat = simulated_latency(counts, cfg.latency);
  const std::string dir = prepare_run_dir(cfg);
  CsvWriter w(dir + "/latency.csv");
  w.row({"steps", "planner_calls", "corrected", "c_plan", "c_corr", "c_enc", "sim_ms_per_step",
         "baseline_ms_per_step", "reduction_ms", "speedup_pct"});
  w.row({std::to_string(counts.steps), std::to_string(counts.planner_calls), std::to_string(counts.corrected),
         fmt(cfg.latency.c_plan), fmt(cfg.latency.c_corr), fmt(cfg.latency.c_enc), fmt(lat.per_step_ms),
         fmt(lat.baseline_per_step_ms), fmt(lat.reduction_ms()), fmt(lat.speedup_pct)});
  w.close();
  out << "per-step " << fmt(lat.per_step_ms) << " ms (baseline " << fmt(lat.baseline_per_step_ms)
      << " ms), reduction " << fmt(lat.reduction_ms()) << " ms, speedup " << fmt(lat.speedup_pct) << "%\n";
  out << "output " << dir << "/latency.csv\n";
  return kExitOk;
}

int cmd_reference(const Options& o, std::ostream& out) {
  Config cfg;
  if (o.seed) cfg.env.seed = *o.seed;
  const std::string text = reference_config_text(cfg);
  parse_config(text);
  if (o.out.empty()) {
    out << text;
    return kExitOk;
  }
  fs::create_directories(o.out);
  const std::string path = o.out + "/reference_config.json";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
  out << "wrote " << path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative execution for latent-space MPC"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--out", o.out, "output directory (overrides paths.out_dir)");
    sub->add_option("--seed", o.seed, "master seed (overrides env.seed)");
  };
  auto* collect = app.add_subcommand("collect", "collect a distillation dataset");
  common(collect);
  collect->add_option("--dataset", o.dataset, "dataset output path");

  auto* train = app.add_subcommand("train", "train a corrector (or the world model)");
  common(train);
  train->add_option("--checkpoint", o.checkpoint, "checkpoint output path");
  train->add_option("--dataset", o.dataset, "dataset CSV");
  train->add_flag("--world-model", o.world_model, "train the learned world model instead");

  auto* run = app.add_subcommand("run", "run one episode");
  common(run);
  run->add_option("--checkpoint", o.checkpoint, "corrector checkpoint");

  auto* eval = app.add_subcommand("eval", "run the five-arm evaluation matrix");
  common(eval);
  eval->add_option("--n-seeds", o.n_seeds, "number of seeds (overrides eval.n_seeds)");

  auto* replay = app.add_subcommand("replay-latency", "recompute simulated latency from a summary");
  common(replay);
  replay->add_option("--summary", o.summary, "summary.csv to replay");

  auto* reference = app.add_subcommand("make-reference-config", "emit the default config");
  reference->add_option("--out", o.out, "directory for reference_config.json (stdout if omitted)");
  reference->add_option("--seed", o.seed, "master seed to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfigError;
  }

  try {
    if (*collect) return cmd_collect(o, out);
    if (*train) return cmd_train(o, out);
    if (*run) return cmd_run(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*replay) return cmd_replay_latency(o, out);
    if (*reference) return cmd_reference(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitConfigError;
}

}  // namespace specmpc
