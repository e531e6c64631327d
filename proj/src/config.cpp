#include "specmpc/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace specmpc {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.is_object()) throw ConfigError(where() + " must be an object");
    doc_ = &doc;
  }

  ~Section() = default;

  // Call after every field has been read.
  void finish() const {
    for (const auto& [key, value] : doc_->items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + key + "' in " + where());
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_->find(key);
    if (it == doc_->end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned() && it->get<long long>() < 0) {
            throw ConfigError("");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else {
        if (!it->is_array()) throw ConfigError("");
        for (const auto& v : *it) {
          if (!v.is_number()) throw ConfigError("");
        }
      }
      out = it->get<T>();
    } catch (const ConfigError&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = doc_->find(key);
    return it == doc_->end() ? nullptr : &*it;
  }

  std::string where() const { return name_.empty() ? "config" : "section '" + name_ + "'"; }

 private:
  std::string name_;
  const json* doc_ = nullptr;
  std::set<std::string> seen_;
};

const json& section_doc(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  return it == doc.end() ? empty : *it;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void Config::validate() const {
  check(!run_name.empty(), "run_name must not be empty");
  check(run_name.find('/') == std::string::npos, "run_name must not contain '/'");
  check(env.name == "point_mass" || env.name == "pendulum",
        "env.name must be point_mass or pendulum");
  check(env.episode_steps >= 1, "env.episode_steps must be >= 1");
  check(model.variant == "oracle" || model.variant == "learned",
        "model.variant must be oracle or learned");
  check(model.noise_std >= 0.0, "model.noise_std must be >= 0");
  check(model.d_z >= 0, "model.d_z must be >= 0");
  for (double b : model.bias) check(std::isfinite(b), "model.bias entries must be finite");
  check(model.variant != "learned" || !model.checkpoint.empty(),
        "model.checkpoint is required for the learned variant");
  try {
    planner.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  check(speculation.mode == "baseline" || speculation.mode == "spec",
        "speculation.mode must be baseline or spec");
  check(speculation.H == planner.horizon, "speculation.H must equal planner.H");
  check(speculation.L >= 1, "speculation.L must be >= 1");
  check(!speculation.tau || *speculation.tau >= 0.0, "speculation.tau must be >= 0");
  check(speculation.tau_percentile >= 0.0 && speculation.tau_percentile <= 100.0,
        "speculation.tau_percentile must be in [0, 100]");
  check(speculation.corrector == "none" || speculation.corrector == "gated" ||
            speculation.corrector == "temporal",
        "speculation.corrector must be none, gated or temporal");
  check(speculation.history_K >= 1, "speculation.history_K must be >= 1");
  check(speculation.history_K == corrector.K, "speculation.history_K must equal corrector.K");
  try {
    corrector_train_config(corrector.arch).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  check(corrector.n_episodes >= 1, "corrector.n_episodes must be >= 1");
  check(world_model.encoder == "identity" || world_model.encoder == "affine",
        "world_model.encoder must be identity or affine");
  check(world_model.dynamics == "linear" || world_model.dynamics == "mlp",
        "world_model.dynamics must be linear or mlp");
  check(world_model.reward == "linear" || world_model.reward == "quadratic" ||
            world_model.reward == "mlp",
        "world_model.reward must be linear, quadratic or mlp");
  check(world_model.hidden >= 1, "world_model.hidden must be >= 1");
  check(world_model.epochs >= 0, "world_model.epochs must be >= 0");
  check(world_model.lr > 0.0, "world_model.lr must be > 0");
  check(world_model.batch >= 1, "world_model.batch must be >= 1");
  check(world_model.n_transitions >= 1, "world_model.n_transitions must be >= 1");
  try {
    latency.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  check(eval.n_seeds >= 1, "eval.n_seeds must be >= 1");
  check(!paths.out_dir.empty(), "paths.out_dir must not be empty");

  const auto dyn = make_dynamics(env.name);
  const int ds = dyn->spec().state_dim;
  if (model.variant == "oracle") {
    check(model.d_z == 0 || model.d_z == ds, "model.d_z must equal the state dimension (" +
                                                 std::to_string(ds) + ") for the oracle");
    check(model.bias.empty() || static_cast<int>(model.bias.size()) == ds,
          "model.bias must have " + std::to_string(ds) + " entries");
  }
}

std::string Config::run_dir() const { return paths.out_dir + "/" + run_name; }

SpecConfig Config::spec_config(double tau) const {
  SpecConfig s;
  s.H = speculation.H;
  s.L = speculation.L;
  s.tau = tau;
  s.corrector_enabled = speculation.corrector != "none";
  s.K = speculation.history_K;
  return s;
}

CorrectorTrainConfig Config::corrector_train_config(const std::string& arch) const {
  CorrectorTrainConfig c;
  c.arch = arch;
  c.lambda = corrector.lambda;
  c.hidden = corrector.hidden;
  c.K = corrector.K;
  c.epochs = corrector.epochs;
  c.lr = corrector.lr;
  c.batch_size = corrector.batch;
  c.unroll_n = corrector.unroll_n;
  c.holdout_fraction = corrector.holdout_fraction;
  c.seed = Rng(env.seed).fork("corrector." + arch).next_u64();
  return c;
}

Config parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config cfg;
  Section top(doc, "");
  top.read("run_name", cfg.run_name);
  for (const char* key : {"env", "model", "planner", "speculation", "corrector", "world_model",
                          "latency", "eval", "paths"}) {
    top.raw(key);
  }
  top.finish();

  {
    Section s(section_doc(doc, "env"), "env");
    s.read("name", cfg.env.name);
    s.read("seed", cfg.env.seed);
    s.read("episode_steps", cfg.env.episode_steps);
    s.finish();
  }
  {
    Section s(section_doc(doc, "model"), "model");
    s.read("variant", cfg.model.variant);
    s.read("bias", cfg.model.bias);
    s.read("noise_std", cfg.model.noise_std);
    s.read("d_z", cfg.model.d_z);
    s.read("checkpoint", cfg.model.checkpoint);
    s.finish();
  }
  {
    Section s(section_doc(doc, "planner"), "planner");
    s.read("H", cfg.planner.horizon);
    s.read("n_samples", cfg.planner.n_samples);
    s.read("n_elites", cfg.planner.n_elites);
    s.read("n_iterations", cfg.planner.n_iterations);
    s.read("init_std", cfg.planner.init_std);
    s.read("min_std", cfg.planner.min_std);
    s.read("warm_start", cfg.planner.warm_start);
    s.finish();
  }
  {
    Section s(section_doc(doc, "speculation"), "speculation");
    s.read("mode", cfg.speculation.mode);
    s.read("H", cfg.speculation.H);
    s.read("L", cfg.speculation.L);
    if (const json* tau = s.raw("tau")) {
      if (tau->is_string() && tau->get<std::string>() == "auto") {
        cfg.speculation.tau.reset();
      } else if (tau->is_string() && tau->get<std::string>() == "inf") {
        cfg.speculation.tau = std::numeric_limits<double>::infinity();
      } else if (tau->is_number()) {
        cfg.speculation.tau = tau->get<double>();
      } else {
        throw ConfigError("speculation.tau must be a number, \"auto\" or \"inf\"");
      }
    }
    s.read("tau_percentile", cfg.speculation.tau_percentile);
    s.read("corrector", cfg.speculation.corrector);
    s.read("history_K", cfg.speculation.history_K);
    s.finish();
  }
  {
    Section s(section_doc(doc, "corrector"), "corrector");
    s.read("arch", cfg.corrector.arch);
    s.read("lambda", cfg.corrector.lambda);
    s.read("K", cfg.corrector.K);
    s.read("hidden", cfg.corrector.hidden);
    s.read("epochs", cfg.corrector.epochs);
    s.read("lr", cfg.corrector.lr);
    s.read("batch", cfg.corrector.batch);
    s.read("unroll_n", cfg.corrector.unroll_n);
    s.read("n_episodes", cfg.corrector.n_episodes);
    s.read("holdout_fraction", cfg.corrector.holdout_fraction);
    s.finish();
  }
  {
    Section s(section_doc(doc, "world_model"), "world_model");
    s.read("encoder", cfg.world_model.encoder);
    s.read("dynamics", cfg.world_model.dynamics);
    s.read("reward", cfg.world_model.reward);
    s.read("hidden", cfg.world_model.hidden);
    s.read("epochs", cfg.world_model.epochs);
    s.read("lr", cfg.world_model.lr);
    s.read("batch", cfg.world_model.batch);
    s.read("n_transitions", cfg.world_model.n_transitions);
    s.finish();
  }
  {
    Section s(section_doc(doc, "latency"), "latency");
    s.read("c_plan", cfg.latency.c_plan);
    s.read("c_corr", cfg.latency.c_corr);
    s.read("c_enc", cfg.latency.c_enc);
    s.finish();
  }
  {
    Section s(section_doc(doc, "eval"), "eval");
    s.read("n_seeds", cfg.eval.n_seeds);
    s.finish();
  }
  {
    Section s(section_doc(doc, "paths"), "paths");
    s.read("out_dir", cfg.paths.out_dir);
    s.read("dataset", cfg.paths.dataset);
    s.read("checkpoint", cfg.paths.checkpoint);
    s.read("gated_checkpoint", cfg.paths.gated_checkpoint);
    s.read("temporal_checkpoint", cfg.paths.temporal_checkpoint);
    s.finish();
  }
  cfg.validate();
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

json tau_json(const std::optional<double>& tau) {
  if (!tau) return "auto";
  if (std::isinf(*tau)) return "inf";
  return *tau;
}

}  // namespace

nlohmann::json config_to_json(const Config& c) {
  json j;
  j["run_name"] = c.run_name;
  j["env"] = {{"name", c.env.name}, {"seed", c.env.seed}, {"episode_steps", c.env.episode_steps}};
  j["model"] = {{"variant", c.model.variant},
                {"bias", c.model.bias},
                {"noise_std", c.model.noise_std},
                {"d_z", c.model.d_z},
                {"checkpoint", c.model.checkpoint}};
  j["planner"] = {{"H", c.planner.horizon},
                  {"n_samples", c.planner.n_samples},
                  {"n_elites", c.planner.n_elites},
                  {"n_iterations", c.planner.n_iterations},
                  {"init_std", c.planner.init_std},
                  {"min_std", c.planner.min_std},
                  {"warm_start", c.planner.warm_start}};
  j["speculation"] = {{"mode", c.speculation.mode},
                      {"H", c.speculation.H},
                      {"L", c.speculation.L},
                      {"tau", tau_json(c.speculation.tau)},
                      {"tau_percentile", c.speculation.tau_percentile},
                      {"corrector", c.speculation.corrector},
                      {"history_K", c.speculation.history_K}};
  j["corrector"] = {{"arch", c.corrector.arch},
                    {"lambda", c.corrector.lambda},
                    {"K", c.corrector.K},
                    {"hidden", c.corrector.hidden},
                    {"epochs", c.corrector.epochs},
                    {"lr", c.corrector.lr},
                    {"batch", c.corrector.batch},
                    {"unroll_n", c.corrector.unroll_n},
                    {"n_episodes", c.corrector.n_episodes},
                    {"holdout_fraction", c.corrector.holdout_fraction}};
  j["world_model"] = {{"encoder", c.world_model.encoder},
                      {"dynamics", c.world_model.dynamics},
                      {"reward", c.world_model.reward},
                      {"hidden", c.world_model.hidden},
                      {"epochs", c.world_model.epochs},
                      {"lr", c.world_model.lr},
                      {"batch", c.world_model.batch},
                      {"n_transitions", c.world_model.n_transitions}};
  j["latency"] = {{"c_plan", c.latency.c_plan}, {"c_corr", c.latency.c_corr}, {"c_enc", c.latency.c_enc}};
  j["eval"] = {{"n_seeds", c.eval.n_seeds}};
  j["paths"] = {{"out_dir", c.paths.out_dir},
                {"dataset", c.paths.dataset},
                {"checkpoint", c.paths.checkpoint},
                {"gated_checkpoint", c.paths.gated_checkpoint},
                {"temporal_checkpoint", c.paths.temporal_checkpoint}};
  return j;
}

std::string reference_config_text(const Config& cfg) {
  const json j = config_to_json(cfg);
  const std::vector<std::pair<const char*, const char*>> sections{
      {"run_name", "Outputs go to <paths.out_dir>/<run_name>/."},
      {"env", "Environment: point_mass or pendulum. seed is the master seed; every random\n"
              "  // stream (env resets, planner, model noise, corrector init) is forked from it."},
      {"model", "World model. oracle = true dynamics plus bias and white noise of scale\n"
                "  // noise_std; learned = regression model loaded from checkpoint. Empty bias\n"
                "  // means zeros; d_z = 0 means the state dimension."},
      {"planner", "Cross-entropy-method planner over the mean latent model."},
      {"speculation", "mode baseline replans every step; spec runs the speculative queues.\n"
                      "  // tau is a number, \"inf\", or \"auto\" (tau_percentile of d_t in a probe run).\n"
                      "  // corrector: none | gated | temporal. H must match planner.H."},
      {"corrector", "Residual corrector training (distillation from the replanning teacher)."},
      {"world_model", "Learned world model used by `train --world-model`."},
      {"latency", "Simulated cost model in ms: per planner call, per corrected step, per step."},
      {"eval", "Number of seeds for `eval` (seeds are env.seed + i)."},
      {"paths", "Empty checkpoint paths mean <run dir>/checkpoint.json (run) or train-on-the-fly\n"
                "  // (eval)."},
  };
  std::ostringstream out;
  out << "// Reference configuration with every key at its default value.\n{\n";
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& [key, comment] = sections[i];
    std::string body = j.at(key).dump(2);
    // Indent nested lines by one level.
    std::string indented;
    for (char ch : body) {
      indented.push_back(ch);
      if (ch == '\n') indented += "  ";
    }
    out << "  // " << comment << "\n  \"" << key << "\": " << indented
        << (i + 1 < sections.size() ? ",\n" : "\n");
  }
  out << "}\n";
  return out.str();
}

Config pendulum_preset() {
  Config c;
  c.run_name = "pendulum";
  c.env.name = "pendulum";
  c.env.seed = 0;
  c.env.episode_steps = 200;
  c.model.bias = {0.0, 0.0, 0.1};
  c.model.noise_std = 0.02;
  c.planner.horizon = 10;
  c.speculation.H = 10;
  c.speculation.L = 3;
  c.speculation.tau_percentile = 70.0;
  c.speculation.corrector = "gated";
  c.corrector.n_episodes = 10;
  c.eval.n_seeds = 10;
  return c;
}

std::shared_ptr<const Dynamics> config_dynamics(const Config& cfg) { return make_dynamics(cfg.env.name); }

std::unique_ptr<WorldModel> config_world_model(const Config& cfg,
                                               std::shared_ptr<const Dynamics> dynamics) {
  const int ds = dynamics->spec().state_dim;
  if (cfg.model.variant == "learned") {
    auto m = std::make_unique<LearnedWorldModel>(
        LearnedWorldModel::from_json(read_json_file(cfg.model.checkpoint)));
    if (m->state_dim() != ds || m->action_dim() != dynamics->spec().action_dim) {
      throw ConfigError("world-model checkpoint dimensions do not match env " + cfg.env.name);
    }
    if (cfg.model.d_z != 0 && cfg.model.d_z != m->latent_dim()) {
      throw ConfigError("model.d_z does not match the world-model checkpoint");
    }
    return m;
  }
  Vec bias = Vec::Zero(ds);
  for (std::size_t i = 0; i < cfg.model.bias.size(); ++i) bias(static_cast<Eigen::Index>(i)) = cfg.model.bias[i];
  return std::make_unique<PerturbedOracle>(std::move(dynamics), bias, cfg.model.noise_std);
}

}  // namespace specmpc
