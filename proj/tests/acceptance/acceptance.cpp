// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "specmpc/cli.hpp"
#include "specmpc/experiment.hpp"

using namespace specmpc;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr double kEquivalenceSeconds = 60.0;
constexpr double kLatencyReductionMs = 9.0;
constexpr double kLatencyReductionTol = 0.5;
constexpr double kSpeedupPct = 25.0;
constexpr double kSpeedupTol = 1.0;
constexpr double kBruteForceTol = 1e-2;
constexpr double kBruteForceSeconds = 10.0;
constexpr double kMinCallReduction = 0.30;
constexpr double kMaxReturnDrop = 0.10;
constexpr int kMinSeeds = 10;
constexpr double kSignificanceStddevs = 1.0;
constexpr double kGradTol = 1e-3;
constexpr double kConvergenceRatio = 0.5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

long conserved(const RunTelemetry& tel) {
  long s = 0;
  for (const auto& [k, n] : tel.hist()) s += static_cast<long>(k) * n;
  return s;
}

struct Paired {
  double mean = 0.0;
  double se = 0.0;
};

Paired paired_diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) d.push_back(a[i] - b[i]);
  return {mean_of(d), stddev_of(d) / std::sqrt(static_cast<double>(d.size()))};
}

// Shared state of the pendulum experiment used by several criteria.
struct PendulumStudy {
  Config cfg = pendulum_preset();
  std::unique_ptr<Setup> setup;
  double tau = 0.0;
  DistillationDataset data;
  CorrectorTrainResult gated, temporal;
  EvalMatrix matrix;
  double seconds = 0.0;
};

PendulumStudy& study() {
  static PendulumStudy s = [] {
    PendulumStudy p;
    const auto t0 = Clock::now();
    p.setup = std::make_unique<Setup>(p.cfg);
    p.tau = resolve_tau(*p.setup);
    p.data = collect_dataset(*p.setup, p.tau);
    std::cerr << "pendulum: tau " << p.tau << ", " << p.data.size() << " samples\n";
    p.gated = train_corrector(p.data, p.cfg.corrector_train_config("gated"));
    p.temporal = train_corrector(p.data, p.cfg.corrector_train_config("temporal"));
    p.matrix = run_eval_matrix(*p.setup, p.cfg.eval.n_seeds, p.tau, *p.gated.corrector,
                               *p.temporal.corrector);
    p.seconds = seconds_since(t0);
    for (const auto& arm : p.matrix.arms) {
      std::cerr << "  " << arm.name << " reward " << mean_of(arm.rewards()) << " +- "
                << stddev_of(arm.rewards()) << " calls " << mean_of(arm.calls()) << "\n";
    }
    return p;
  }();
  return s;
}

PlannerConfig default_planner(int h) {
  PlannerConfig c;
  c.horizon = h;
  return c;
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  int compared = 0;
  for (const char* name : {"point_mass", "pendulum"}) {
    auto dyn = make_dynamics(name);
    const int ds = dyn->spec().state_dim;
    Vec bias = Vec::Zero(ds);
    bias(ds - 1) = 0.1;
    PerturbedOracle model(dyn, bias, 0.02);
    CemPlanner planner(default_planner(3));
    SpecConfig sc;
    sc.tau = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Environment e1(dyn, 100), e2(dyn, 100);
      const auto s = run_episode(e1, sc, model, planner, nullptr, seed);
      const auto b = run_baseline(e2, model, planner, seed);
      if (s.trace.actions.size() != b.trace.actions.size()) return {false, "length mismatch"};
      for (std::size_t i = 0; i < s.trace.actions.size(); ++i) {
        if (s.trace.actions[i] != b.trace.actions[i] || s.trace.rewards[i] != b.trace.rewards[i]) {
          return {false, std::string(name) + " seed " + std::to_string(seed) + " differs at step " +
                             std::to_string(i)};
        }
      }
      if (s.telemetry.planner_calls() != b.telemetry.planner_calls()) {
        return {false, std::string(name) + " call counts differ"};
      }
      ++compared;
    }
  }
  const double sec = seconds_since(t0);
  return {sec < kEquivalenceSeconds,
          std::to_string(compared) + " episodes bitwise equal in " + num(sec, 3) + " s"};
}

Outcome schedule_arithmetic() {
  auto dyn = std::make_shared<PointMass>();
  PerturbedOracle model(dyn);
  CemPlanner planner(default_planner(3));
  auto calls = [&](int l, int steps, bool baseline) {
    Environment env(dyn, steps);
    SpecConfig sc;
    sc.L = l;
    if (baseline) return run_baseline(env, model, planner, 0).telemetry.planner_calls();
    return run_episode(env, sc, model, planner, nullptr, 0).telemetry.planner_calls();
  };
  const long c9 = calls(3, 9, false), c12 = calls(6, 12, false), c500 = calls(3, 500, false);
  const long b500 = calls(3, 500, true);

  PlanContext ctx(model, planner, 0);
  SpecQueues q;
  RunTelemetry tel;
  SpecConfig sc;
  sc.L = 6;
  const Vec z = Vec::Constant(4, 0.3);
  LatentState chained;
  refill_queues(q, z, 0, sc, ctx, tel, &chained);
  const bool seeded = chained == ctx.teacher(z, 0).predicted_latents[3] && q.latents[3] == chained;

  const bool ok = c9 == 3 && c12 == 4 && c500 == 167 && b500 == 500 && seeded;
  return {ok, "L3/9 steps " + std::to_string(c9) + ", L6/12 steps " + std::to_string(c12) +
                  ", L3/500 steps " + std::to_string(c500) + ", baseline " + std::to_string(b500) +
                  (seeded ? ", chained seed ok" : ", chained seed WRONG")};
}

Outcome conservation() {
  RunTelemetry fixture;
  int t = 0;
  for (auto [calls, k] : {std::pair{20, 3}, std::pair{178, 2}, std::pair{84, 1}}) {
    for (int c = 0; c < calls; ++c) {
      const auto id = fixture.open_call();
      for (int i = 0; i < k; ++i) {
        StepRecord r;
        r.t = t++;
        r.mode = i == 0 ? StepMode::fresh_plan : StepMode::corrected;
        r.action = Vec::Zero(1);
        fixture.record_step(r, id);
      }
      fixture.close_call(id);
    }
  }
  const bool fixture_ok = fixture.planner_calls() == 282 && conserved(fixture) == 500 &&
                          fixture.steps() == 500;
  int runs = 0, bad = 0;
  for (const auto& arm : study().matrix.arms) {
    for (const auto& r : arm.runs) {
      ++runs;
      long calls = 0;
      for (const auto& kv : r.telemetry.hist()) calls += kv.second;
      if (conserved(r.telemetry) != r.telemetry.steps() || calls != r.telemetry.planner_calls()) ++bad;
    }
  }
  return {fixture_ok && bad == 0 && runs > 0,
          std::to_string(runs - bad) + "/" + std::to_string(runs) +
              " eval runs conserve steps; 3x20 + 2x178 + 1x84 = " + std::to_string(conserved(fixture))};
}

Outcome latency_replay() {
  const LatencyReport r = simulated_latency({500, 282, 282}, LatencyModel{});
  const bool ok = std::abs(r.reduction_ms() - kLatencyReductionMs) <= kLatencyReductionTol &&
                  std::abs(r.speedup_pct - kSpeedupPct) <= kSpeedupTol;
  return {ok, "reduction " + num(r.reduction_ms()) + " ms, speedup " + num(r.speedup_pct) + "%"};
}

Outcome brute_force() {
  const auto t0 = Clock::now();
  PerturbedOracle model(std::make_shared<PointMass>(1));
  CemPlanner planner(default_planner(3));
  int hits = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng init(1000 + static_cast<std::uint64_t>(seed));
    Vec z(2);
    z << 1.2 * init.uniform() - 0.6, 0.4 * init.uniform() - 0.2;
    double best = -1e300;
    for (int code = 0; code < 27; ++code) {
      std::vector<Action> seq;
      for (int k = 0, c = code; k < 3; ++k, c /= 3) seq.push_back(Vec::Constant(1, c % 3 - 1.0));
      best = std::max(best, rollout_return(model, z, seq));
    }
    Rng r(static_cast<std::uint64_t>(seed));
    const double gap = std::abs(planner.plan(model, z, r).predicted_return - best);
    worst = std::max(worst, gap);
    if (gap < kBruteForceTol) ++hits;
  }
  const double sec = seconds_since(t0);
  return {hits == 10 && sec < kBruteForceSeconds,
          std::to_string(hits) + "/10 seeds, worst gap " + num(worst, 3) + ", " + num(sec, 3) + " s"};
}

Outcome headline_tradeoff() {
  const auto& m = study().matrix;
  const Arm& base = m.arm("baseline");
  const Arm& spec = m.arm("spec_gated");
  const double cb = mean_of(base.calls()), cs = mean_of(spec.calls());
  const double rb = mean_of(base.rewards()), rs = mean_of(spec.rewards());
  const double reduction = 1.0 - cs / cb;
  const double drop = (rb - rs) / std::abs(rb);
  const bool ok = static_cast<int>(base.runs.size()) >= kMinSeeds && reduction >= kMinCallReduction &&
                  drop <= kMaxReturnDrop;
  return {ok, "calls " + num(cb) + " -> " + num(cs) + " (" + num(100 * reduction, 3) +
                  "% fewer), return " + num(rb) + " -> " + num(rs) + " (drop " + num(100 * drop, 3) +
                  "%), " + std::to_string(base.runs.size()) + " seeds"};
}

Outcome ablation_direction() {
  const auto& m = study().matrix;
  const auto base = m.arm("baseline").rewards();
  const auto corr = m.arm("spec_gated").rewards();
  const auto l3 = m.arm("spec_L3").rewards();
  const auto tau = m.arm("spec_tau").rewards();
  auto pooled = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::sqrt(0.5 * (stddev_of(a) * stddev_of(a) + stddev_of(b) * stddev_of(b)));
  };
  // Gaps are measured in units of the run-to-run (across-seed) stddev.
  const double b_c = mean_of(base) - mean_of(corr), s_bc = pooled(base, corr);
  const double c_l3 = mean_of(corr) - mean_of(l3), s_cl3 = pooled(corr, l3);
  const double c_tau = mean_of(corr) - mean_of(tau), s_ctau = pooled(corr, tau);
  const bool ok = static_cast<int>(base.size()) >= kMinSeeds && b_c >= -kSignificanceStddevs * s_bc &&
                  c_l3 > kSignificanceStddevs * s_cl3 && c_tau > kSignificanceStddevs * s_ctau;
  const Paired p_bc = paired_diff(base, corr);
  return {ok, "baseline " + num(mean_of(base)) + ", gated " + num(mean_of(corr)) + ", L3 " +
                  num(mean_of(l3)) + ", tau-no-corr " + num(mean_of(tau)) + "; gap/stddev base-gated " +
                  num(b_c, 3) + "/" + num(s_bc, 3) + ", gated-L3 " + num(c_l3, 3) + "/" + num(s_cl3, 3) +
                  ", gated-tau " + num(c_tau, 3) + "/" + num(s_ctau, 3) + "; paired base-gated " +
                  num(p_bc.mean, 3) + " (SE " + num(p_bc.se, 3) + ")"};
}

Outcome gradient_checks() {
  std::string detail;
  bool ok = true;
  auto randomize = [](ParameterSet& ps, Rng& r, double scale) {
    for (auto& p : ps)
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += scale * r.normal();
  };
  for (const char* arch : {"gated", "temporal"}) {
    Rng r(5);
    auto c = make_corrector(arch, 3, 1, 8, 4, r);
    randomize(c->params(), r, 0.3);
    Mat x(2 * c->window(), feature_width(3, 1)), y(2, 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = r.normal();
    auto loss = [&](Tape& t) {
      const auto bound = bind_parameters(t, c->params());
      return ad::mse(c->forward(bound, t.constant(x)), t.constant(y));
    };
    const double e = grad_check(loss, c->params(), 1e-6);
    ok = ok && e < kGradTol;
    detail += std::string(arch) + " " + num(e, 3) + ", ";
  }
  Rng r(6);
  auto m = LearnedWorldModel::create(3, 1, {"affine", "mlp", "mlp", 8}, r);
  randomize(m.params(), r, 0.1);
  Mat s(4, 3), a(4, 1), sn(4, 3), rew(4, 1);
  for (Mat* mat : {&s, &a, &sn, &rew})
    for (Eigen::Index i = 0; i < mat->size(); ++i) mat->data()[i] = r.normal();
  auto loss = [&](Tape& t) {
    const Var z = m.encode(t, t.constant(s));
    const Var zn = m.latent_step(t, z, t.constant(a));
    const Var rh = m.predict_reward(t, z, t.constant(a));
    return ad::add(ad::mse(zn, m.encode(t, t.constant(sn))), ad::mse(rh, t.constant(rew)));
  };
  const double e = grad_check(loss, m.params(), 1e-6);
  ok = ok && e < kGradTol;
  return {ok, detail + "world model " + num(e, 3)};
}

Outcome training_convergence() {
  const auto& s = study();
  bool ok = true;
  std::string detail;
  for (const auto* res : {&s.gated, &s.temporal}) {
    const auto& h = res->holdout_loss;
    const ResidualStats st = residual_stats(*res->corrector, s.data, res->holdout_indices);
    const bool good = static_cast<int>(h.size()) == s.cfg.corrector.epochs &&
                      h.back() < kConvergenceRatio * h.front() && st.corrected < st.uncorrected;
    ok = ok && good;
    detail += res->corrector->arch() + " holdout " + num(h.front(), 3) + " -> " + num(h.back(), 3) +
              " over " + std::to_string(h.size()) + " epochs, residual " + num(st.uncorrected, 3) +
              " -> " + num(st.corrected, 3) + "; ";
  }
  return {ok, detail};
}

std::map<std::string, std::string> run_all_subcommands(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir / "in");
  Config c;
  c.run_name = "det";
  c.env.episode_steps = 30;
  c.model.bias = {0.0, 0.0, 0.05, 0.0};
  c.model.noise_std = 0.02;
  c.corrector.epochs = 20;
  c.corrector.hidden = 16;
  c.corrector.n_episodes = 3;
  c.world_model.epochs = 3;
  c.world_model.hidden = 16;
  c.world_model.n_transitions = 500;
  c.eval.n_seeds = 2;
  c.paths.out_dir = (dir / "out").string();
  Config with_corr = c;
  with_corr.speculation.corrector = "gated";
  const std::string cfg = (dir / "in" / "config.json").string();
  const std::string cfg_corr = (dir / "in" / "corr.json").string();
  std::ofstream(cfg) << config_to_json(c).dump(2);
  std::ofstream(cfg_corr) << config_to_json(with_corr).dump(2);

  const std::vector<std::vector<std::string>> commands{
      {"collect", "--config", cfg, "--seed", "11"},
      {"train", "--config", cfg, "--seed", "11"},
      {"train", "--config", cfg, "--seed", "11", "--world-model"},
      {"run", "--config", cfg_corr, "--seed", "11"},
      {"replay-latency", "--config", cfg, "--seed", "11"},
      {"eval", "--config", cfg, "--seed", "11", "--out", (dir / "eval").string()},
      {"make-reference-config", "--out", (dir / "ref").string()},
  };
  for (const auto& cmd : commands) {
    std::vector<const char*> argv{"specmpc"};
    for (const auto& a : cmd) argv.push_back(a.c_str());
    std::ostringstream out, err;
    if (run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != kExitOk) {
      throw std::runtime_error(cmd[0] + " failed: " + err.str());
    }
  }
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().parent_path() == dir / "in") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "specmpc_acceptance_cli";
  const auto a = run_all_subcommands(root / "a");
  const auto b = run_all_subcommands(root / "b");
  fs::remove_all(root);
  if (a.size() != b.size()) return {false, "different file sets"};
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) return {false, name + " differs"};
  }
  return {!a.empty(), std::to_string(a.size()) + " output files byte-identical across 7 commands"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence at tau = 0", oracle_equivalence},
      {"schedule arithmetic", schedule_arithmetic},
      {"step conservation", conservation},
      {"latency replay", latency_replay},
      {"CEM vs exhaustive search", brute_force},
      {"call reduction vs return drop (pendulum)", headline_tradeoff},
      {"ablation ordering (pendulum)", ablation_direction},
      {"gradient checks", gradient_checks},
      {"corrector training convergence", training_convergence},
      {"CLI determinism", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
