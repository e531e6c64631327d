#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "specmpc/env.hpp"
#include "specmpc/world_model.hpp"

using namespace specmpc;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec v4(double a, double b, double c, double d) {
  Vec v(4);
  v << a, b, c, d;
  return v;
}

}  // namespace

TEST_CASE("point-mass reset is deterministic and spec-shaped") {
  Environment env(std::make_shared<PointMass>(), 50);
  const Observation a = env.reset(0);
  const Observation b = env.reset(0);
  CHECK(a == b);
  CHECK(a.size() == 4);
  for (int seed = 0; seed < 50; ++seed) {
    const Observation s = env.reset(static_cast<std::uint64_t>(seed));
    CHECK(std::abs(s(0)) <= 1.0);
    CHECK(std::abs(s(1)) <= 1.0);
    CHECK(s(2) == 0.0);
    CHECK(s(3) == 0.0);
  }
}

TEST_CASE("pendulum seeds give different initial states") {
  Environment env(make_dynamics("pendulum"), 10);
  CHECK(env.reset(0) != env.reset(1));
}

TEST_CASE("point-mass step arithmetic") {
  PointMass pm;
  const Observation origin = Vec::Zero(4);
  CHECK(pm.transition(origin, Vec::Zero(2)) == origin);
  CHECK(pm.reward(origin, Vec::Zero(2)) == 0.0);

  const Observation s = v4(1, 0, 0, 0);
  const Observation next = pm.transition(s, Vec::Zero(2));
  CHECK(next == s);
  CHECK(pm.reward(s, Vec::Zero(2)) == doctest::Approx(-1.0));

  const Observation moving = v4(0, 0, 1, -2);
  const Observation n2 = pm.transition(moving, v2(1, 0));
  CHECK(n2(0) == doctest::Approx(0.1));
  CHECK(n2(1) == doctest::Approx(-0.2));
  CHECK(n2(2) == doctest::Approx(1.1));
  CHECK(n2(3) == doctest::Approx(-2.0));
}

TEST_CASE("environment rejects out-of-bounds actions and stepping after done") {
  Environment env(std::make_shared<PointMass>(), 2);
  env.reset(3);
  CHECK_THROWS_AS(env.step(v2(1.5, 0)), std::out_of_range);
  env.step(v2(1, -1));
  const StepResult last = env.step(v2(0, 0));
  CHECK(last.done);
  CHECK_THROWS_AS(env.step(v2(0, 0)), std::logic_error);
}

TEST_CASE("pendulum hanging at rest stays put") {
  Pendulum p;
  Observation s = Pendulum::observe(std::numbers::pi, 0.0);
  for (int i = 0; i < 200; ++i) s = p.transition(s, Vec::Zero(1));
  CHECK(std::abs(std::abs(Pendulum::angle(s)) - std::numbers::pi) < 1e-9);
  CHECK(std::abs(s(2)) < 1e-9);
}

TEST_CASE("pendulum reward is non-positive and zero only upright at rest") {
  Pendulum p;
  const Observation up = Pendulum::observe(0.0, 0.0);
  CHECK(p.reward(up, Vec::Zero(1)) == doctest::Approx(0.0));
  Rng r(9);
  for (int i = 0; i < 200; ++i) {
    const Observation s = p.initial_state(r);
    Vec a(1);
    a << 2.0 * r.uniform() - 1.0;
    CHECK(p.reward(s, a) <= 0.0);
  }
}

TEST_CASE("pendulum energy drift with zero torque is bounded by the Euler error") {
  Pendulum p;
  Observation s = Pendulum::observe(2.0, 0.0);
  const double e0 = p.energy(s);
  double total = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Observation n = p.transition(s, Vec::Zero(1));
    const double g = p.params().g, dt = p.params().dt, w = s(2);
    const double bound = 0.5 * dt * dt * (g * g + g * w * w) + 1e-3;
    CHECK(std::abs(p.energy(n) - p.energy(s)) < bound);
    total += bound;
    s = n;
  }
  CHECK(std::abs(p.energy(s) - e0) < total);
}

TEST_CASE("angle wrapping lands in (-pi, pi]") {
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("identical seeds and actions give bitwise identical rollouts") {
  auto run = [] {
    Environment env(make_dynamics("pendulum"), 30);
    env.reset(5);
    Rng r(1);
    std::vector<Observation> out;
    while (!env.done()) {
      Vec a(1);
      a << 2.0 * r.uniform() - 1.0;
      out.push_back(env.step(a).observation);
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("unknown environment names are rejected") {
  CHECK_THROWS_AS(make_dynamics("cartpole"), std::invalid_argument);
}

TEST_CASE("oracle encode is the identity and checks dimensions") {
  PerturbedOracle m(std::make_shared<PointMass>(1));
  CHECK(m.encode(v2(0.3, -1.2)) == v2(0.3, -1.2));
  CHECK_THROWS_AS(m.encode(Vec::Zero(3)), ShapeError);
  CHECK_THROWS_AS(m.latent_step(Vec::Zero(3), Vec::Zero(1)), ShapeError);
}

TEST_CASE("zero-error oracle reproduces the environment exactly") {
  auto dyn = make_dynamics("pendulum");
  PerturbedOracle m(dyn);
  Environment env(dyn, 40);
  LatentState z = m.encode(env.reset(2));
  Rng r(4), noise(8);
  while (!env.done()) {
    Vec a(1);
    a << 2.0 * r.uniform() - 1.0;
    const double predicted = m.predict_reward(z, a);
    z = m.latent_step(z, a, &noise);
    const StepResult res = env.step(a);
    CHECK(z == res.observation);
    CHECK(predicted == res.reward);
  }
}

TEST_CASE("point-mass oracle reward values") {
  PerturbedOracle m(std::make_shared<PointMass>());
  CHECK(m.predict_reward(Vec::Zero(4), Vec::Zero(2)) == 0.0);
  CHECK(m.predict_reward(v4(1, 0, 0, 0), Vec::Zero(2)) == doctest::Approx(-1.0));
}

TEST_CASE("oracle bias accumulates deterministically with depth") {
  auto dyn = std::make_shared<PointMass>();
  Vec bias = Vec::Zero(4);
  bias(0) = 0.01;
  PerturbedOracle biased(dyn, bias, 0.0);
  PerturbedOracle exact(dyn);
  LatentState zb = v4(0.2, -0.3, 0.1, 0.0), ze = zb;
  double prev = 0.0;
  for (int k = 0; k < 3; ++k) {
    Vec a = v2(0.5, -0.5);
    zb = biased.latent_step(zb, a);
    ze = exact.latent_step(ze, a);
    const double err = (zb - ze).norm();
    CHECK(err > prev);
    CHECK(err == doctest::Approx(0.01 * (k + 1)));
    prev = err;
  }
}

TEST_CASE("oracle noise comes only from the supplied stream") {
  auto dyn = std::make_shared<PointMass>();
  PerturbedOracle m(dyn, Vec::Zero(4), 0.1);
  const LatentState z = v4(0.2, -0.3, 0.1, 0.0);
  const Vec a = v2(0.1, 0.2);
  CHECK(m.latent_step(z, a) == dyn->transition(z, a));
  Rng n1(3), n2(3);
  CHECK(m.latent_step(z, a, &n1) == m.latent_step(z, a, &n2));
  CHECK(m.latent_step(z, a, &n1) != dyn->transition(z, a));
}

TEST_CASE("raising the noise knob does not lower mean mismatch") {
  auto dyn = make_dynamics("pendulum");
  Rng r(12);
  std::vector<std::pair<Observation, Action>> probes;
  for (int i = 0; i < 300; ++i) {
    Vec a(1);
    a << 2.0 * r.uniform() - 1.0;
    probes.emplace_back(dyn->initial_state(r), a);
  }
  double prev = -1.0;
  for (double sigma : {0.0, 0.01, 0.05, 0.2}) {
    PerturbedOracle m(dyn, Vec::Zero(3), sigma);
    Rng noise(77);
    double total = 0.0;
    for (const auto& [s, a] : probes) total += (m.latent_step(s, a, &noise) - dyn->transition(s, a)).norm();
    CHECK(total >= prev);
    prev = total;
  }
}

TEST_CASE("affine encoder starts as the identity") {
  Rng r(1);
  auto m = LearnedWorldModel::create(2, 1, {"affine", "linear", "linear", 8}, r);
  CHECK((m.encode(v2(0.3, -1.2)) - v2(0.3, -1.2)).norm() < 1e-15);
}

TEST_CASE("linear model fits linear point-mass data to machine precision") {
  auto dyn = std::make_shared<PointMass>(1);
  Rng r(21);
  const auto data = sample_transitions(*dyn, 2000, 20, r);
  auto init = LearnedWorldModel::create(2, 1, {"identity", "linear", "quadratic", 8}, r);
  WorldModelTrainConfig cfg;
  cfg.epochs = 400;
  cfg.lr = 2e-2;
  cfg.batch_size = 100;
  cfg.seed = 4;
  const auto res = train_world_model(data, init, cfg);
  const WorldModelLoss l = world_model_loss(res.model, data);
  CHECK(l.total() < 1e-8);
  // Held-out regression check.
  Rng r2(99);
  const auto test = sample_transitions(*dyn, 500, 20, r2);
  const WorldModelLoss lt = world_model_loss(res.model, test);
  CHECK(lt.dynamics < 1e-4);
  CHECK(lt.reward < 1e-4);
}

TEST_CASE("zero epochs leave the parameters unchanged") {
  auto dyn = std::make_shared<PointMass>(1);
  Rng r(2);
  const auto data = sample_transitions(*dyn, 50, 10, r);
  auto init = LearnedWorldModel::create(2, 1, {"identity", "mlp", "mlp", 8}, r);
  WorldModelTrainConfig cfg;
  cfg.epochs = 0;
  const auto res = train_world_model(data, init, cfg);
  for (int i = 0; i < init.params().size(); ++i) CHECK(res.model.params()[i].value == init.params()[i].value);
  CHECK(res.history.empty());
  CHECK_THROWS(train_world_model({}, init, cfg));
}

TEST_CASE("mlp world model on pendulum data improves every epoch on average") {
  auto dyn = make_dynamics("pendulum");
  Rng r(6);
  const auto data = sample_transitions(*dyn, 1024, 50, r);
  auto init = LearnedWorldModel::create(3, 1, {"identity", "mlp", "mlp", 16}, r);
  WorldModelTrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 3e-3;
  cfg.batch_size = 64;
  const auto res = train_world_model(data, init, cfg);
  REQUIRE(res.history.size() == 30);
  for (std::size_t e = 1; e < res.history.size(); ++e) {
    CHECK(res.history[e].total() <= res.history[e - 1].total());
  }
}

TEST_CASE("learned world model passes the gradient check") {
  Rng r(3);
  auto m = LearnedWorldModel::create(3, 1, {"affine", "mlp", "quadratic", 6}, r);
  for (auto& p : m.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) += 0.1 * r.normal();
  }
  Mat s(5, 3), a(5, 1), sn(5, 3), rew(5, 1);
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = r.normal();
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = r.uniform();
  for (Eigen::Index i = 0; i < sn.size(); ++i) sn(i) = r.normal();
  for (Eigen::Index i = 0; i < rew.size(); ++i) rew(i) = r.normal();
  auto loss = [&](Tape& t) {
    const Var z = m.encode(t, t.constant(s));
    const Var zn = m.latent_step(t, z, t.constant(a));
    const Var rh = m.predict_reward(t, z, t.constant(a));
    return ad::add(ad::mse(zn, m.encode(t, t.constant(sn))), ad::mse(rh, t.constant(rew)));
  };
  CHECK(grad_check(loss, m.params(), 1e-6) < 1e-3);
}

TEST_CASE("learned world model checkpoints round-trip") {
  Rng r(8);
  auto m = LearnedWorldModel::create(4, 2, {"affine", "mlp", "mlp", 8}, r);
  const auto back = LearnedWorldModel::from_json(m.to_json());
  const Vec z = v4(0.1, 0.2, -0.3, 0.4), a = v2(0.5, -0.5);
  CHECK(back.latent_step(z, a) == m.latent_step(z, a));
  CHECK(back.predict_reward(z, a) == m.predict_reward(z, a));
}

TEST_CASE("transition CSV round-trips") {
  auto dyn = std::make_shared<PointMass>();
  Rng r(1);
  const auto data = sample_transitions(*dyn, 25, 10, r);
  const std::string path = (std::filesystem::temp_directory_path() / "specmpc_transitions.csv").string();
  write_transitions_csv(path, data);
  const auto back = read_transitions_csv(path, 4, 2);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].s == data[i].s);
    CHECK(back[i].a == data[i].a);
    CHECK(back[i].s_next == data[i].s_next);
    CHECK(back[i].r == data[i].r);
  }
  std::filesystem::remove(path);
}
