#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "specmpc/rng.hpp"
#include "specmpc/tensor.hpp"

namespace specmpc {

using Observation = Vec;
using Action = Vec;

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  int episode_length = 1;
  double dt = 0.0;
};

// Stateless transition and reward functions of an environment. The oracle
// world model applies these directly to latents, so they must be pure.
class Dynamics {
 public:
  virtual ~Dynamics() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Observation transition(const Observation& s, const Action& a) const = 0;
  // Reward for taking `a` in `s`, scored on the successor state `next`.
  virtual double reward(const Observation& s, const Action& a, const Observation& next) const = 0;
  virtual Observation initial_state(Rng& rng) const = 0;

  double reward(const Observation& s, const Action& a) const {
    return reward(s, a, transition(s, a));
  }
};

// Double integrator in `dim` dimensions. State (x, v), explicit Euler:
//   x' = x + v dt,  v' = v + a dt,  reward = -(|x'|^2 + 0.1 |a|^2).
class PointMass final : public Dynamics {
 public:
  explicit PointMass(int dim = 2, double dt = 0.1);

  const EnvSpec& spec() const override { return spec_; }
  Observation transition(const Observation& s, const Action& a) const override;
  double reward(const Observation& s, const Action& a, const Observation& next) const override;
  using Dynamics::reward;
  // Position uniform in [-1, 1]^dim, velocity zero.
  Observation initial_state(Rng& rng) const override;

  int dim() const { return dim_; }

 private:
  int dim_;
  EnvSpec spec_;
};

// Torque-limited pendulum, theta = 0 upright, theta = +-pi hanging.
// Observation (cos theta, sin theta, theta_dot); applied torque is
// u = max_torque * a.
//   theta_ddot = (g / l) sin theta + u / (m l^2)
//   theta' = wrap(theta + theta_dot dt),  theta_dot' = theta_dot + theta_ddot dt
//   reward = -(theta'^2 + 0.1 theta_dot'^2 + 0.01 u^2)
class Pendulum final : public Dynamics {
 public:
  struct Params {
    double g = 10.0;
    double length = 1.0;
    double mass = 1.0;
    double dt = 0.05;
    double max_torque = 15.0;
    // Initial angle is pi + U(-init_angle_spread, init_angle_spread), wrapped.
    double init_angle_spread = 1.0;
    double init_velocity_spread = 0.5;
  };

  Pendulum() : Pendulum(Params{}) {}
  explicit Pendulum(Params params);

  const EnvSpec& spec() const override { return spec_; }
  Observation transition(const Observation& s, const Action& a) const override;
  double reward(const Observation& s, const Action& a, const Observation& next) const override;
  using Dynamics::reward;
  Observation initial_state(Rng& rng) const override;

  const Params& params() const { return params_; }

  static Observation observe(double theta, double theta_dot);
  static double angle(const Observation& s);
  // Conserved quantity of the torque-free dynamics, per unit m l^2.
  double energy(const Observation& s) const;

 private:
  Params params_;
  EnvSpec spec_;
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

bool within_action_bounds(const Action& a);

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

// Episode state machine over a Dynamics. Single-threaded per instance.
class Environment {
 public:
  Environment(std::shared_ptr<const Dynamics> dynamics, int episode_length);

  Observation reset(std::uint64_t seed);
  // Throws std::out_of_range when `a` leaves [-1, 1] and std::logic_error
  // when the episode is already done.
  StepResult step(const Action& a);

  const EnvSpec& spec() const { return spec_; }
  const Dynamics& dynamics() const { return *dynamics_; }
  std::shared_ptr<const Dynamics> dynamics_ptr() const { return dynamics_; }
  const Observation& observation() const { return state_; }
  int t() const { return t_; }
  bool done() const { return t_ >= spec_.episode_length; }

  // Test hook: place the system in an arbitrary state.
  void set_state(Observation s);

 private:
  std::shared_ptr<const Dynamics> dynamics_;
  EnvSpec spec_;
  Observation state_;
  int t_ = 0;
};

// "point_mass" or "pendulum"; anything else throws std::invalid_argument.
std::shared_ptr<const Dynamics> make_dynamics(const std::string& name);

}  // namespace specmpc
