#include "specmpc/env.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace specmpc {

double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(theta, 2.0 * pi);  // [-pi, pi]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

bool within_action_bounds(const Action& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!(a(i) >= -1.0 && a(i) <= 1.0)) return false;
  }
  return true;
}

PointMass::PointMass(int dim, double dt) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("PointMass: dim must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("PointMass: dt must be positive");
  spec_ = EnvSpec{"point_mass", 2 * dim, dim, 1, dt};
}

Observation PointMass::transition(const Observation& s, const Action& a) const {
  require_dim(s, spec_.state_dim, "PointMass state");
  require_dim(a, spec_.action_dim, "PointMass action");
  Observation next(s.size());
  next.head(dim_) = s.head(dim_) + s.tail(dim_) * spec_.dt;
  next.tail(dim_) = s.tail(dim_) + a * spec_.dt;
  return next;
}

double PointMass::reward(const Observation&, const Action& a, const Observation& next) const {
  return -(next.head(dim_).squaredNorm() + 0.1 * a.squaredNorm());
}

Observation PointMass::initial_state(Rng& rng) const {
  Observation s = Observation::Zero(spec_.state_dim);
  for (int i = 0; i < dim_; ++i) s(i) = 2.0 * rng.uniform() - 1.0;
  return s;
}

Pendulum::Pendulum(Params params) : params_(params) {
  if (!(params.dt > 0.0) || !(params.length > 0.0) || !(params.mass > 0.0)) {
    throw std::invalid_argument("Pendulum: dt, length and mass must be positive");
  }
  spec_ = EnvSpec{"pendulum", 3, 1, 1, params.dt};
}

Observation Pendulum::observe(double theta, double theta_dot) {
  Observation s(3);
  s << std::cos(theta), std::sin(theta), theta_dot;
  return s;
}

double Pendulum::angle(const Observation& s) { return wrap_angle(std::atan2(s(1), s(0))); }

Observation Pendulum::transition(const Observation& s, const Action& a) const {
  require_dim(s, 3, "Pendulum state");
  require_dim(a, 1, "Pendulum action");
  const double theta = angle(s);
  const double u = params_.max_torque * a(0);
  const double accel = params_.g / params_.length * std::sin(theta) +
                       u / (params_.mass * params_.length * params_.length);
  const double next_theta = wrap_angle(theta + s(2) * params_.dt);
  return observe(next_theta, s(2) + accel * params_.dt);
}

double Pendulum::reward(const Observation&, const Action& a, const Observation& next) const {
  const double theta = angle(next);
  const double u = params_.max_torque * a(0);
  return -(theta * theta + 0.1 * next(2) * next(2) + 0.01 * u * u);
}

Observation Pendulum::initial_state(Rng& rng) const {
  const double theta =
      std::numbers::pi + (2.0 * rng.uniform() - 1.0) * params_.init_angle_spread;
  const double theta_dot = (2.0 * rng.uniform() - 1.0) * params_.init_velocity_spread;
  return observe(wrap_angle(theta), theta_dot);
}

double Pendulum::energy(const Observation& s) const {
  return 0.5 * s(2) * s(2) + params_.g / params_.length * std::cos(angle(s));
}

Environment::Environment(std::shared_ptr<const Dynamics> dynamics, int episode_length)
    : dynamics_(std::move(dynamics)) {
  if (!dynamics_) throw std::invalid_argument("Environment: null dynamics");
  if (episode_length < 1) throw std::invalid_argument("Environment: episode_length must be >= 1");
  spec_ = dynamics_->spec();
  spec_.episode_length = episode_length;
  state_ = Observation::Zero(spec_.state_dim);
}

Observation Environment::reset(std::uint64_t seed) {
  Rng rng = Rng(seed).fork("env.reset");
  state_ = dynamics_->initial_state(rng);
  t_ = 0;
  return state_;
}

StepResult Environment::step(const Action& a) {
  if (done()) throw std::logic_error("Environment::step called after episode end");
  require_dim(a, spec_.action_dim, "Environment action");
  if (!within_action_bounds(a)) {
    throw std::out_of_range("Environment::step: action outside [-1, 1]; clip before stepping");
  }
  Observation next = dynamics_->transition(state_, a);
  const double r = dynamics_->reward(state_, a, next);
  state_ = std::move(next);
  ++t_;
  return StepResult{state_, r, done()};
}

void Environment::set_state(Observation s) {
  require_dim(s, spec_.state_dim, "Environment::set_state");
  state_ = std::move(s);
}

std::shared_ptr<const Dynamics> make_dynamics(const std::string& name) {
  if (name == "point_mass") return std::make_shared<PointMass>();
  if (name == "pendulum") return std::make_shared<Pendulum>();
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace specmpc
