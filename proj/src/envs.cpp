#include <seqprior/envs.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace seqprior {

Vector BasicEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  reset_state(rng);
  t_ = 0;
  started_ = true;
  return observe();
}

StepResult BasicEnv::step(const Vector& action) {
  if (!started_) throw PreconditionError(spec_.name + ": step before reset");
  if (t_ >= spec_.episode_length) throw PreconditionError(spec_.name + ": step after episode end");
  if (action.size() != spec_.action_dim)
    throw ConfigError(spec_.name + ": action has " + std::to_string(action.size()) +
                      " components, expected " + std::to_string(spec_.action_dim));
  Vector a = action;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!(a(i) >= -1.0 && a(i) <= 1.0)) {
      ++clipped_;
      a(i) = std::isnan(a(i)) ? 0.0 : std::clamp(a(i), -1.0, 1.0);
    }
  }
  const double r = advance(a);
  ++t_;
  return {observe(), r, t_ >= spec_.episode_length};
}

// ---------------------------------------------------------------------------

DoubleIntegrator::DoubleIntegrator(int episode_length)
    : BasicEnv(EnvSpec{"double-integrator", 2, 1, episode_length, 1, 0.0, 0.0}) {
  // |x - 1| is largest after full thrust for the whole episode
  const double horizon = kDt * episode_length;
  spec_.reward_min = -(2.0 + 0.5 * horizon * (horizon + kDt)) - 0.01;
  spec_.return_min = spec_.reward_min * episode_length;
}

void DoubleIntegrator::reset_state(std::mt19937_64&) {
  x_ = -1.0;
  v_ = 0.0;
}

double DoubleIntegrator::advance(const Vector& a) {
  v_ += a(0) * kDt;
  x_ += v_ * kDt;
  return -std::abs(x_ - kGoal) - 0.01 * a(0) * a(0);
}

Vector DoubleIntegrator::observe() const { return Eigen::Vector2d(x_, v_); }

// ---------------------------------------------------------------------------

namespace {
double wrap_angle(double theta) {
  return std::remainder(theta, 2.0 * std::numbers::pi);
}
}  // namespace

PendulumSwingup::PendulumSwingup(int episode_length)
    : BasicEnv(EnvSpec{"pendulum-swingup", 3, 1, episode_length, 1,
                       -(std::numbers::pi * std::numbers::pi + 0.1 * kMaxRate * kMaxRate + 0.001), 0.0}) {
  spec_.return_min = spec_.reward_min * episode_length;
}

void PendulumSwingup::reset_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  theta_ = angle(rng);
  rate_ = 0.0;
}

double PendulumSwingup::advance(const Vector& a) {
  const double u = a(0);
  // cost of the state the action is applied in
  const double th = wrap_angle(theta_);
  const double cost = th * th + 0.1 * rate_ * rate_ + 0.001 * u * u;
  const double accel = kGravityOverLength * std::sin(theta_) + kTorqueGain * u;
  rate_ = std::clamp(rate_ + accel * kDt, -kMaxRate, kMaxRate);
  theta_ = wrap_angle(theta_ + rate_ * kDt);
  return -cost;
}

Vector PendulumSwingup::observe() const { return Eigen::Vector3d(std::cos(theta_), std::sin(theta_), rate_); }

// ---------------------------------------------------------------------------

const std::vector<Rect>& StaircaseNav::corridor() {
  static const std::vector<Rect> rects = [] {
    const double h = 0.05;
    const std::vector<Eigen::Vector2d> waypoints = {
        {0.05, 0.05}, {0.275, 0.05}, {0.275, 0.275}, {0.5, 0.275},   {0.5, 0.5},
        {0.725, 0.5}, {0.725, 0.725}, {0.95, 0.725}, {0.95, 0.95}};
    std::vector<Rect> out;
    for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
      const auto& p = waypoints[i];
      const auto& q = waypoints[i + 1];
      out.push_back({std::min(p.x(), q.x()) - h, std::min(p.y(), q.y()) - h,
                     std::max(p.x(), q.x()) + h, std::max(p.y(), q.y()) + h});
    }
    return out;
  }();
  return rects;
}

bool StaircaseNav::free(double x, double y) {
  for (const auto& r : corridor())
    if (r.contains(x, y)) return true;
  return false;
}

StaircaseNav::StaircaseNav(int episode_length)
    : BasicEnv(EnvSpec{"staircase-nav", 2, 2, episode_length, 1, -std::sqrt(2.0), kGoalBonus}) {
  // the bonus is paid once
  spec_.return_min = -std::sqrt(2.0) * episode_length;
  spec_.return_max = kGoalBonus;
}

void StaircaseNav::reset_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-kStartJitter, kStartJitter);
  pos_ = start();
  pos_.x() += jitter(rng);
  pos_.y() += jitter(rng);
  reached_ = false;
}

double StaircaseNav::advance(const Vector& a) {
  double bonus = 0.0;
  if (!reached_) {
    const Eigen::Vector2d next = pos_ + kSpeed * Eigen::Vector2d(a(0), a(1));
    if (free(next.x(), next.y())) pos_ = next;
    if ((pos_ - goal()).norm() <= kGoalRadius) {
      reached_ = true;
      bonus = kGoalBonus;
    }
  }
  return -(pos_ - goal()).norm() + bonus;
}

Vector StaircaseNav::observe() const { return pos_; }

// ---------------------------------------------------------------------------

ActionRepeat::ActionRepeat(std::unique_ptr<Env> inner, int k) : inner_(std::move(inner)), k_(k) {
  if (k_ < 1) throw ConfigError("action repeat must be >= 1");
  spec_ = inner_->spec();
  spec_.action_repeat = inner_->spec().action_repeat * k_;
  spec_.episode_length = (inner_->spec().episode_length + k_ - 1) / k_;
  spec_.reward_min = inner_->spec().reward_min * k_;
  spec_.reward_max = inner_->spec().reward_max * k_;
  if (spec_.reward_min > 0) spec_.reward_min = inner_->spec().reward_min;
  if (spec_.reward_max < 0) spec_.reward_max = inner_->spec().reward_max;
}

ActionRepeat::ActionRepeat(const ActionRepeat& other)
    : inner_(other.inner_->clone()), k_(other.k_), spec_(other.spec_) {}

Vector ActionRepeat::reset(std::uint64_t seed) { return inner_->reset(seed); }

StepResult ActionRepeat::step(const Vector& action) {
  StepResult out;
  for (int i = 0; i < k_; ++i) {
    auto r = inner_->step(action);
    out.reward += r.reward;
    out.observation = std::move(r.observation);
    out.done = r.done;
    if (r.done) break;
  }
  return out;
}

// ---------------------------------------------------------------------------

ObservationNoise::ObservationNoise(std::unique_ptr<Env> inner, double sigma, std::uint64_t noise_seed)
    : inner_(std::move(inner)), sigma_(sigma), noise_seed_(noise_seed), rng_(noise_seed) {
  if (!(sigma >= 0.0)) throw ConfigError("observation noise sigma must be >= 0");
}

ObservationNoise::ObservationNoise(const ObservationNoise& other)
    : inner_(other.inner_->clone()),
      sigma_(other.sigma_),
      noise_seed_(other.noise_seed_),
      rng_(other.rng_),
      clean_(other.clean_) {}

Vector ObservationNoise::perturb(const Vector& obs) {
  if (sigma_ == 0.0) return obs;
  std::normal_distribution<double> normal(0.0, sigma_);
  Vector noisy = obs;
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy(i) += normal(rng_);
  return noisy;
}

Vector ObservationNoise::reset(std::uint64_t seed) {
  // the noise stream is a function of the episode seed so rollouts stay reproducible
  rng_.seed(noise_seed_ ^ (seed * 0x9E3779B97F4A7C15ull));
  clean_ = inner_->reset(seed);
  return perturb(clean_);
}

StepResult ObservationNoise::step(const Vector& action) {
  auto r = inner_->step(action);
  clean_ = r.observation;
  r.observation = perturb(clean_);
  return r;
}

// ---------------------------------------------------------------------------

const std::vector<double>& canonical_noise_grid() {
  static const std::vector<double> grid = {0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5};
  return grid;
}

std::vector<std::string> env_names() { return {"double-integrator", "pendulum-swingup", "staircase-nav"}; }

std::unique_ptr<Env> make_env(const std::string& name, int action_repeat) {
  if (action_repeat < 1) throw ConfigError("action repeat must be >= 1");
  // the base episode is longer by the repeat factor so interaction steps stay at 200
  const int base_len = 200 * action_repeat;
  std::unique_ptr<Env> env;
  if (name == "double-integrator")
    env = std::make_unique<DoubleIntegrator>(base_len);
  else if (name == "pendulum-swingup")
    env = std::make_unique<PendulumSwingup>(base_len);
  else if (name == "staircase-nav")
    env = std::make_unique<StaircaseNav>(base_len);
  else
    throw ConfigError("unknown env '" + name + "'");
  if (action_repeat == 1) return env;
  return std::make_unique<ActionRepeat>(std::move(env), action_repeat);
}

void write_trajectory_csv(const std::filesystem::path& path, const Matrix& states,
                          const Matrix& actions, const Vector& rewards) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "t";
  for (Eigen::Index i = 0; i < states.cols(); ++i) os << ",s" << i;
  for (Eigen::Index i = 0; i < actions.cols(); ++i) os << ",a" << i;
  os << ",reward\n";
  os.precision(17);
  for (Eigen::Index t = 0; t < actions.rows(); ++t) {
    os << t;
    for (Eigen::Index i = 0; i < states.cols(); ++i) os << ',' << states(t, i);
    for (Eigen::Index i = 0; i < actions.cols(); ++i) os << ',' << actions(t, i);
    os << ',' << rewards(t) << '\n';
  }
}

}  // namespace seqprior
