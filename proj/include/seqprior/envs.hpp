#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <seqprior/autodiff.hpp>
#include <seqprior/errors.hpp>

namespace seqprior {

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  int action_dim = 0;
  int episode_length = 0;  // interaction steps
  int action_repeat = 1;
  double reward_min = 0.0;  // per interaction step
  double reward_max = 0.0;
  double return_min = 0.0;  // per episode
  double return_max = 0.0;
};

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool done = false;
};

/// Episodic environment with actions in [-1, 1]^D and a fixed episode length.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vector& action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  /// Number of out-of-range action components clipped so far.
  virtual std::int64_t clipped_actions() const = 0;
};

/// Shared bookkeeping for the native environments: clipping, step counting, termination.
class BasicEnv : public Env {
 public:
  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) final;
  StepResult step(const Vector& action) final;
  std::int64_t clipped_actions() const override { return clipped_; }
  int steps_taken() const { return t_; }

 protected:
  explicit BasicEnv(EnvSpec spec) : spec_(std::move(spec)) {}
  virtual void reset_state(std::mt19937_64& rng) = 0;
  /// Advances one step with an in-range action and returns the reward.
  virtual double advance(const Vector& action) = 0;
  virtual Vector observe() const = 0;

  EnvSpec spec_;

 private:
  int t_ = 0;
  bool started_ = false;
  std::int64_t clipped_ = 0;
};

/// x'' = a on a line; reward -|x - 1| - 0.01 a^2; starts at rest at x = -1.
class DoubleIntegrator : public BasicEnv {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kGoal = 1.0;

  explicit DoubleIntegrator(int episode_length = 200);
  std::unique_ptr<Env> clone() const override { return std::make_unique<DoubleIntegrator>(*this); }

  double position() const { return x_; }
  double velocity() const { return v_; }
  void set_state(double x, double v) { x_ = x; v_ = v; }

 protected:
  void reset_state(std::mt19937_64& rng) override;
  double advance(const Vector& action) override;
  Vector observe() const override;

 private:
  double x_ = -1.0, v_ = 0.0;
};

/// Torque-limited pendulum, angle measured from upright; observation (cos, sin, rate).
class PendulumSwingup : public BasicEnv {
 public:
  static constexpr double kGravityOverLength = 10.0;
  static constexpr double kTorqueGain = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxRate = 8.0;

  explicit PendulumSwingup(int episode_length = 200);
  std::unique_ptr<Env> clone() const override { return std::make_unique<PendulumSwingup>(*this); }

  double angle() const { return theta_; }
  double rate() const { return rate_; }
  void set_state(double theta, double rate) { theta_ = theta; rate_ = rate; }

 protected:
  void reset_state(std::mt19937_64& rng) override;
  double advance(const Vector& action) override;
  Vector observe() const override;

 private:
  double theta_ = 0.0, rate_ = 0.0;
};

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// Planar navigation through a four-step staircase corridor; the goal disc is absorbing.
class StaircaseNav : public BasicEnv {
 public:
  static constexpr double kSpeed = 0.04;
  static constexpr double kGoalRadius = 0.05;
  static constexpr double kGoalBonus = 100.0;
  static constexpr double kStartJitter = 0.01;

  explicit StaircaseNav(int episode_length = 200);
  std::unique_ptr<Env> clone() const override { return std::make_unique<StaircaseNav>(*this); }

  static const std::vector<Rect>& corridor();
  static Eigen::Vector2d start() { return {0.05, 0.05}; }
  static Eigen::Vector2d goal() { return {0.95, 0.95}; }
  static bool free(double x, double y);

  Eigen::Vector2d position() const { return pos_; }
  bool reached() const { return reached_; }

 protected:
  void reset_state(std::mt19937_64& rng) override;
  double advance(const Vector& action) override;
  Vector observe() const override;

 private:
  Eigen::Vector2d pos_ = start();
  bool reached_ = false;
};

/// Applies each action `k` times to the wrapped env, summing rewards. A final partial
/// repeat is truncated when k does not divide the episode length.
class ActionRepeat : public Env {
 public:
  ActionRepeat(std::unique_ptr<Env> inner, int k);
  ActionRepeat(const ActionRepeat& other);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<ActionRepeat>(*this); }
  std::int64_t clipped_actions() const override { return inner_->clipped_actions(); }

 private:
  std::unique_ptr<Env> inner_;
  int k_;
  EnvSpec spec_;
};

/// Adds N(0, sigma^2) noise to every observation handed to the agent. The wrapped
/// dynamics keep evolving from the clean state.
class ObservationNoise : public Env {
 public:
  ObservationNoise(std::unique_ptr<Env> inner, double sigma, std::uint64_t noise_seed);
  ObservationNoise(const ObservationNoise& other);

  const EnvSpec& spec() const override { return inner_->spec(); }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<ObservationNoise>(*this); }
  std::int64_t clipped_actions() const override { return inner_->clipped_actions(); }

  const Vector& clean_observation() const { return clean_; }
  double sigma() const { return sigma_; }

 private:
  Vector perturb(const Vector& obs);

  std::unique_ptr<Env> inner_;
  double sigma_;
  std::uint64_t noise_seed_;
  std::mt19937_64 rng_;
  Vector clean_;
};

/// Observation noise levels of the robustness sweep.
const std::vector<double>& canonical_noise_grid();

std::vector<std::string> env_names();
/// Builds a registered env ("double-integrator", "pendulum-swingup", "staircase-nav").
std::unique_ptr<Env> make_env(const std::string& name, int action_repeat = 1);

/// Rows of (t, state..., action..., reward).
void write_trajectory_csv(const std::filesystem::path& path, const Matrix& states,
                          const Matrix& actions, const Vector& rewards);

}  // namespace seqprior
