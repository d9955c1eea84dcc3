#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <seqprior/envs.hpp>

using namespace seqprior;

namespace {

Vector act1(double a) { return Vector::Constant(1, a); }

double run_return(Env& env, std::uint64_t seed, const std::function<Vector(int)>& policy, int* steps = nullptr) {
  env.reset(seed);
  double ret = 0.0;
  int t = 0;
  for (;; ++t) {
    auto r = env.step(policy(t));
    ret += r.reward;
    if (r.done) break;
  }
  if (steps) *steps = t + 1;
  return ret;
}

}  // namespace

TEST_CASE("double integrator follows semi-implicit Euler with the stated reward") {
  DoubleIntegrator env;
  const Vector obs = env.reset(0);
  CHECK(obs(0) == -1.0);
  CHECK(obs(1) == 0.0);
  double x = -1.0, v = 0.0;
  for (double a : {1.0, 0.5, -0.3, 0.0}) {
    v += a * 0.1;
    x += v * 0.1;
    const auto r = env.step(act1(a));
    CHECK(r.observation(0) == doctest::Approx(x));
    CHECK(r.observation(1) == doctest::Approx(v));
    CHECK(r.reward == doctest::Approx(-std::abs(x - 1.0) - 0.01 * a * a));
  }
}

TEST_CASE("pendulum dynamics, wrapping and rate clip") {
  PendulumSwingup env;
  env.reset(3);
  env.set_state(0.5, 1.0);
  const auto r = env.step(act1(0.4));
  double rate = 1.0 + (10.0 * std::sin(0.5) + 2.0 * 0.4) * 0.05;
  double theta = 0.5 + rate * 0.05;
  CHECK(r.reward == doctest::Approx(-(0.25 + 0.1 * 1.0 + 0.001 * 0.16)));
  CHECK(env.rate() == doctest::Approx(rate));
  CHECK(env.angle() == doctest::Approx(theta));
  CHECK(r.observation(0) == doctest::Approx(std::cos(theta)));
  CHECK(r.observation(1) == doctest::Approx(std::sin(theta)));

  env.set_state(3.1, 7.99);
  env.step(act1(1.0));
  CHECK(env.rate() <= 8.0);
  CHECK(std::abs(env.angle()) <= std::numbers::pi);
}

TEST_CASE("episodes last 200 interaction steps and refuse more") {
  for (const auto& name : env_names()) {
    auto env = make_env(name);
    int steps = 0;
    run_return(*env, 1, [&](int) { return Vector::Zero(env->spec().action_dim); }, &steps);
    CHECK(steps == 200);
    CHECK_THROWS_AS(env->step(Vector::Zero(env->spec().action_dim)), PreconditionError);
  }
  CHECK_THROWS_AS(make_env("cartpole"), ConfigError);
}

TEST_CASE("stepping before reset or with a wrong action size fails") {
  DoubleIntegrator env;
  CHECK_THROWS_AS(env.step(act1(0.0)), PreconditionError);
  env.reset(0);
  CHECK_THROWS_AS(env.step(Vector::Zero(2)), ConfigError);
}

TEST_CASE("out-of-range actions are clipped and counted") {
  DoubleIntegrator a, b;
  a.reset(0);
  b.reset(0);
  const auto ra = a.step(act1(5.0));
  const auto rb = b.step(act1(1.0));
  CHECK(ra.observation == rb.observation);
  CHECK(a.clipped_actions() == 1);
  CHECK(b.clipped_actions() == 0);
  a.step(act1(std::nan("")));
  CHECK(a.clipped_actions() == 2);
}

TEST_CASE("resets are deterministic in the seed") {
  for (const auto& name : env_names()) {
    auto e1 = make_env(name);
    auto e2 = make_env(name);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vector> actions;
    for (int t = 0; t < 200; ++t) {
      Vector a(e1->spec().action_dim);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng);
      actions.push_back(a);
    }
    const auto pol = [&](int t) { return actions[static_cast<std::size_t>(t)]; };
    CHECK(run_return(*e1, 42, pol) == run_return(*e2, 42, pol));
  }
}

TEST_CASE("returns respect the declared bounds") {
  std::mt19937_64 rng(9);
  for (const auto& name : env_names()) {
    auto env = make_env(name);
    const auto& s = env->spec();
    CHECK(s.return_min < s.return_max);
    for (int ep = 0; ep < 10; ++ep) {
      std::uniform_real_distribution<double> u(-1, 1);
      const double ret = run_return(*env, static_cast<std::uint64_t>(ep), [&](int) {
        Vector a(s.action_dim);
        for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = ep % 2 ? u(rng) : 1.0;
        return a;
      });
      CHECK(ret >= s.return_min);
      CHECK(ret <= s.return_max);
    }
  }
}

TEST_CASE("staircase corridor geometry") {
  CHECK(StaircaseNav::free(StaircaseNav::start().x(), StaircaseNav::start().y()));
  CHECK(StaircaseNav::free(StaircaseNav::goal().x(), StaircaseNav::goal().y()));
  // the straight diagonal is blocked between the steps
  CHECK_FALSE(StaircaseNav::free(0.15, 0.4));
  CHECK_FALSE(StaircaseNav::free(0.4, 0.15));
  // walls stop motion
  StaircaseNav env;
  env.reset(0);
  const Eigen::Vector2d p0 = env.position();
  Vector down(2);
  down << 0.0, -1.0;
  for (int i = 0; i < 5; ++i) env.step(down);
  CHECK(env.position().y() >= StaircaseNav::corridor()[0].y0);
  CHECK(env.position().x() == doctest::Approx(p0.x()));
}

TEST_CASE("staircase goal pays once and then holds the agent") {
  StaircaseNav env;
  env.reset(0);
  // follow the waypoints
  const std::vector<Eigen::Vector2d> wp = {{0.275, 0.05}, {0.275, 0.275}, {0.5, 0.275}, {0.5, 0.5},
                                           {0.725, 0.5},  {0.725, 0.725}, {0.95, 0.725}, {0.95, 0.95}};
  std::size_t k = 0;
  double bonus_steps = 0;
  double ret = 0.0;
  for (int t = 0; t < 200; ++t) {
    while (k + 1 < wp.size() && (env.position() - wp[k]).norm() < 0.03) ++k;
    Eigen::Vector2d d = (wp[k] - env.position()) / StaircaseNav::kSpeed;
    d = d.cwiseMax(-1.0).cwiseMin(1.0);
    const auto r = env.step(Vector(d));
    if (r.reward > 50.0) ++bonus_steps;
    ret += r.reward;
  }
  CHECK(env.reached());
  CHECK(bonus_steps == 1);
  CHECK((env.position() - StaircaseNav::goal()).norm() <= StaircaseNav::kGoalRadius);
  CHECK(ret > 0.0);
}

TEST_CASE("action repeat sums rewards over repeated steps") {
  ActionRepeat rep(std::make_unique<DoubleIntegrator>(10), 3);
  CHECK(rep.spec().episode_length == 4);
  DoubleIntegrator plain(10);
  rep.reset(0);
  plain.reset(0);
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) expect += plain.step(act1(0.5)).reward;
  CHECK(rep.step(act1(0.5)).reward == doctest::Approx(expect));
  rep.step(act1(0.0));
  rep.step(act1(0.0));
  const auto last = rep.step(act1(0.0));  // only one base step left
  CHECK(last.done);
  auto made = make_env("pendulum-swingup", 4);
  CHECK(made->spec().episode_length == 200);
}

TEST_CASE("observation noise perturbs what the agent sees, not the dynamics") {
  ObservationNoise noisy(std::make_unique<PendulumSwingup>(), 0.2, 7);
  PendulumSwingup clean;
  const Vector o1 = noisy.reset(11);
  const Vector o2 = clean.reset(11);
  CHECK((noisy.clean_observation() - o2).norm() == 0.0);
  CHECK((o1 - o2).norm() > 0.0);
  for (int t = 0; t < 20; ++t) {
    const auto a = noisy.step(act1(0.3));
    const auto b = clean.step(act1(0.3));
    CHECK(a.reward == b.reward);
    CHECK((noisy.clean_observation() - b.observation).norm() == 0.0);
  }
  // zero noise is the identity
  ObservationNoise none(std::make_unique<DoubleIntegrator>(), 0.0, 1);
  CHECK(none.reset(0) == DoubleIntegrator().reset(0));
  CHECK_THROWS_AS(ObservationNoise(std::make_unique<DoubleIntegrator>(), -0.1, 1), ConfigError);
  // same episode seed, same noise
  ObservationNoise again(std::make_unique<PendulumSwingup>(), 0.2, 7);
  CHECK(again.reset(11) == o1);
}

TEST_CASE("canonical noise grid is increasing") {
  const auto& g = canonical_noise_grid();
  REQUIRE(g.size() >= 2);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}
