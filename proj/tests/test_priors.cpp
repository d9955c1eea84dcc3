#include <doctest.h>

#include <cmath>
#include <random>

#include <seqprior/priors.hpp>

#include "gradcheck.hpp"

using namespace seqprior;

TEST_CASE("uniform prior density is -D log 2 everywhere") {
  Vector a(3);
  a << 0.9, -0.2, 0.0;
  CHECK(uniform_logprob(a) == doctest::Approx(-3.0 * std::log(2.0)));
  CHECK(uniform_logprob(Vector::Zero(3)) == uniform_logprob(a));
}

TEST_CASE("prior kind names round trip") {
  for (auto k : {PriorKind::kUniform, PriorKind::kGaussian, PriorKind::kTransformer, PriorKind::kLz})
    CHECK(parse_prior_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_prior_kind("laplace"), ConfigError);
}

TEST_CASE("gaussian prior density against a direct formula") {
  GaussianPrior g(2);
  g.store[g.mean].value << 0.3, -0.1;
  g.store[g.log_std].value << -0.5, 0.2;
  Vector a(2);
  a << 0.4, -0.8;
  double expect = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double u = std::atanh(a(d));
    const double mu = g.store[g.mean].value(0, d);
    const double ls = g.store[g.log_std].value(0, d);
    const double z = (u - mu) / std::exp(ls);
    expect += -0.5 * z * z - ls - 0.5 * std::log(2.0 * M_PI) - std::log(1.0 - a(d) * a(d));
  }
  CHECK(gaussian_prior_logprob(g, a) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("gaussian prior likelihood gradients") {
  GaussianPrior g(2);
  g.store[g.mean].value << 0.2, -0.4;
  g.store[g.log_std].value << 0.1, -0.3;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.8);
  Matrix u(6, 2);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = n(rng);
  std::vector<Param*> ps;
  for (auto& p : g.store) ps.push_back(&p);
  const auto r = seqprior::testing::gradient_check(ps, [&](ad::Tape& t) {
    return ad::scale(ad::mean(gaussian_prior_logprob(t, g, t.constant(u), true)), -1.0);
  });
  CHECK(r.rel_error < 1e-6);
}

TEST_CASE("gaussian prior samples stay in range and follow the mean") {
  GaussianPrior g(1);
  g.store[g.mean].value << 1.0;
  g.store[g.log_std].value << std::log(0.1);
  std::mt19937_64 rng(4);
  double s = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Vector a = gaussian_prior_sample(g, rng);
    CHECK(std::abs(a(0)) <= 1.0);
    s += std::atanh(std::clamp(a(0), -0.999999, 0.999999));
  }
  CHECK(s / 2000.0 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("transformer scalar and batched scoring agree") {
  TransformerConfig c;
  c.width = 8;
  c.heads = 2;
  c.max_context = 6;
  std::mt19937_64 rng(5);
  Transformer tf(c, rng);
  Matrix ctx(3, 1);
  ctx << 0.2, 0.2, -0.4;
  Vector a(1);
  a << 0.35;
  const double single = transformer_logprob(tf, ctx, a);
  ad::Tape tape;
  Matrix u(2, 1);
  u << std::atanh(0.35), std::atanh(-0.1);
  Matrix ctx2(1, 1);
  ctx2 << 0.9;
  const auto batched = transformer_logprob(tape, tf, {ctx, ctx2}, tape.constant(u));
  CHECK(batched.value()(0, 0) == doctest::Approx(single).epsilon(1e-10));
  const Vector draw = transformer_sample(tf, ctx, rng);
  CHECK(std::abs(draw(0)) <= 1.0);
}

TEST_CASE("lz prior grid enumerates K^D points, first dimension fastest") {
  const Matrix g = lz_prior_grid(2, 3);
  REQUIRE(g.rows() == 9);
  CHECK(g(0, 0) == -1.0);
  CHECK(g(1, 0) == 0.0);
  CHECK(g(2, 0) == 1.0);
  CHECK(g(0, 1) == -1.0);
  CHECK(g(3, 1) == 0.0);
}

TEST_CASE("lz prior probabilities are a softmax of delta") {
  Matrix ctx(10, 1);
  for (int t = 0; t < 10; ++t) ctx(t, 0) = t % 2 == 0 ? 1.0 : -1.0;
  LzPriorOptions o;
  o.grid = 5;
  const Vector p = lz_prior_probabilities(ctx, o);
  CHECK(p.sum() == doctest::Approx(1.0));
  const Matrix g = lz_prior_grid(1, 5);
  // oracle: recompute each delta directly
  Vector logits(5);
  for (int i = 0; i < 5; ++i) logits(i) = delta(ctx, g.row(i).transpose());
  const Vector expect = (logits.array() - logits.maxCoeff()).exp();
  for (int i = 0; i < 5; ++i) CHECK(p(i) == doctest::Approx(expect(i) / expect.sum()));
  // continuing the alternation (next is +1) is the most likely candidate
  Eigen::Index best;
  p.maxCoeff(&best);
  CHECK(g(best, 0) == 1.0);

  o.temperature = 0.0;
  const Vector hard = lz_prior_probabilities(ctx, o);
  CHECK(hard(best) > 0.0);
  CHECK(hard.sum() == doctest::Approx(1.0));
  for (int i = 0; i < 5; ++i)
    if (logits(i) < logits.maxCoeff()) CHECK(hard(i) == 0.0);
}

TEST_CASE("lz prior guards") {
  LzPriorOptions o;
  CHECK_THROWS_AS(lz_prior_probabilities(Matrix(0, 1), o), PreconditionError);
  o.grid = 200;
  o.max_candidates = 1000;
  CHECK_THROWS_AS(lz_prior_probabilities(Matrix::Zero(3, 2), o), ConfigError);
  o.grid = 3;
  o.temperature = -1.0;
  CHECK_THROWS_AS(lz_prior_probabilities(Matrix::Zero(3, 1), o), ConfigError);
}
