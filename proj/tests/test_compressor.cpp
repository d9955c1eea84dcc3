#include <doctest.h>

#include <random>

#include <seqprior/compressor.hpp>

using namespace seqprior;

namespace {

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n, int alphabet) {
  std::uniform_int_distribution<int> d(0, alphabet - 1);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(d(rng));
  return v;
}

// naive reference: literal-only stream cost
std::size_t literal_cost(std::size_t n) { return n * kLiteralTokenBytes; }

}  // namespace

TEST_CASE("quantize floors onto the grid") {
  ActionMatrix a(4, 1);
  a << -1.0, -0.005, 0.0, 0.999;
  const auto q = quantize(a, 100);
  CHECK(q.values == std::vector<int>{-100, -1, 0, 99});
  const auto bytes = serialize(q);
  CHECK(bytes == std::vector<std::uint8_t>{0, 99, 100, 199});
}

TEST_CASE("quantize rejects out-of-range actions and bad granularity") {
  ActionMatrix a(1, 1);
  a << 1.5;
  CHECK_THROWS_AS(quantize(a, 100), InputDomainError);
  a << 0.0;
  CHECK_THROWS_AS(quantize(a, 0), ConfigError);
  CHECK_THROWS_AS(serialize(quantize(a, 128)), ConfigError);
}

TEST_CASE("quantize is time-major across dimensions") {
  ActionMatrix a(2, 2);
  a << 0.1, -0.2, 0.3, -0.4;
  const auto q = quantize(a, 10);
  CHECK(q.dim == 2);
  CHECK(q.values == std::vector<int>{1, -2, 3, -4});
}

TEST_CASE("roundtrip on edge cases") {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 63u, 64u, 65u, 200u}) {
    std::vector<std::uint8_t> zeros(n, 0);
    CHECK(lz_decompress(lz_compress(zeros)) == zeros);
  }
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  CHECK(lz_decompress(lz_compress(all)) == all);
}

TEST_CASE("roundtrip property on random and adversarial inputs") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> len(1, 3000);
  for (int trial = 0; trial < 400; ++trial) {
    const int alphabet = trial % 3 == 0 ? 2 : (trial % 3 == 1 ? 8 : 256);
    const auto x = random_bytes(rng, len(rng), alphabet);
    const auto enc = lz_compress(x);
    REQUIRE(lz_decompress(enc) == x);
    // byte image roundtrips too
    REQUIRE(lz_decompress(from_bytes(to_bytes(enc))) == x);
    CHECK(encoded_bytes(enc) == to_bytes(enc).size());
  }
  // runs longer than the lookahead buffer and overlapping matches
  std::vector<std::uint8_t> run(1000, 42);
  CHECK(lz_decompress(lz_compress(run)) == run);
  std::vector<std::uint8_t> pattern;
  for (int i = 0; i < 5000; ++i) pattern.push_back(static_cast<std::uint8_t>((i * i) % 7));
  CHECK(lz_decompress(lz_compress(pattern)) == pattern);
  // repetition farther back than the window
  auto block = random_bytes(rng, 5000, 256);
  auto twice = block;
  twice.insert(twice.end(), block.begin(), block.end());
  CHECK(lz_decompress(lz_compress(twice)) == twice);
}

TEST_CASE("small windows and buffers still roundtrip") {
  std::mt19937_64 rng(3);
  for (int w : {4, 16, 255}) {
    for (int b : {4, 8, 200}) {
      LzParams p{w, b, 4};
      const auto x = random_bytes(rng, 700, 3);
      CHECK(lz_decompress(lz_compress(x, p)) == x);
    }
  }
}

TEST_CASE("invalid parameters are rejected") {
  std::vector<std::uint8_t> x(10, 1);
  CHECK_THROWS_AS(lz_compress(x, LzParams{0, 64, 4}), ConfigError);
  CHECK_THROWS_AS(lz_compress(x, LzParams{4096, 0, 4}), ConfigError);
  CHECK_THROWS_AS(lz_compress(x, LzParams{70000, 64, 4}), ConfigError);
}

TEST_CASE("corrupted streams are detected") {
  EncodedSequence enc;
  enc.tokens.push_back(Token{5, 4, 1});  // match reaching before the start
  CHECK_THROWS_AS(lz_decompress(enc), CorruptionError);
  std::vector<std::uint8_t> truncated{4, 0};
  CHECK_THROWS_AS(from_bytes(truncated), CorruptionError);
  // only the last token may omit its literal
  EncodedSequence early;
  early.tokens = {Token{0, 0, 9}, Token{1, 4, 0, false}, Token{0, 0, 3}};
  CHECK_THROWS_AS(lz_decompress(early), CorruptionError);
}

TEST_CASE("a match running to the end drops its literal") {
  std::vector<std::uint8_t> x(9, 7);
  const auto enc = lz_compress(x);
  REQUIRE(enc.tokens.size() == 2);
  CHECK(enc.tokens[1].length == 8);
  CHECK_FALSE(enc.tokens[1].has_literal);
  CHECK(encoded_bytes(enc) == kLiteralTokenBytes + kTailMatchTokenBytes);
  const auto bytes = to_bytes(enc);
  CHECK(bytes.size() == encoded_bytes(enc));
  CHECK(from_bytes(bytes).tokens == enc.tokens);
  // one byte more than the repeat: the fresh byte rides as the literal of the match
  x.push_back(8);
  const auto enc2 = lz_compress(x);
  CHECK(enc2.tokens.back().has_literal);
  CHECK(encoded_bytes(enc2) == kLiteralTokenBytes + kMatchTokenBytes);
}

TEST_CASE("determinism: same input, same tokens") {
  std::mt19937_64 rng(11);
  const auto x = random_bytes(rng, 2000, 5);
  CHECK(lz_compress(x).tokens == lz_compress(x).tokens);
}

TEST_CASE("a constant sequence compresses far below literal cost") {
  ActionMatrix a = ActionMatrix::Constant(200, 1, 0.3);
  const auto len = encoded_length(a);
  CHECK(len < literal_cost(200) / 4);
  // never worse than storing everything as literals
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_bytes(rng, 300, 256);
    CHECK(encoded_bytes(lz_compress(x)) <= literal_cost(x.size()));
  }
}

TEST_CASE("delta is the prefix length minus the extended length") {
  ActionMatrix ctx = ActionMatrix::Constant(50, 1, 0.5);
  Eigen::VectorXd next = Eigen::VectorXd::Constant(1, 0.5);
  ActionMatrix ext(51, 1);
  ext << ctx, next.transpose();
  const double d = delta(ctx, next);
  CHECK(d == static_cast<double>(encoded_length(ctx)) - static_cast<double>(encoded_length(ext)));
  // repeating the run costs at most a couple of bytes; a fresh value costs more
  CHECK(d >= -2.0);
  CHECK(d <= 0.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd other = Eigen::VectorXd::Constant(1, u(rng));
    if (std::floor(other(0) * 100) == 50) continue;
    CHECK(delta(ctx, other) < d);
  }
}

TEST_CASE("delta for a two-dimensional action") {
  ActionMatrix ctx(6, 2);
  for (int t = 0; t < 6; ++t) ctx.row(t) << 0.2, -0.2;
  Eigen::VectorXd same(2);
  same << 0.2, -0.2;
  Eigen::VectorXd fresh(2);
  fresh << 0.9, 0.9;
  CHECK(delta(ctx, same) >= delta(ctx, fresh));
  // hand count: 12 bytes, values {120, 80} repeating
  //  [0,120] [0,80] then one overlapping match of length 10 running to the end
  CHECK(encoded_length(ctx) == 2 * kLiteralTokenBytes + kTailMatchTokenBytes);
}

TEST_CASE("monotone context property") {
  // extending by one step never lowers the cost below the prefix cost minus one token
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 150);
    ActionMatrix ctx(n, 1);
    const bool structured = trial % 2 == 0;
    for (int t = 0; t < n; ++t) ctx(t, 0) = structured ? ((t % 4) < 2 ? 0.5 : -0.5) : u(rng);
    Eigen::VectorXd next(1);
    next(0) = trial % 4 == 0 ? ctx(n - 1, 0) : u(rng);
    const double prefix = static_cast<double>(encoded_length(ctx));
    ActionMatrix ext(n + 1, 1);
    ext << ctx, next.transpose();
    CHECK(prefix <= static_cast<double>(encoded_length(ext)) + static_cast<double>(kMatchTokenBytes));
  }
}

TEST_CASE("sequence classes order by compressibility at both granularities") {
  for (int n : {10, 100}) {
    ComplexityOptions o;
    o.granularity = n;
    o.draws = 20;
    o.seed = 17;
    const auto rows = complexity_report(o);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].cls == SequenceClass::kConstant);
    CHECK(rows[0].mean_length < rows[1].mean_length);
    CHECK(rows[1].mean_length < rows[2].mean_length);
    CHECK(rows[2].mean_length < rows[3].mean_length);
  }
}

TEST_CASE("generated sequences have the requested shape and range") {
  std::mt19937_64 rng(1);
  for (auto cls : {SequenceClass::kConstant, SequenceClass::kBangBang, SequenceClass::kPeriodic, SequenceClass::kRandom}) {
    const auto s = generate_sequence(cls, 50, 2, 8, rng);
    CHECK(s.rows() == 50);
    CHECK(s.cols() == 2);
    CHECK(s.maxCoeff() <= 1.0);
    CHECK(s.minCoeff() >= -1.0);
  }
}
