#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include <seqprior/errors.hpp>

namespace seqprior {

/// Quantized action stream, time-major with `dim` components per step.
struct QuantizedSequence {
  std::vector<int> values;
  int granularity = 100;
  int dim = 1;

  std::size_t steps() const { return dim > 0 ? values.size() / dim : 0; }
};

struct Token {
  std::uint16_t distance = 0;
  std::uint8_t length = 0;
  std::uint8_t literal = 0;
  // only the last token may lack a literal: a match running to the end of the input
  bool has_literal = true;

  bool is_match() const { return length > 0; }
  bool operator==(const Token&) const = default;
};

struct LzParams {
  int window_size = 4096;
  int buffer_size = 64;
  int min_match = 4;
};

struct EncodedSequence {
  std::vector<Token> tokens;
  int window_size = 4096;
  int buffer_size = 64;
};

/// Action windows are stored one action per row.
using ActionMatrix = Eigen::MatrixXd;

QuantizedSequence quantize(const ActionMatrix& actions, int granularity = 100);

std::vector<std::uint8_t> serialize(const QuantizedSequence& q);

EncodedSequence lz_compress(std::span<const std::uint8_t> data, const LzParams& params = {});

std::vector<std::uint8_t> lz_decompress(const EncodedSequence& enc);

// Byte layout of one token: a match is [length][distance hi][distance lo][literal],
// a bare literal is [0][literal]. The leading length byte doubles as the flag.
// A final match that reaches the end of the input drops its literal byte.
inline constexpr std::size_t kMatchTokenBytes = 4;
inline constexpr std::size_t kTailMatchTokenBytes = 3;
inline constexpr std::size_t kLiteralTokenBytes = 2;

std::size_t encoded_bytes(const EncodedSequence& enc);
std::vector<std::uint8_t> to_bytes(const EncodedSequence& enc);
EncodedSequence from_bytes(std::span<const std::uint8_t> bytes, const LzParams& params = {});

std::size_t encoded_length(const ActionMatrix& actions, int granularity = 100,
                           const LzParams& params = {});

/// Extra bytes saved (<= 0 typically) by appending `next` to `context`.
double delta(const ActionMatrix& context, const Eigen::VectorXd& next, int granularity = 100,
             const LzParams& params = {});

enum class SequenceClass { kConstant, kBangBang, kPeriodic, kRandom };

std::string to_string(SequenceClass c);

struct ComplexityRow {
  SequenceClass cls;
  double mean_length = 0.0;
  double stddev = 0.0;
  std::vector<double> lengths;
};

struct ComplexityOptions {
  int length = 200;
  int dim = 1;
  int period = 8;
  int granularity = 100;
  int draws = 20;
  std::uint64_t seed = 0;
  LzParams lz;
};

/// Draws one sequence (length x dim) of the given class.
template <class Rng>
ActionMatrix generate_sequence(SequenceClass cls, int length, int dim, int period, Rng& rng);

std::vector<ComplexityRow> complexity_report(const ComplexityOptions& opts);

/// Mean encoded length per class over already generated sequences.
std::vector<ComplexityRow> complexity_report(
    const std::vector<std::pair<SequenceClass, std::vector<ActionMatrix>>>& classes,
    int granularity, const LzParams& params = {});

}  // namespace seqprior

#include <seqprior/detail/sequence_gen.hpp>
