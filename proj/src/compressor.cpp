#include <seqprior/compressor.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace seqprior {

namespace {

void validate(const LzParams& p) {
  if (p.window_size < 1 || p.window_size > 65535)
    throw ConfigError("lz window_size must be in [1, 65535]");
  if (p.buffer_size < 1 || p.buffer_size > 255)
    throw ConfigError("lz buffer_size must be in [1, 255]");
  if (p.min_match < 1) throw ConfigError("lz min_match must be >= 1");
}

// Hash of the first `n` bytes at `p` (n <= 4).
inline std::uint32_t gram_hash(const std::uint8_t* p, int n, std::uint32_t mask) {
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v = (v << 8) | p[i];
  return (v * 2654435761u >> 7) & mask;
}

}  // namespace

QuantizedSequence quantize(const ActionMatrix& actions, int granularity) {
  if (granularity < 1) throw ConfigError("quantization granularity must be >= 1");
  QuantizedSequence q;
  q.granularity = granularity;
  q.dim = static_cast<int>(actions.cols());
  q.values.reserve(actions.size());
  for (Eigen::Index t = 0; t < actions.rows(); ++t) {
    for (Eigen::Index d = 0; d < actions.cols(); ++d) {
      const double a = actions(t, d);
      if (!(a >= -1.0 && a <= 1.0))
        throw InputDomainError("action component " + std::to_string(a) + " outside [-1, 1]");
      q.values.push_back(static_cast<int>(std::floor(a * granularity)));
    }
  }
  return q;
}

std::vector<std::uint8_t> serialize(const QuantizedSequence& q) {
  if (q.granularity > 127)
    throw ConfigError("granularity " + std::to_string(q.granularity) +
                      " does not fit single-byte serialization (max 127)");
  std::vector<std::uint8_t> out;
  out.reserve(q.values.size());
  for (int v : q.values) {
    if (v < -q.granularity || v > q.granularity)
      throw InputDomainError("quantized value out of range");
    out.push_back(static_cast<std::uint8_t>(v + q.granularity));
  }
  return out;
}

EncodedSequence lz_compress(std::span<const std::uint8_t> data, const LzParams& params) {
  validate(params);
  EncodedSequence enc;
  enc.window_size = params.window_size;
  enc.buffer_size = params.buffer_size;

  const int n = static_cast<int>(data.size());
  if (n == 0) return enc;

  // Hash chains over `gram`-byte prefixes. Every match of length >= min_match shares
  // the prefix, so walking the chain finds the same longest match as a full scan.
  const int gram = std::min(params.min_match, 4);
  int bits = 8;
  while ((1 << bits) < 2 * n && bits < 16) ++bits;
  const std::uint32_t mask = (1u << bits) - 1;
  std::vector<int> head(std::size_t{1} << bits, -1);
  std::vector<int> prev(n, -1);
  const std::uint8_t* k = data.data();

  int inserted = 0;
  auto insert_upto = [&](int end) {
    for (; inserted < end && inserted + gram <= n; ++inserted) {
      const std::uint32_t h = gram_hash(k + inserted, gram, mask);
      prev[inserted] = head[h];
      head[h] = inserted;
    }
  };

  int t = 0;
  while (t < n) {
    insert_upto(t);
    // a match may run to the end; then the token carries no literal
    const int max_len = std::min(params.buffer_size, n - t);
    int best_len = 0;
    int best_dist = 0;
    if (max_len >= params.min_match && t + gram <= n) {
      const int lowest = std::max(0, t - params.window_size);
      for (int i = head[gram_hash(k + t, gram, mask)]; i >= lowest; i = prev[i]) {
        int l = 0;
        while (l < max_len && k[i + l] == k[t + l]) ++l;
        if (l > best_len) {
          best_len = l;
          best_dist = t - i;
          if (l == max_len) break;
        }
      }
    }
    Token tok;
    if (best_len >= params.min_match) {
      tok.distance = static_cast<std::uint16_t>(best_dist);
      tok.length = static_cast<std::uint8_t>(best_len);
      if (t + best_len < n) {
        tok.literal = k[t + best_len];
      } else {
        tok.has_literal = false;
      }
      t += best_len + 1;
    } else {
      tok.literal = k[t];
      t += 1;
    }
    enc.tokens.push_back(tok);
  }
  return enc;
}

std::vector<std::uint8_t> lz_decompress(const EncodedSequence& enc) {
  std::vector<std::uint8_t> out;
  for (std::size_t idx = 0; idx < enc.tokens.size(); ++idx) {
    const Token& tok = enc.tokens[idx];
    if (tok.is_match()) {
      if (tok.distance == 0 || tok.distance > out.size() || tok.distance > enc.window_size ||
          tok.length > enc.buffer_size)
        throw CorruptionError("malformed token " + std::to_string(idx) + ": distance " +
                              std::to_string(tok.distance) + " with " +
                              std::to_string(out.size()) + " bytes emitted");
      const std::size_t start = out.size() - tok.distance;
      for (std::size_t i = 0; i < tok.length; ++i) out.push_back(out[start + i]);
    } else if (tok.distance != 0 || !tok.has_literal) {
      throw CorruptionError("literal token " + std::to_string(idx) + " is malformed");
    }
    if (tok.has_literal) {
      out.push_back(tok.literal);
    } else if (idx + 1 != enc.tokens.size()) {
      throw CorruptionError("token " + std::to_string(idx) + " lacks a literal but is not last");
    }
  }
  return out;
}

std::size_t encoded_bytes(const EncodedSequence& enc) {
  std::size_t total = 0;
  for (const auto& tok : enc.tokens)
    total += !tok.is_match() ? kLiteralTokenBytes : tok.has_literal ? kMatchTokenBytes : kTailMatchTokenBytes;
  return total;
}

std::vector<std::uint8_t> to_bytes(const EncodedSequence& enc) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_bytes(enc));
  for (const auto& tok : enc.tokens) {
    out.push_back(tok.length);
    if (tok.is_match()) {
      out.push_back(static_cast<std::uint8_t>(tok.distance >> 8));
      out.push_back(static_cast<std::uint8_t>(tok.distance & 0xFF));
    }
    if (tok.has_literal) out.push_back(tok.literal);
  }
  return out;
}

EncodedSequence from_bytes(std::span<const std::uint8_t> bytes, const LzParams& params) {
  EncodedSequence enc;
  enc.window_size = params.window_size;
  enc.buffer_size = params.buffer_size;
  std::size_t i = 0;
  while (i < bytes.size()) {
    Token tok;
    tok.length = bytes[i];
    const std::size_t need = tok.is_match() ? kMatchTokenBytes : kLiteralTokenBytes;
    if (tok.is_match() && i + kTailMatchTokenBytes == bytes.size()) {
      tok.distance = static_cast<std::uint16_t>((bytes[i + 1] << 8) | bytes[i + 2]);
      tok.has_literal = false;
      enc.tokens.push_back(tok);
      break;
    }
    if (i + need > bytes.size()) throw CorruptionError("truncated token stream");
    if (tok.is_match()) {
      tok.distance = static_cast<std::uint16_t>((bytes[i + 1] << 8) | bytes[i + 2]);
      tok.literal = bytes[i + 3];
    } else {
      tok.literal = bytes[i + 1];
    }
    enc.tokens.push_back(tok);
    i += need;
  }
  return enc;
}

std::size_t encoded_length(const ActionMatrix& actions, int granularity, const LzParams& params) {
  const auto bytes = serialize(quantize(actions, granularity));
  return encoded_bytes(lz_compress(bytes, params));
}

double delta(const ActionMatrix& context, const Eigen::VectorXd& next, int granularity,
             const LzParams& params) {
  if (context.rows() == 0) throw PreconditionError("delta requires a non-empty context");
  if (next.size() != context.cols())
    throw ConfigError("next action dimension does not match context");
  ActionMatrix extended(context.rows() + 1, context.cols());
  extended.topRows(context.rows()) = context;
  extended.row(context.rows()) = next.transpose();
  const auto before = encoded_length(context, granularity, params);
  const auto after = encoded_length(extended, granularity, params);
  return static_cast<double>(before) - static_cast<double>(after);
}

std::string to_string(SequenceClass c) {
  switch (c) {
    case SequenceClass::kConstant: return "constant";
    case SequenceClass::kBangBang: return "bang-bang";
    case SequenceClass::kPeriodic: return "periodic";
    case SequenceClass::kRandom: return "random";
  }
  return "unknown";
}

std::vector<ComplexityRow> complexity_report(
    const std::vector<std::pair<SequenceClass, std::vector<ActionMatrix>>>& classes,
    int granularity, const LzParams& params) {
  std::vector<ComplexityRow> rows;
  Eigen::Index rows0 = -1, cols0 = -1;
  for (const auto& [cls, seqs] : classes) {
    ComplexityRow row{cls, 0.0, 0.0, {}};
    for (const auto& s : seqs) {
      if (rows0 < 0) {
        rows0 = s.rows();
        cols0 = s.cols();
      } else if (s.rows() != rows0 || s.cols() != cols0) {
        throw InputDomainError("complexity_report: sequences differ in shape");
      }
      row.lengths.push_back(static_cast<double>(encoded_length(s, granularity, params)));
    }
    if (!row.lengths.empty()) {
      double sum = 0.0;
      for (double v : row.lengths) sum += v;
      row.mean_length = sum / row.lengths.size();
      double ss = 0.0;
      for (double v : row.lengths) ss += (v - row.mean_length) * (v - row.mean_length);
      row.stddev = row.lengths.size() > 1 ? std::sqrt(ss / (row.lengths.size() - 1)) : 0.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ComplexityRow> complexity_report(const ComplexityOptions& opts) {
  if (opts.length < 1 || opts.dim < 1 || opts.period < 1)
    throw ConfigError("complexity_report: length, dim and period must be >= 1");
  if (opts.draws < 20) throw ConfigError("complexity_report needs at least 20 draws per class");
  std::mt19937_64 rng(opts.seed);
  std::vector<std::pair<SequenceClass, std::vector<ActionMatrix>>> classes;
  for (auto cls : {SequenceClass::kConstant, SequenceClass::kBangBang, SequenceClass::kPeriodic,
                   SequenceClass::kRandom}) {
    std::vector<ActionMatrix> seqs;
    for (int i = 0; i < opts.draws; ++i)
      seqs.push_back(generate_sequence(cls, opts.length, opts.dim, opts.period, rng));
    classes.emplace_back(cls, std::move(seqs));
  }
  return complexity_report(classes, opts.granularity, opts.lz);
}

}  // namespace seqprior
