#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <seqprior/nn.hpp>

namespace seqprior {

/// In-memory image of a checkpoint file.
///
/// File layout (all integers little-endian):
///   magic "SQPRCKPT" | u32 version | u32 n_meta | n_meta x (str key, str value)
///   | u32 n_arrays | n_arrays x (str name, u64 rows, u64 cols, rows*cols f64 row-major)
/// where `str` is a u32 byte length followed by the bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> arrays;

  const Matrix* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Adds every parameter of `store` as "<prefix><name>"; optimizer moments go to
/// "<prefix><name>#m" / "#v" and the step counter to meta "<prefix>#step".
void append_store(Checkpoint& ckpt, const std::string& prefix, const ParamStore& store,
                  bool with_optimizer = false);

/// Inverse of append_store. Missing or mis-shaped arrays throw ConfigError.
void load_store(const Checkpoint& ckpt, const std::string& prefix, ParamStore& store,
                bool with_optimizer = false);

}  // namespace seqprior
