#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <vector>

#include <seqprior/autodiff.hpp>
#include <seqprior/envs.hpp>
#include <seqprior/errors.hpp>

namespace seqprior {

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;

  bool operator==(const Transition&) const = default;
};

/// Transitions plus the action windows that preceded them, stacked one row per sample.
struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector terminals;
  std::vector<Matrix> windows;       // actions at steps t-tau..t-1, oldest first
  std::vector<bool> window_padded;   // true when the window is the step-0 zero pad
  std::vector<std::size_t> indices;  // buffer positions of the sampled transitions
  int tau = 0;

  std::size_t size() const { return windows.size(); }
};

/// Episode-aware FIFO replay storage. Eviction always removes whole episodes,
/// so a window never crosses an episode boundary.
class ReplayBuffer {
 public:
  static constexpr std::uint32_t kFileVersion = 1;

  explicit ReplayBuffer(std::size_t capacity = 1'000'000);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  const Transition& at(std::size_t i) const { return data_.at(i); }

  /// min(tau, step_index) actions preceding transition i; a single zero action at step 0.
  Matrix window(std::size_t i, int tau) const;

  /// Draws B transitions uniformly (with replacement) and one tau ~ U{tau_min..tau_max}
  /// for the whole batch. Throws RetryableError while fewer than B transitions are stored.
  Batch sample_batch(int batch_size, int tau_min, int tau_max, std::mt19937_64& rng) const;

  /// Versioned binary dump:
  ///   magic "SQPRRPLY" | u32 version | u64 capacity | u64 count | u32 state_dim | u32 action_dim
  ///   | count x (state f64[], action f64[], reward f64, next_state f64[], u8 terminal,
  ///              i64 episode_id, i64 step_index)
  void save(const std::filesystem::path& path) const;
  static ReplayBuffer load(const std::filesystem::path& path);

  bool operator==(const ReplayBuffer& other) const {
    return capacity_ == other.capacity_ && data_ == other.data_;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> data_;
};

/// Fills the buffer with `n_steps` transitions from a uniform random policy.
/// Episodes are numbered from `next_episode_id`, which is advanced.
void seed_fill(ReplayBuffer& buffer, Env& env, int n_steps, std::mt19937_64& rng,
               std::int64_t& next_episode_id);

}  // namespace seqprior
