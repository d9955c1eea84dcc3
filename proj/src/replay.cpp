#include <seqprior/replay.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace seqprior {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (!data_.empty()) {
    const auto& last = data_.back();
    if (last.episode_id == t.episode_id) {
      if (t.step_index != last.step_index + 1)
        throw PreconditionError("replay: step_index must advance by one within an episode");
      if (last.terminal) throw PreconditionError("replay: transition after a terminal one");
    } else if (t.step_index != 0) {
      throw PreconditionError("replay: a new episode must start at step 0");
    }
  } else if (t.step_index != 0) {
    throw PreconditionError("replay: a new episode must start at step 0");
  }
  while (data_.size() >= capacity_ && data_.front().episode_id != t.episode_id) {
    const auto oldest = data_.front().episode_id;
    while (!data_.empty() && data_.front().episode_id == oldest) data_.pop_front();
  }
  data_.push_back(std::move(t));
}

Matrix ReplayBuffer::window(std::size_t i, int tau) const {
  const Transition& tr = data_.at(i);
  const auto dim = tr.action.size();
  const auto available = static_cast<std::int64_t>(std::min<std::int64_t>(tau, tr.step_index));
  if (available == 0) return Matrix::Zero(1, dim);
  Matrix w(available, dim);
  for (std::int64_t k = 0; k < available; ++k) {
    const Transition& prev = data_[i - static_cast<std::size_t>(available - k)];
    w.row(k) = prev.action.transpose();
  }
  return w;
}

Batch ReplayBuffer::sample_batch(int batch_size, int tau_min, int tau_max, std::mt19937_64& rng) const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (tau_min < 1 || tau_max < tau_min) throw ConfigError("need 1 <= tau_min <= tau_max");
  if (data_.size() < static_cast<std::size_t>(batch_size))
    throw RetryableError("replay holds " + std::to_string(data_.size()) + " transitions, batch needs " +
                         std::to_string(batch_size));
  std::uniform_int_distribution<int> tau_dist(tau_min, tau_max);
  std::uniform_int_distribution<std::size_t> index(0, data_.size() - 1);
  Batch b;
  b.tau = tau_dist(rng);
  const auto sd = data_.front().state.size();
  const auto ad = data_.front().action.size();
  b.states.resize(batch_size, sd);
  b.actions.resize(batch_size, ad);
  b.rewards.resize(batch_size);
  b.next_states.resize(batch_size, sd);
  b.terminals.resize(batch_size);
  for (int k = 0; k < batch_size; ++k) {
    const std::size_t i = index(rng);
    const Transition& t = data_[i];
    b.indices.push_back(i);
    b.states.row(k) = t.state.transpose();
    b.actions.row(k) = t.action.transpose();
    b.rewards(k) = t.reward;
    b.next_states.row(k) = t.next_state.transpose();
    b.terminals(k) = t.terminal ? 1.0 : 0.0;
    b.windows.push_back(window(i, b.tau));
    b.window_padded.push_back(t.step_index == 0);
  }
  return b;
}

namespace {
constexpr char kMagic[8] = {'S', 'Q', 'P', 'R', 'R', 'P', 'L', 'Y'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CorruptionError("replay file truncated");
  return v;
}
void put_vec(std::ostream& os, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(os, v(i));
}
Vector get_vec(std::istream& is, std::uint32_t n) {
  Vector v(n);
  for (std::uint32_t i = 0; i < n; ++i) v(i) = get<double>(is);
  return v;
}
}  // namespace

void ReplayBuffer::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kFileVersion);
  put<std::uint64_t>(os, capacity_);
  put<std::uint64_t>(os, data_.size());
  const auto sd = data_.empty() ? 0u : static_cast<std::uint32_t>(data_.front().state.size());
  const auto ad = data_.empty() ? 0u : static_cast<std::uint32_t>(data_.front().action.size());
  put<std::uint32_t>(os, sd);
  put<std::uint32_t>(os, ad);
  for (const auto& t : data_) {
    put_vec(os, t.state);
    put_vec(os, t.action);
    put<double>(os, t.reward);
    put_vec(os, t.next_state);
    put<std::uint8_t>(os, t.terminal ? 1 : 0);
    put<std::int64_t>(os, t.episode_id);
    put<std::int64_t>(os, t.step_index);
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CorruptionError(path.string() + " is not a replay dump");
  const auto version = get<std::uint32_t>(is);
  if (version != kFileVersion) throw CorruptionError("unsupported replay version " + std::to_string(version));
  ReplayBuffer buf(get<std::uint64_t>(is));
  const auto count = get<std::uint64_t>(is);
  const auto sd = get<std::uint32_t>(is);
  const auto ad = get<std::uint32_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    Transition t;
    t.state = get_vec(is, sd);
    t.action = get_vec(is, ad);
    t.reward = get<double>(is);
    t.next_state = get_vec(is, sd);
    t.terminal = get<std::uint8_t>(is) != 0;
    t.episode_id = get<std::int64_t>(is);
    t.step_index = get<std::int64_t>(is);
    buf.data_.push_back(std::move(t));
  }
  return buf;
}

void seed_fill(ReplayBuffer& buffer, Env& env, int n_steps, std::mt19937_64& rng,
               std::int64_t& next_episode_id) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int dim = env.spec().action_dim;
  int done_steps = 0;
  while (done_steps < n_steps) {
    const std::int64_t episode = next_episode_id++;
    Vector obs = env.reset(rng());
    for (std::int64_t t = 0; done_steps < n_steps; ++t) {
      Vector a(dim);
      for (int d = 0; d < dim; ++d) a(d) = unif(rng);
      auto r = env.step(a);
      buffer.push({obs, a, r.reward, r.observation, r.done, episode, t});
      obs = std::move(r.observation);
      ++done_steps;
      if (r.done) break;
    }
  }
}

}  // namespace seqprior
