#include <seqprior/checkpoint.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace seqprior {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'P', 'R', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CorruptionError("checkpoint truncated");
  return v;
}

std::string get_str(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 24)) throw CorruptionError("checkpoint string too long");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw CorruptionError("checkpoint truncated");
  return s;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return &m;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, Checkpoint::kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
      put_str(os, k);
      put_str(os, v);
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& [name, m] : ckpt.arrays) {
      put_str(os, name);
      put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(os, m(i, j));
    }
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CorruptionError(path.string() + " is not a checkpoint file");
  const auto version = get<std::uint32_t>(is);
  if (version != Checkpoint::kVersion)
    throw CorruptionError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto n_meta = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = get_str(is);
    ckpt.meta[k] = get_str(is);
  }
  const auto n_arrays = get<std::uint32_t>(is);
  for (std::uint32_t a = 0; a < n_arrays; ++a) {
    auto name = get_str(is);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows * cols > (1ull << 28)) throw CorruptionError("checkpoint array too large");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>(is);
    ckpt.arrays.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void append_store(Checkpoint& ckpt, const std::string& prefix, const ParamStore& store,
                  bool with_optimizer) {
  for (const auto& p : store) {
    ckpt.arrays.emplace_back(prefix + p.name, p.value);
    if (with_optimizer) {
      ckpt.arrays.emplace_back(prefix + p.name + "#m", p.adam_m);
      ckpt.arrays.emplace_back(prefix + p.name + "#v", p.adam_v);
    }
  }
  if (with_optimizer) ckpt.meta[prefix + "#step"] = std::to_string(store.step);
}

void load_store(const Checkpoint& ckpt, const std::string& prefix, ParamStore& store,
                bool with_optimizer) {
  auto fetch = [&](const std::string& name, Matrix& dst) {
    const Matrix* m = ckpt.find(name);
    if (m == nullptr) throw ConfigError("checkpoint lacks array '" + name + "'");
    if (m->rows() != dst.rows() || m->cols() != dst.cols())
      throw ConfigError("checkpoint array '" + name + "' has the wrong shape");
    dst = *m;
  };
  for (auto& p : store) {
    fetch(prefix + p.name, p.value);
    if (with_optimizer) {
      fetch(prefix + p.name + "#m", p.adam_m);
      fetch(prefix + p.name + "#v", p.adam_v);
    }
  }
  if (with_optimizer) {
    auto it = ckpt.meta.find(prefix + "#step");
    if (it == ckpt.meta.end()) throw ConfigError("checkpoint lacks optimizer step for " + prefix);
    store.step = std::stoll(it->second);
  }
}

}  // namespace seqprior
