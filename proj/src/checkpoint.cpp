#include "mom/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "mom/errors.hpp"

namespace mom {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'M', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw ValidationError("checkpoint: truncated file");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw ValidationError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw ValidationError("checkpoint: truncated file");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model, const std::string& metadata) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, metadata.size());
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  std::uint64_t count = 0;
  model.visit([&](const std::string&, const Tensor&) { ++count; });
  put<std::uint64_t>(out, count);
  model.visit([&](const std::string& key, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  });
  if (!out) throw ValidationError("checkpoint: write failed");
}

std::string read_checkpoint(std::istream& in, Model& model) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("checkpoint: bad magic");
  }
  std::string metadata = get_string(in, get<std::uint64_t>(in));
  const auto count = get<std::uint64_t>(in);
  std::map<std::string, Tensor> entries;
  for (std::uint64_t e = 0; e < count; ++e) {
    std::string key = get_string(in, get<std::uint32_t>(in));
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = get<std::uint64_t>(in);
      n *= d;
    }
    std::vector<double> data(n);
    for (double& v : data) v = get<double>(in);
    entries.emplace(std::move(key), Tensor(std::move(shape), std::move(data)));
  }
  std::size_t matched = 0;
  model.visit([&](const std::string& key, Tensor& t) {
    auto it = entries.find(key);
    if (it == entries.end()) throw ValidationError("checkpoint: missing parameter " + key);
    if (it->second.shape() != t.shape()) throw ValidationError("checkpoint: shape mismatch for " + key);
    t = it->second;
    ++matched;
  });
  if (matched != entries.size()) throw ValidationError("checkpoint: contains parameters the model does not have");
  return metadata;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("checkpoint: cannot open " + path.string());
  write_checkpoint(out, model, metadata);
}

std::string load_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in, model);
}

}  // namespace mom
