#include "mom/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "mom/errors.hpp"
#include "mom/objectives.hpp"

namespace mom {

void DataConfig::validate() const {
  if (modalities.empty()) throw ConfigError("data.modalities", "at least one modality is required");
  if (batch == 0) throw ConfigError("data.batch", "must be positive");
  if (seq_len < 2) throw ConfigError("data.seq_len", "must be at least 2");
  if (!(heterogeneity >= 0.0 && heterogeneity <= 1.0)) {
    throw ConfigError("data.heterogeneity", "must lie in [0, 1]");
  }
  bool seen_continuous = false;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const ModalitySpec& s = modalities[m];
    const std::string field = "data." + (s.name.empty() ? std::to_string(m) : s.name);
    if (seen_continuous) throw ConfigError(field, "the continuous modality must be last");
    if (s.kind == ModalityKind::continuous) seen_continuous = true;
    if (s.size == 0) throw ConfigError(field + ".size", "must be positive");
    if (s.min_segment == 0 || s.max_segment < s.min_segment) {
      throw ConfigError(field + ".segment", "need 1 <= min_segment <= max_segment");
    }
    if (s.kind == ModalityKind::discrete) {
      const GeneratorParams& g = s.gen;
      if (g.p_repeat < 0 || g.p_copy < 0 || g.p_repeat + g.p_copy > 1.0) {
        throw ConfigError(field + ".p_repeat", "p_repeat and p_copy must be non-negative and sum to at most 1");
      }
      if (g.p_copy > 0 && g.lag == 0) throw ConfigError(field + ".lag", "must be positive when p_copy > 0");
      if (!(g.temperature > 0)) throw ConfigError(field + ".temperature", "must be positive");
      if (heterogeneity < 1.0 && s.size != modalities[0].size) {
        throw ConfigError("data.heterogeneity", "values below 1 need equal vocabulary sizes");
      }
    } else if (!(std::abs(s.gen.smoothing) < 1.0)) {
      throw ConfigError(field + ".smoothing", "must lie in (-1, 1)");
    }
  }
  if (modalities[0].kind != ModalityKind::discrete) {
    throw ConfigError("data.modalities", "modality 0 must be discrete");
  }
}

std::size_t DataConfig::num_discrete() const {
  return static_cast<std::size_t>(std::count_if(modalities.begin(), modalities.end(), [](const ModalitySpec& s) {
    return s.kind == ModalityKind::discrete;
  }));
}

std::size_t DataConfig::continuous_dim() const {
  for (const ModalitySpec& s : modalities) {
    if (s.kind == ModalityKind::continuous) return s.size;
  }
  return 0;
}

std::vector<std::size_t> DataConfig::vocab_sizes() const {
  std::vector<std::size_t> out;
  for (const ModalitySpec& s : modalities) {
    if (s.kind == ModalityKind::discrete) out.push_back(s.size);
  }
  return out;
}

namespace {

ModalitySpec text_spec(std::size_t vocab) {
  ModalitySpec s{"text", ModalityKind::discrete, vocab, {}, 8, 48};
  s.gen.temperature = 0.5;
  s.gen.table_seed = 101;
  return s;
}

ModalitySpec image_spec(std::size_t vocab) {
  // Flattened 4-wide patch grid: the token above is 4 positions back.
  ModalitySpec s{"image", ModalityKind::discrete, vocab, {}, 32, 64};
  s.gen.p_copy = 0.5;
  s.gen.lag = 4;
  s.gen.temperature = 1.0;
  s.gen.table_seed = 202;
  return s;
}

}  // namespace

DataConfig DataConfig::two_modality(std::size_t text_vocab, std::size_t image_vocab) {
  DataConfig cfg;
  cfg.modalities = {text_spec(text_vocab), image_spec(image_vocab)};
  return cfg;
}

DataConfig DataConfig::three_modality(std::size_t text_vocab, std::size_t image_vocab, std::size_t speech_vocab) {
  DataConfig cfg;
  cfg.modalities = {text_spec(text_vocab), image_spec(image_vocab)};
  ModalitySpec speech{"speech", ModalityKind::discrete, speech_vocab, {}, 16, 48};
  speech.gen.p_repeat = 0.6;
  speech.gen.temperature = 0.7;
  speech.gen.table_seed = 303;
  cfg.modalities.push_back(speech);
  return cfg;
}

DataConfig DataConfig::text_and_patches(std::size_t vocab, std::size_t patch_dim) {
  DataConfig cfg;
  ModalitySpec patches{"image", ModalityKind::continuous, patch_dim, {}, 16, 32};
  patches.gen.smoothing = 0.9;
  cfg.modalities = {text_spec(vocab), patches};
  return cfg;
}

DataGenerator::DataGenerator(DataConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (const ModalitySpec& s : cfg_.modalities) {
    if (s.kind != ModalityKind::discrete) continue;
    const std::size_t v = s.size;
    std::mt19937_64 rng(s.gen.table_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> cum(v * v);
    for (std::size_t i = 0; i < v; ++i) {
      std::vector<double> logits(v);
      for (double& l : logits) l = normal(rng) / s.gen.temperature;
      const double mx = *std::max_element(logits.begin(), logits.end());
      double acc = 0.0;
      for (std::size_t j = 0; j < v; ++j) {
        acc += std::exp(logits[j] - mx);
        cum[i * v + j] = acc;
      }
      for (std::size_t j = 0; j < v; ++j) cum[i * v + j] /= acc;
    }
    // Segment openings follow a Zipf-like profile so unigram statistics differ
    // between vocabularies even before the chain mixes.
    std::vector<double> start(v);
    double acc = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      acc += 1.0 / static_cast<double>(j + 1);
      start[j] = acc;
    }
    for (double& x : start) x /= acc;
    cumulative_.push_back(std::move(cum));
    start_.push_back(std::move(start));
  }
}

int DataGenerator::draw(std::size_t table, int prev, std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const std::size_t v = start_[table].size();
  const double* row = prev < 0 ? start_[table].data() : cumulative_[table].data() + static_cast<std::size_t>(prev) * v;
  const double* hit = std::upper_bound(row, row + v, u);
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(hit - row), v - 1));
}

Batch DataGenerator::batch(std::uint64_t seed, std::uint64_t step) const {
  const std::size_t b = cfg_.batch, len = cfg_.seq_len, M = cfg_.modalities.size();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<int> ids(b * len), tokens(b * len, 0);
  const std::size_t cd = cfg_.continuous_dim();
  std::vector<double> patches;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t t = 0;
    int previous = -1;
    while (t < len) {
      int m = static_cast<int>(rng() % M);
      if (M > 1 && m == previous) m = static_cast<int>((static_cast<std::size_t>(m) + 1 + rng() % (M - 1)) % M);
      previous = m;
      const ModalitySpec& spec = cfg_.modalities[static_cast<std::size_t>(m)];
      const std::size_t span = spec.max_segment - spec.min_segment + 1;
      const std::size_t seg = std::min(len - t, spec.min_segment + static_cast<std::size_t>(rng() % span));
      const std::size_t base = i * len + t;
      for (std::size_t j = 0; j < seg; ++j) ids[base + j] = m;
      if (spec.kind == ModalityKind::continuous) {
        const double rho = spec.gen.smoothing, innov = std::sqrt(1.0 - rho * rho);
        std::vector<double> x(cd);
        for (double& v : x) v = normal(rng);
        for (std::size_t j = 0; j < seg; ++j) {
          if (j > 0) {
            for (double& v : x) v = rho * v + innov * normal(rng);
          }
          patches.insert(patches.end(), x.begin(), x.end());
        }
      } else {
        for (std::size_t j = 0; j < seg; ++j) {
          // Token-level blend toward modality 0's generator.
          const bool own = cfg_.heterogeneity >= 1.0 || unit(rng) < cfg_.heterogeneity;
          const std::size_t g = own ? static_cast<std::size_t>(m) : 0;
          const GeneratorParams& gp = cfg_.modalities[g].gen;
          const double u = unit(rng);
          int tok;
          if (j > 0 && u < gp.p_repeat) {
            tok = tokens[base + j - 1];
          } else if (j >= gp.lag && u < gp.p_repeat + gp.p_copy) {
            tok = tokens[base + j - gp.lag];
          } else {
            tok = draw(g, j == 0 ? -1 : tokens[base + j - 1], rng);
          }
          tokens[base + j] = tok;
        }
      }
      t += seg;
    }
  }
  ModalityMask mask(b, len, M, std::move(ids));
  std::vector<int> targets = next_token_targets(tokens, mask, cfg_.num_discrete());
  const std::size_t rows = cd == 0 ? 0 : patches.size() / cd;
  Tensor patch_tensor(Shape{rows, cd}, std::move(patches));
  return Batch{std::move(mask), std::move(tokens), std::move(targets), std::move(patch_tensor)};
}

Batch gen_batch(const DataConfig& cfg, std::uint64_t seed, std::uint64_t step) {
  return DataGenerator(cfg).batch(seed, step);
}

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'O', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "batch records assume a little-endian host");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw ValidationError("read_batch: truncated record");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_batch(std::ostream& out, const Batch& batch) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  const std::size_t rows = batch.patches.rank() == 2 ? batch.patches.dim(0) : 0;
  const std::size_t cd = batch.patches.rank() == 2 ? batch.patches.dim(1) : 0;
  put<std::uint64_t>(out, batch.mask.batch());
  put<std::uint64_t>(out, batch.mask.length());
  put<std::uint64_t>(out, batch.mask.num_modalities());
  put<std::uint64_t>(out, rows);
  put<std::uint64_t>(out, cd);
  for (int id : batch.mask.ids()) put<std::int32_t>(out, id);
  for (int tok : batch.tokens) put<std::int32_t>(out, tok);
  for (std::size_t i = 0; i < rows * cd; ++i) put<double>(out, batch.patches[i]);
  if (!out) throw ValidationError("write_batch: stream error");
}

Batch read_batch(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ValidationError("read_batch: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ValidationError("read_batch: unsupported version " + std::to_string(version));
  const auto b = get<std::uint64_t>(in), len = get<std::uint64_t>(in), M = get<std::uint64_t>(in);
  const auto rows = get<std::uint64_t>(in), cd = get<std::uint64_t>(in);
  std::vector<int> ids(b * len), tokens(b * len);
  for (int& v : ids) v = get<std::int32_t>(in);
  for (int& v : tokens) v = get<std::int32_t>(in);
  std::vector<double> patches(rows * cd);
  for (double& v : patches) v = get<double>(in);
  ModalityMask mask(b, len, M, std::move(ids));
  // Targets are derived; continuous modality (if any) is the last id.
  const std::size_t discrete = rows > 0 ? M - 1 : M;
  std::vector<int> targets = next_token_targets(tokens, mask, discrete);
  return Batch{std::move(mask), std::move(tokens), std::move(targets), Tensor(Shape{rows, cd}, std::move(patches))};
}

}  // namespace mom
