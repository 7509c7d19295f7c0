#include "embench/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

#include "embench/error.hpp"
#include "embench/random.hpp"

namespace embench {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', 'V'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& v) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return true;
}

VectorStore load_binary(std::istream& in, const fs::path& path) {
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!get_le(in, version) || !get_le(in, dim) || !get_le(in, count)) {
    throw ValidationError(path.string() + ": truncated header");
  }
  if (version != kVersion) throw ValidationError(path.string() + ": unsupported version " + std::to_string(version));
  if (dim == 0) throw ValidationError(path.string() + ": zero dimension");

  VectorStore store(dim);
  std::vector<float> row(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::string where = path.string() + ": row " + std::to_string(r);
    std::uint32_t key_len = 0;
    if (!get_le(in, key_len)) throw ValidationError(where + ": truncated (expected " + std::to_string(count) + " rows)");
    std::string key(key_len, '\0');
    if (!in.read(key.data(), key_len)) throw ValidationError(where + ": truncated key");
    for (auto& x : row) {
      std::uint32_t bits = 0;
      if (!get_le(in, bits)) throw ValidationError(where + " (\"" + key + "\"): ragged row, fewer than " + std::to_string(dim) + " values");
      x = std::bit_cast<float>(bits);
    }
    try {
      store.add(std::move(key), row);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError(path.string() + ": trailing bytes after " + std::to_string(count) + " rows");
  }
  return store;
}

VectorStore load_jsonl(std::istream& in, const fs::path& path) {
  VectorStore store;
  bool first = true;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string where = path.string() + ": row " + std::to_string(no);
    std::vector<float> values;
    std::string key;
    try {
      Json j = Json::parse(line);
      key = j.at("key").get<std::string>();
      for (const auto& v : j.at("vector")) {
        // JSON has no NaN literal; null stands in for a non-finite entry.
        values.push_back(v.is_null() ? std::numeric_limits<float>::quiet_NaN() : v.get<float>());
      }
    } catch (const Json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (first) {
      if (values.empty()) throw ValidationError(where + ": empty vector");
      store = VectorStore(values.size());
      first = false;
    }
    if (values.size() != store.dim()) {
      throw ValidationError(where + " (\"" + key + "\"): ragged row, " + std::to_string(values.size()) +
                            " values, expected " + std::to_string(store.dim()));
    }
    try {
      store.add(std::move(key), values);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return store;
}

}  // namespace

double l2_norm(std::span<const float> v) noexcept {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const float> v) noexcept {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void normalize_in_place(Embedding& e) {
  const double n = l2_norm(e.values);
  if (!(n > 0.0) || !std::isfinite(n)) throw ProviderError("cannot normalize a zero or non-finite vector");
  for (auto& x : e.values) x = static_cast<float>(x / n);
}

// --- config -------------------------------------------------------------------

void ProviderConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (retry.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  switch (kind) {
    case ProviderKind::Mock:
      if (dim < 2) throw ConfigError("mock provider needs dim >= 2");
      break;
    case ProviderKind::Remote:
      if (endpoint.empty()) throw ConfigError("remote provider needs an endpoint");
      if (dim < 1) throw ConfigError("remote provider needs dim >= 1");
      break;
    case ProviderKind::Precomputed:
      if (path.empty()) throw ConfigError("precomputed provider needs a path");
      break;
  }
}

ProviderConfig ProviderConfig::from_json(const Json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) -> fs::path {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    ProviderConfig cfg;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "mock") {
      cfg.kind = ProviderKind::Mock;
    } else if (kind == "remote") {
      cfg.kind = ProviderKind::Remote;
    } else if (kind == "precomputed") {
      cfg.kind = ProviderKind::Precomputed;
    } else {
      throw ConfigError("unknown provider kind \"" + kind + "\"");
    }
    cfg.dim = j.value("dim", cfg.kind == ProviderKind::Mock ? std::size_t{256} : std::size_t{0});
    cfg.normalize = j.value("normalize", true);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.cache = j.value("cache", false);
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      cfg.retry.max_retries = r.value("max_retries", cfg.retry.max_retries);
      cfg.retry.backoff_base_ms = r.value("backoff_base_ms", cfg.retry.backoff_base_ms);
      cfg.retry.backoff_max_ms = r.value("backoff_max_ms", cfg.retry.backoff_max_ms);
    }
    if (j.contains("path")) cfg.path = resolve(j["path"].get<std::string>());
    cfg.endpoint = j.value("endpoint", "");
    cfg.model = j.value("model", "");
    cfg.auth_token_env = j.value("auth_token_env", "");
    cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("adapter")) cfg.adapter = resolve(j["adapter"].get<std::string>());
    cfg.validate();
    return cfg;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid provider config: ") + e.what());
  }
}

ProviderConfig ProviderConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open provider config " + path.string());
  try {
    return from_json(Json::parse(in), path.parent_path());
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --- mock ---------------------------------------------------------------------

Embedding mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw ProviderError("mock_embed: dim must be >= 2");
  Rng rng(fnv1a64(text) ^ seed);
  Embedding e;
  e.values.resize(dim);
  std::vector<double> draws(dim);
  double sq = 0.0;
  for (auto& d : draws) {
    d = rng.normal();
    sq += d * d;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (std::size_t i = 0; i < dim; ++i) e.values[i] = static_cast<float>(draws[i] * inv);
  return e;
}

MockProvider::MockProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 2) throw ConfigError("mock provider needs dim >= 2");
}

std::vector<Embedding> MockProvider::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embed(t, dim_, seed_));
  return out;
}

// --- vector store ---------------------------------------------------------------

void VectorStore::add(std::string key, std::span<const float> values) {
  if (dim_ == 0) throw ValidationError("vector store has no dimension");
  if (values.size() != dim_) {
    throw ValidationError("dimension " + std::to_string(values.size()) + " != " + std::to_string(dim_));
  }
  if (!all_finite(values)) throw ValidationError("non-finite entry for key \"" + key + "\"");
  if (index_.count(key)) throw ValidationError("duplicate key \"" + key + "\"");
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  data_.insert(data_.end(), values.begin(), values.end());
}

const float* VectorStore::find(std::string_view key) const noexcept {
  auto it = index_.find(std::string(key));
  return it == index_.end() ? nullptr : data_.data() + it->second * dim_;
}

void VectorStore::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(dim_));
  put_le(out, static_cast<std::uint64_t>(keys_.size()));
  for (std::size_t r = 0; r < keys_.size(); ++r) {
    put_le(out, static_cast<std::uint32_t>(keys_[r].size()));
    out.write(keys_[r].data(), static_cast<std::streamsize>(keys_[r].size()));
    for (std::size_t c = 0; c < dim_; ++c) put_le(out, std::bit_cast<std::uint32_t>(data_[r * dim_ + c]));
  }
  if (!out) throw Error("write failed: " + path.string());
}

VectorStore load_precomputed(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open vector file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) return load_binary(in, path);
  in.clear();
  in.seekg(0);
  return load_jsonl(in, path);
}

PrecomputedProvider::PrecomputedProvider(std::shared_ptr<const VectorStore> store, bool normalize)
    : store_(std::move(store)), normalize_(normalize) {
  if (!store_ || store_->dim() == 0) throw ConfigError("precomputed provider needs a non-empty store");
}

std::vector<Embedding> PrecomputedProvider::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const float* row = store_->find(t);
    if (!row) throw ProviderError("no precomputed vector for key \"" + t + "\"");
    Embedding e{std::vector<float>(row, row + store_->dim())};
    if (normalize_) normalize_in_place(e);
    out.push_back(std::move(e));
  }
  return out;
}

// --- cache --------------------------------------------------------------------

CachingProvider::CachingProvider(std::shared_ptr<const EmbeddingProvider> inner) : inner_(std::move(inner)) {}

std::vector<Embedding> CachingProvider::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  {
    std::shared_lock lock(mu_);
    std::unordered_map<std::string_view, std::size_t> first_miss;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (auto it = cache_.find(texts[i]); it != cache_.end()) {
        out[i] = it->second;
      } else if (first_miss.emplace(texts[i], missing.size()).second) {
        missing.push_back(texts[i]);
        missing_at.push_back(i);
      }
    }
  }
  if (missing.empty()) return out;

  auto fresh = inner_->embed_batch(missing);
  if (fresh.size() != missing.size()) throw ProviderError("wrapped provider returned a misaligned batch");
  misses_ += missing.size();
  {
    std::unique_lock lock(mu_);
    for (std::size_t k = 0; k < missing.size(); ++k) cache_.try_emplace(missing[k], fresh[k]);
  }
  std::unordered_map<std::string_view, std::size_t> slot;
  for (std::size_t k = 0; k < missing.size(); ++k) slot.emplace(missing[k], k);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (out[i].values.empty()) out[i] = fresh[slot.at(texts[i])];
  }
  return out;
}

// --- helpers ------------------------------------------------------------------

std::vector<Embedding> embed_all(const EmbeddingProvider& provider, std::span<const std::string> texts,
                                 std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  std::vector<Embedding> out;
  out.reserve(texts.size());
  const std::size_t dim = provider.dim();
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    auto chunk = texts.subspan(start, std::min(batch_size, texts.size() - start));
    auto part = provider.embed_batch(chunk);
    if (part.size() != chunk.size()) {
      throw ProviderError("provider returned " + std::to_string(part.size()) + " vectors for " +
                          std::to_string(chunk.size()) + " texts");
    }
    for (auto& e : part) {
      if (e.dim() != dim) {
        throw ProviderError("provider returned dimension " + std::to_string(e.dim()) + ", expected " +
                            std::to_string(dim));
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace embench
