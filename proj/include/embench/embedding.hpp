#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embench/task_model.hpp"

namespace embench {

// Dense float vector. The dimension is the vector's size.
struct Embedding {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

double l2_norm(std::span<const float> v) noexcept;
// Scales to unit L2 norm (computed in double). Throws ProviderError on a
// zero or non-finite vector.
void normalize_in_place(Embedding& e);
bool all_finite(std::span<const float> v) noexcept;

enum class ProviderKind { Precomputed, Remote, Mock };

struct RetryPolicy {
  int max_retries = 3;
  int backoff_base_ms = 100;
  int backoff_max_ms = 5000;
};

struct ProviderConfig {
  ProviderKind kind = ProviderKind::Mock;
  std::size_t dim = 256;
  bool normalize = true;
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  bool cache = false;

  // Precomputed
  std::filesystem::path path;

  // Remote
  std::string endpoint;  // e.g. "http://localhost:8080" or "http://host/v1"
  std::string model;
  std::string auth_token_env;
  int timeout_ms = 30000;

  // Mock
  std::uint64_t seed = 0;

  // Optional adapter checkpoint applied on top of the base source.
  std::filesystem::path adapter;

  // Throws ConfigError on violated invariants.
  void validate() const;

  static ProviderConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static ProviderConfig load(const std::filesystem::path& path);
};

// Uniform interface over embedding sources. Implementations are safe to
// call concurrently from several threads. Output i depends only on text i.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dim() const = 0;
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const = 0;

  Embedding embed(const std::string& text) const {
    return std::move(embed_batch(std::span<const std::string>(&text, 1)).front());
  }
};

// Deterministic pseudo-random unit vector: generator seeded with
// fnv1a64(text) ^ seed, dim standard-normal draws, L2-normalized.
// Throws ProviderError when dim < 2.
Embedding mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

class MockProvider final : public EmbeddingProvider {
 public:
  MockProvider(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Key -> vector table with a fixed dimension. Loaded from the binary vector
// file format or from JSON lines ({"key": ..., "vector": [...]}).
//
// Binary layout (little-endian): magic "EMBV", u32 version (1), u32 dim,
// u64 count, then per row: u32 key length, key bytes, dim f32 values.
class VectorStore {
 public:
  VectorStore() = default;
  explicit VectorStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return keys_.size(); }

  // Throws ValidationError on a duplicate key, wrong dimension, or
  // non-finite entry.
  void add(std::string key, std::span<const float> values);
  const float* find(std::string_view key) const noexcept;

  const std::vector<std::string>& keys() const noexcept { return keys_; }

  void save(const std::filesystem::path& path) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Throws ValidationError naming the row on ragged/truncated rows, non-finite
// entries, or duplicate keys.
VectorStore load_precomputed(const std::filesystem::path& path);

class PrecomputedProvider final : public EmbeddingProvider {
 public:
  PrecomputedProvider(std::shared_ptr<const VectorStore> store, bool normalize);

  std::size_t dim() const override { return store_->dim(); }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const VectorStore> store_;
  bool normalize_;
};

// HTTP client for POST {endpoint}/embed with body
// {"model": ..., "texts": [...]} answering {"embeddings": [[...], ...]}.
// Texts are split into batch_size chunks, up to max_in_flight of which are
// outstanding at once. Transport failures, 429 and 5xx responses are
// retried with exponential backoff and jitter.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(ProviderConfig cfg);

  std::size_t dim() const override { return cfg_.dim; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

  // Number of HTTP attempts made so far, including retries.
  std::size_t attempts() const noexcept { return attempts_.load(); }

 private:
  std::vector<Embedding> post_chunk(std::span<const std::string> texts, std::uint64_t jitter_seed) const;

  ProviderConfig cfg_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string token_;
  mutable std::atomic<std::size_t> attempts_{0};
};

// Memoizes another provider by text. Concurrent lookups share a reader
// lock; insertion takes the writer lock. Returned vectors are identical to
// the wrapped provider's.
class CachingProvider final : public EmbeddingProvider {
 public:
  explicit CachingProvider(std::shared_ptr<const EmbeddingProvider> inner);

  std::size_t dim() const override { return inner_->dim(); }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

  // Texts forwarded to the wrapped provider so far.
  std::size_t misses() const noexcept { return misses_.load(); }

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::shared_mutex mu_;
  mutable std::unordered_map<std::string, Embedding> cache_;
  mutable std::atomic<std::size_t> misses_{0};
};

// Builds the configured provider, wrapped in a cache and an adapter when
// requested.
std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderConfig& cfg);

// Embeds every text through `provider` in batch_size chunks and checks
// alignment and dimension. Throws ProviderError on mismatches.
std::vector<Embedding> embed_all(const EmbeddingProvider& provider, std::span<const std::string> texts,
                                 std::size_t batch_size = 256);

}  // namespace embench
