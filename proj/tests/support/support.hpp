#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include "embench/embedding.hpp"
#include "embench/error.hpp"
#include "embench/random.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("embench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

// Looks texts up in a fixed table; unknown texts are an error.
class TableProvider final : public embench::EmbeddingProvider {
 public:
  explicit TableProvider(std::size_t dim) : dim_(dim) {}

  void set(const std::string& text, std::vector<float> v) {
    if (v.size() != dim_) throw std::logic_error("TableProvider: wrong dim");
    table_[text] = std::move(v);
  }

  std::size_t dim() const override { return dim_; }
  std::vector<embench::Embedding> embed_batch(std::span<const std::string> texts) const override {
    std::vector<embench::Embedding> out;
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end()) throw embench::ProviderError("no vector for \"" + t + "\"");
      out.push_back({it->second});
    }
    return out;
  }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<float>> table_;
};

// Every text maps onto a basis direction chosen by a key function, plus a
// small deterministic perturbation. Texts with the same key embed almost
// identically; different keys are orthogonal.
template <typename KeyFn>
class KeyedProvider final : public embench::EmbeddingProvider {
 public:
  KeyedProvider(std::size_t dim, KeyFn key, double noise = 0.0) : dim_(dim), key_(key), noise_(noise) {}

  std::size_t dim() const override { return dim_; }
  std::vector<embench::Embedding> embed_batch(std::span<const std::string> texts) const override {
    std::vector<embench::Embedding> out;
    for (const auto& t : texts) {
      embench::Embedding e;
      e.values.assign(dim_, 0.0f);
      e.values[key_(t) % dim_] = 1.0f;
      if (noise_ > 0.0) {
        embench::Rng rng(embench::fnv1a64(t));
        for (auto& x : e.values) x += static_cast<float>(noise_ * rng.normal());
      }
      out.push_back(std::move(e));
    }
    return out;
  }

 private:
  std::size_t dim_;
  KeyFn key_;
  double noise_;
};

inline std::vector<float> random_vector(embench::Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// Printable text with a few multi-byte characters and JSON-special bytes.
inline std::string random_text(embench::Rng& rng, std::size_t max_len = 24) {
  static const std::vector<std::string> pieces{"a", "b", "z", " ", "\"", "\\", "\n", "\t", "é", "日本", "0", "{", "}", "-"};
  std::string s;
  const std::size_t n = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
  return s;
}

}  // namespace testsupport
