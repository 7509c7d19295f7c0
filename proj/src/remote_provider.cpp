#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "embench/embedding.hpp"
#include "embench/error.hpp"
#include "embench/random.hpp"
#include "httplib.h"

namespace embench {

namespace {

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

RemoteProvider::RemoteProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.kind = ProviderKind::Remote;
  cfg_.validate();

  // Split "http://host:port/prefix" into the client origin and path prefix.
  const auto scheme_end = cfg_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint needs a scheme: " + cfg_.endpoint);
  if (cfg_.endpoint.compare(0, scheme_end, "http") != 0) {
    throw ConfigError("only http endpoints are supported: " + cfg_.endpoint);
  }
  const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.endpoint.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = cfg_.endpoint.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();

  if (!cfg_.auth_token_env.empty()) {
    const char* tok = std::getenv(cfg_.auth_token_env.c_str());
    if (!tok) throw ConfigError("environment variable " + cfg_.auth_token_env + " is not set");
    token_ = tok;
  }
}

std::vector<Embedding> RemoteProvider::post_chunk(std::span<const std::string> texts,
                                                  std::uint64_t jitter_seed) const {
  Json body{{"model", cfg_.model}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const std::string payload = body.dump();

  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  Rng jitter(jitter_seed);
  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      const double base = std::min<double>(cfg_.retry.backoff_max_ms,
                                           cfg_.retry.backoff_base_ms * std::pow(2.0, attempt - 1));
      const double factor = 0.8 + 0.4 * jitter.uniform();
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(base * factor)));
    }
    ++attempts_;
    auto res = client.Post(path_prefix_ + "/embed", headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (retryable(res->status)) continue;
      throw TransportError("embedding request rejected: " + last_error, last_status);
    }

    std::vector<Embedding> out;
    try {
      Json j = Json::parse(res->body);
      const auto& rows = j.at("embeddings");
      if (rows.size() != texts.size()) {
        throw ProviderError("server returned " + std::to_string(rows.size()) + " embeddings for " +
                            std::to_string(texts.size()) + " texts");
      }
      for (const auto& row : rows) out.push_back(Embedding{row.get<std::vector<float>>()});
    } catch (const Json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
    for (auto& e : out) {
      if (e.dim() != cfg_.dim) {
        throw ProviderError("server returned dimension " + std::to_string(e.dim()) + ", expected " +
                            std::to_string(cfg_.dim));
      }
      if (!all_finite(e.values)) throw ProviderError("server returned a non-finite value");
      if (cfg_.normalize) normalize_in_place(e);
    }
    return out;
  }
  throw TransportError("embedding request failed after " + std::to_string(cfg_.retry.max_retries + 1) +
                           " attempts: " + last_error,
                       last_status);
}

std::vector<Embedding> RemoteProvider::embed_batch(std::span<const std::string> texts) const {
  const std::size_t n_chunks = (texts.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  std::vector<std::vector<Embedding>> parts(n_chunks);

  // Each worker owns one in-flight request at a time, so the worker count
  // bounds concurrency.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t c; (c = next++) < n_chunks;) {
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      try {
        const std::size_t start = c * cfg_.batch_size;
        parts[c] = post_chunk(texts.subspan(start, std::min(cfg_.batch_size, texts.size() - start)),
                              cfg_.seed ^ (c + 1));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(cfg_.max_in_flight, n_chunks);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (auto& p : parts) {
    for (auto& e : p) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace embench
