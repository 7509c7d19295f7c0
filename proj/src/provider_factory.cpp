#include "embench/adapter.hpp"
#include "embench/embedding.hpp"
#include "embench/error.hpp"

namespace embench {

std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
  cfg.validate();
  std::shared_ptr<const EmbeddingProvider> p;
  switch (cfg.kind) {
    case ProviderKind::Mock:
      p = std::make_shared<MockProvider>(cfg.dim, cfg.seed);
      break;
    case ProviderKind::Precomputed: {
      auto store = std::make_shared<VectorStore>(load_precomputed(cfg.path));
      if (cfg.dim != 0 && cfg.dim != store->dim()) {
        throw ProviderError("vector file dimension " + std::to_string(store->dim()) + " != configured dim " +
                            std::to_string(cfg.dim));
      }
      p = std::make_shared<PrecomputedProvider>(std::move(store), cfg.normalize);
      break;
    }
    case ProviderKind::Remote:
      p = std::make_shared<RemoteProvider>(cfg);
      break;
  }
  if (cfg.cache) p = std::make_shared<CachingProvider>(std::move(p));
  if (!cfg.adapter.empty()) p = std::make_shared<AdapterProvider>(std::move(p), load_checkpoint(cfg.adapter));
  return p;
}

}  // namespace embench
