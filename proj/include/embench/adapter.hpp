#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "embench/embedding.hpp"
#include "embench/task_model.hpp"

namespace embench {

// Linear map e -> W e + b over frozen base embeddings. W is d_out x d_in,
// row-major. Parameters are held in double so gradient checks are
// meaningful; checkpoints store them as float32.
struct AdapterParams {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::vector<double> W;
  std::vector<double> b;

  AdapterParams() = default;
  AdapterParams(std::size_t in, std::size_t out) : d_in(in), d_out(out), W(in * out, 0.0), b(out, 0.0) {}

  double& w(std::size_t r, std::size_t c) { return W[r * d_in + c]; }
  double w(std::size_t r, std::size_t c) const { return W[r * d_in + c]; }

  std::size_t size() const noexcept { return W.size() + b.size(); }
  // Flat view: W entries first, then b.
  double& param(std::size_t i) { return i < W.size() ? W[i] : b[i - W.size()]; }
  double param(std::size_t i) const { return i < W.size() ? W[i] : b[i - W.size()]; }

  // Throws ValidationError on non-finite entries, d_out < 2 or shape
  // mismatches.
  void validate() const;

  // Truncated identity when d_out <= d_in, zero-padded identity otherwise.
  static AdapterParams identity(std::size_t d_in, std::size_t d_out);
  // Gaussian entries with std 1/sqrt(d_in), zero bias.
  static AdapterParams random(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

  bool operator==(const AdapterParams&) const = default;
};

// normalize(W e + b). Throws ValidationError on a dimension mismatch and
// ProviderError when the pre-normalization vector is zero.
Embedding project(const AdapterParams& params, const Embedding& e);

// Binary checkpoint, little-endian: magic "EMBA", u32 version (1),
// u32 d_in, u32 d_out, then W row-major and b as f32.
void save_checkpoint(const std::filesystem::path& path, const AdapterParams& params);
AdapterParams load_checkpoint(const std::filesystem::path& path);

// Base provider followed by the adapter projection.
class AdapterProvider final : public EmbeddingProvider {
 public:
  AdapterProvider(std::shared_ptr<const EmbeddingProvider> base, AdapterParams params);

  std::size_t dim() const override { return params_.d_out; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const EmbeddingProvider> base_;
  AdapterParams params_;
};

// --- contrastive objective ----------------------------------------------------

enum class LrSchedule { Constant, LinearDecay };
enum class AdapterInit { Identity, Random };

struct TrainConfig {
  double temperature = 0.05;
  double learning_rate = 1e-4;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  bool bidirectional = true;
  bool in_batch_negatives = true;
  bool unmixed_batches = true;
  std::uint64_t seed = 0;
  std::size_t warmup_steps = 0;
  LrSchedule lr_schedule = LrSchedule::LinearDecay;
  double momentum = 0.0;
  // Adapter shape and initialization; d_out = 0 means d_in.
  std::size_t d_out = 0;
  AdapterInit init = AdapterInit::Identity;
  // Texts per embedding request during pre-computation.
  std::size_t embed_batch_size = 256;

  // Throws ConfigError on violated invariants.
  void validate() const;

  // Learning rate at 0-based step t: linear warmup to learning_rate over
  // warmup_steps, then constant or linearly decayed to zero at `steps`.
  double lr_at(std::size_t t) const;

  static TrainConfig from_json(const Json& j);
  static TrainConfig load(const std::filesystem::path& path);
};

// Base embeddings of one triplet.
struct TripletEmbeddings {
  std::vector<double> query;
  std::vector<double> positive;
  std::vector<std::vector<double>> negatives;
};

struct LossAndGrad {
  double loss = 0.0;
  AdapterParams grad;  // same shape as the params
};

// Softmax cross-entropy over temperature-scaled cosines of projected
// vectors.
//
// Forward term for triplet i: the query's own positive against its
// same-uid negatives and, with in-batch negatives, the other triplets'
// positives. Backward term (bidirectional): the positive target picks its
// query against the same-uid negatives and, with in-batch negatives, the
// other triplets' queries. Batch loss is the mean over triplets; with
// bidirectional it is the average of the two directions.
//
// Throws ConfigError when temperature <= 0 and ValidationError on an empty
// batch or a triplet without negatives.
LossAndGrad contrastive_loss(std::span<const TripletEmbeddings> batch, const AdapterParams& params,
                             const TrainConfig& cfg, bool with_grad = true);

// Central differences on every W and b coordinate. Returns
// max |g_analytic - g_fd| / max(1e-8, |g_fd|).
double finite_diff_check(const AdapterParams& params, std::span<const TripletEmbeddings> batch,
                         const TrainConfig& cfg, double h = 1e-4);

// --- training -----------------------------------------------------------------

struct TrainStep {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<TrainStep> steps;
};

struct TrainResult {
  AdapterParams params;
  TrainHistory history;
};

// Embeds every distinct triplet text once through `base`, then runs
// cfg.steps SGD steps. Deterministic for a given seed. With
// unmixed_batches every batch holds triplets of a single source tag.
TrainResult train(const std::vector<TripletRecord>& triplets, const EmbeddingProvider& base, const TrainConfig& cfg);

// Same, starting from explicit parameters.
TrainResult train(const std::vector<TripletRecord>& triplets, const EmbeddingProvider& base, const TrainConfig& cfg,
                  AdapterParams init);

void write_history(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace embench
