#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "embench/embedding.hpp"
#include "embench/reformulator.hpp"
#include "embench/task_model.hpp"

namespace embench {

// --- similarity ---------------------------------------------------------------

// Cosine similarity in double precision. Throws ValidationError on a
// dimension mismatch or a zero-norm input.
double cosine(std::span<const float> u, std::span<const float> v);
inline double cosine(const Embedding& u, const Embedding& v) { return cosine(u.values, v.values); }

struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;  // row-major

  double at(std::size_t r, std::size_t c) const { return scores[r * cols + c]; }
};

// scores[i][j] = cosine(queries[i], candidates[j]), computed over
// pre-normalized rows in cache-sized tiles.
SimilarityMatrix similarity_matrix(std::span<const Embedding> queries, std::span<const Embedding> candidates);

// --- ranking metrics ----------------------------------------------------------

// Mean over relevant positions p of precision@p. Throws ValidationError
// when no entry is relevant.
double average_precision(const std::vector<bool>& ranking);

// DCG@k with unit gains and 1/log2(rank+1) discount, normalized by the ideal
// DCG@k. Returns 0 for an empty relevant set.
double ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k);

double recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k);

struct ThresholdAccuracy {
  double accuracy = 0.0;
  double threshold = 0.0;  // predict "match" when similarity > threshold
};

// Best accuracy over thresholds at the midpoints between consecutive
// distinct similarities plus the two infinite sentinels. Throws
// ValidationError unless both classes are present.
ThresholdAccuracy best_threshold_accuracy(std::span<const double> similarities, const std::vector<bool>& is_match);

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// --- evaluation ---------------------------------------------------------------

struct EvalReport {
  std::string task_name;
  TaskCategory category = TaskCategory::Classification;
  std::string metric_name;
  double value = 0.0;
  double random_baseline = 0.0;
  std::size_t n_examples = 0;
  // Extra metrics, e.g. "recall_at_10" for retrieval.
  std::map<std::string, double> secondary;
  // Non-empty when the task failed; value is then meaningless.
  std::string error;

  bool failed() const noexcept { return !error.empty(); }
};

struct EvalOptions {
  std::string task_name;
  std::size_t batch_size = 64;
  LabelRender label_render = LabelRender::Plain;
  // Needed for LabelRender::WithExplanation.
  std::vector<LabelSpec> label_specs;
  std::size_t k = 10;
  bool symmetric_bitext = false;
};

EvalReport eval_classification(const std::vector<ClassificationExample>& examples,
                               const EmbeddingProvider& provider, const EvalOptions& opts = {});
EvalReport eval_reranking(const std::vector<RerankingExample>& examples, const EmbeddingProvider& provider,
                          const EvalOptions& opts = {});
EvalReport eval_retrieval(const RetrievalTask& task, const EmbeddingProvider& provider,
                          const EvalOptions& opts = {});
EvalReport eval_pairwise(const std::vector<PairExample>& pairs, const EmbeddingProvider& provider,
                         const EvalOptions& opts = {});
EvalReport eval_bitext(const std::vector<BitextExample>& examples, const EmbeddingProvider& provider,
                       const EvalOptions& opts = {});

// --- random baselines ---------------------------------------------------------

struct BaselineParams {
  std::size_t k = 0;            // classification: number of labels
  std::size_t n = 0;            // bitext pairs, or retrieval corpus size
  std::size_t positives = 0;    // reranking
  std::size_t negatives = 0;    // reranking
  std::size_t matches = 0;      // pairwise
  std::size_t non_matches = 0;  // pairwise
  std::size_t top_k = 10;       // retrieval cutoff
};

// Expected score of a uniformly random ranker / classifier. For retrieval
// the value is the expected recall@k = k/n. Throws ValidationError on
// parameters that do not fit the category.
double random_baseline(TaskCategory category, const BaselineParams& params);

// Expected AP of a uniformly random ordering of `positives` relevant and
// `negatives` irrelevant candidates. Exact enumeration up to 6 candidates,
// otherwise a fixed-seed Monte Carlo estimate over 100000 orderings.
double expected_random_ap(std::size_t positives, std::size_t negatives);

}  // namespace embench
