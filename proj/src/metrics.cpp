#include "embench/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "embench/error.hpp"
#include "embench/random.hpp"

namespace embench {

namespace {

constexpr std::size_t kTile = 64;

// Rows scaled to unit norm in double precision.
struct UnitRows {
  std::size_t dim = 0;
  std::vector<double> data;

  explicit UnitRows(std::span<const Embedding> rows) {
    if (rows.empty()) return;
    dim = rows.front().dim();
    data.resize(rows.size() * dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].dim() != dim) throw ValidationError("embeddings have inconsistent dimensions");
      const double n = l2_norm(rows[r].values);
      if (!(n > 0.0)) throw ValidationError("zero-norm embedding at row " + std::to_string(r));
      for (std::size_t c = 0; c < dim; ++c) data[r * dim + c] = rows[r].values[c] / n;
    }
  }

  const double* row(std::size_t r) const { return data.data() + r * dim; }

  double dot(std::size_t a, const UnitRows& other, std::size_t b) const {
    const double* x = row(a);
    const double* y = other.row(b);
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) s += x[c] * y[c];
    return s;
  }
};

// Unique texts of one evaluation, each remembering the first example that
// asked for it so provider errors can name an example.
class TextPool {
 public:
  std::size_t add(const std::string& text, const std::string& owner) {
    auto [it, inserted] = index_.try_emplace(text, texts_.size());
    if (inserted) {
      texts_.push_back(text);
      owners_.push_back(owner);
    }
    return it->second;
  }

  UnitRows embed(const EmbeddingProvider& provider, std::size_t batch_size) const {
    std::vector<Embedding> out;
    out.reserve(texts_.size());
    const std::size_t step = std::max<std::size_t>(batch_size, 1);
    for (std::size_t start = 0; start < texts_.size(); start += step) {
      const std::size_t len = std::min(step, texts_.size() - start);
      std::span<const std::string> chunk(texts_.data() + start, len);
      try {
        for (auto& e : embed_all(provider, chunk, len)) out.push_back(std::move(e));
      } catch (const TransportError& e) {
        throw TransportError(std::string(e.what()) + " (example " + owners_[start] + ")", e.last_status());
      } catch (const ProviderError& e) {
        throw ProviderError(std::string(e.what()) + " (example " + owners_[start] + ")");
      }
    }
    return UnitRows(out);
  }

 private:
  std::vector<std::string> texts_;
  std::vector<std::string> owners_;
  std::unordered_map<std::string, std::size_t> index_;
};

EvalReport make_report(const EvalOptions& opts, TaskCategory category, std::string metric) {
  EvalReport r;
  r.task_name = opts.task_name;
  r.category = category;
  r.metric_name = std::move(metric);
  return r;
}

// Ranking order: score descending, ties by original position.
std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

// --- similarity ---------------------------------------------------------------

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine: dimension mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    uu += static_cast<double>(u[i]) * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw ValidationError("cosine: zero-norm input");
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

SimilarityMatrix similarity_matrix(std::span<const Embedding> queries, std::span<const Embedding> candidates) {
  UnitRows q(queries), c(candidates);
  if (!queries.empty() && !candidates.empty() && q.dim != c.dim) {
    throw ValidationError("similarity_matrix: dimension mismatch " + std::to_string(q.dim) + " vs " +
                          std::to_string(c.dim));
  }
  SimilarityMatrix m{queries.size(), candidates.size(), std::vector<double>(queries.size() * candidates.size())};
  for (std::size_t r0 = 0; r0 < m.rows; r0 += kTile) {
    const std::size_t r1 = std::min(m.rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < m.cols; c0 += kTile) {
      const std::size_t c1 = std::min(m.cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t j = c0; j < c1; ++j) m.scores[r * m.cols + j] = q.dot(r, c, j);
      }
    }
  }
  return m;
}

// --- ranking metrics ----------------------------------------------------------

double average_precision(const std::vector<bool>& ranking) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < ranking.size(); ++p) {
    if (ranking[p]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(p + 1);
    }
  }
  if (hits == 0) throw ValidationError("average_precision: no relevant entry");
  return sum / static_cast<double>(hits);
}

double ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k) {
  if (k == 0) throw ValidationError("ndcg_at_k: k must be >= 1");
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (relevant.count(ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

double recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k) {
  if (relevant.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) hits += relevant.count(ranking[i]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

ThresholdAccuracy best_threshold_accuracy(std::span<const double> similarities, const std::vector<bool>& is_match) {
  if (similarities.size() != is_match.size()) throw ValidationError("similarities and labels differ in length");
  const std::size_t n = similarities.size();
  const auto n_match = static_cast<std::size_t>(std::count(is_match.begin(), is_match.end(), true));
  if (n_match == 0 || n_match == n) throw ValidationError("pairwise evaluation needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return similarities[a] < similarities[b]; });

  // Sweep the threshold upward from -inf (everything predicted a match).
  // Crossing a group of equal similarities flips those predictions.
  long correct = static_cast<long>(n_match);
  long best = correct;
  double best_threshold = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    const double s = similarities[order[i]];
    while (j < n && similarities[order[j]] == s) {
      correct += is_match[order[j]] ? -1 : 1;
      ++j;
    }
    if (correct > best) {
      best = correct;
      best_threshold = j < n ? 0.5 * (s + similarities[order[j]]) : std::numeric_limits<double>::infinity();
    }
    i = j;
  }
  return {static_cast<double>(best) / static_cast<double>(n), best_threshold};
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// --- evaluation ---------------------------------------------------------------

EvalReport eval_classification(const std::vector<ClassificationExample>& examples, const EmbeddingProvider& provider,
                               const EvalOptions& opts) {
  if (examples.empty()) throw ValidationError("eval_classification: no examples");
  std::unordered_map<std::string, const LabelSpec*> specs;
  for (const auto& s : opts.label_specs) specs.emplace(s.label, &s);

  TextPool pool;
  std::vector<std::size_t> input_idx(examples.size());
  std::vector<std::vector<std::size_t>> label_idx(examples.size());
  double baseline = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (auto msg = check(ex); !msg.empty()) throw ValidationError(ex.id + ": " + msg);
    input_idx[i] = pool.add(ex.input_text, ex.id);
    for (const auto& label : ex.candidate_labels) {
      std::string text = label;
      if (opts.label_render == LabelRender::WithExplanation) {
        auto it = specs.find(label);
        if (it == specs.end()) throw ConfigError("no label spec for \"" + label + "\"");
        text = render_label(*it->second, LabelRender::WithExplanation);
      }
      label_idx[i].push_back(pool.add(text, ex.id));
    }
    baseline += 1.0 / static_cast<double>(ex.candidate_labels.size());
  }
  const UnitRows unit = pool.embed(provider, opts.batch_size);

  std::size_t correct = 0;
  std::vector<double> scores;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    scores.clear();
    for (std::size_t li : label_idx[i]) scores.push_back(unit.dot(input_idx[i], unit, li));
    if (argmax(scores) == examples[i].gold_index) ++correct;
  }

  EvalReport r = make_report(opts, TaskCategory::Classification, "accuracy");
  r.n_examples = examples.size();
  r.value = static_cast<double>(correct) / static_cast<double>(examples.size());
  r.random_baseline = baseline / static_cast<double>(examples.size());
  return r;
}

EvalReport eval_reranking(const std::vector<RerankingExample>& examples, const EmbeddingProvider& provider,
                          const EvalOptions& opts) {
  if (examples.empty()) throw ValidationError("eval_reranking: no examples");
  TextPool pool;
  std::vector<std::size_t> query_idx(examples.size());
  std::vector<std::vector<std::size_t>> cand_idx(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (auto msg = check(ex); !msg.empty()) throw ValidationError(ex.id + ": " + msg);
    query_idx[i] = pool.add(ex.query, ex.id);
    for (const auto& p : ex.positives) cand_idx[i].push_back(pool.add(p, ex.id));
    for (const auto& n : ex.negatives) cand_idx[i].push_back(pool.add(n, ex.id));
  }
  const UnitRows unit = pool.embed(provider, opts.batch_size);

  std::map<std::pair<std::size_t, std::size_t>, double> baseline_cache;
  double map_sum = 0.0, baseline = 0.0;
  std::vector<double> scores;
  std::vector<bool> relevance;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::size_t n_pos = examples[i].positives.size();
    scores.clear();
    for (std::size_t ci : cand_idx[i]) scores.push_back(unit.dot(query_idx[i], unit, ci));
    relevance.clear();
    for (std::size_t c : rank_order(scores)) relevance.push_back(c < n_pos);
    map_sum += average_precision(relevance);

    auto key = std::make_pair(n_pos, examples[i].negatives.size());
    auto it = baseline_cache.find(key);
    if (it == baseline_cache.end()) it = baseline_cache.emplace(key, expected_random_ap(key.first, key.second)).first;
    baseline += it->second;
  }

  EvalReport r = make_report(opts, TaskCategory::Reranking, "map");
  r.n_examples = examples.size();
  r.value = map_sum / static_cast<double>(examples.size());
  r.random_baseline = baseline / static_cast<double>(examples.size());
  return r;
}

EvalReport eval_retrieval(const RetrievalTask& task, const EmbeddingProvider& provider, const EvalOptions& opts) {
  if (auto errs = check(task); !errs.empty()) throw ValidationError(errs.front());
  if (task.queries.empty()) throw ValidationError("eval_retrieval: no queries");
  if (task.corpus.empty()) throw ValidationError("eval_retrieval: empty corpus");
  if (opts.k == 0) throw ValidationError("eval_retrieval: k must be >= 1");

  TextPool qpool, dpool;
  std::vector<std::size_t> qrow, drow;
  for (const auto& q : task.queries) qrow.push_back(qpool.add(q.text, q.query_id));
  for (const auto& d : task.corpus) drow.push_back(dpool.add(d.text, d.doc_id));
  const UnitRows qu = qpool.embed(provider, opts.batch_size);
  const UnitRows du = dpool.embed(provider, opts.batch_size);

  const std::size_t k = std::min(opts.k, task.corpus.size());
  static const std::set<std::string> kNone;
  double ndcg_sum = 0.0, recall_sum = 0.0;
  std::size_t unjudged = 0;
  std::vector<double> scores(task.corpus.size());
  std::vector<std::size_t> order(task.corpus.size());
  std::vector<std::string> top;
  for (std::size_t qn = 0; qn < task.queries.size(); ++qn) {
    const auto& q = task.queries[qn];
    for (std::size_t d = 0; d < task.corpus.size(); ++d) scores[d] = qu.dot(qrow[qn], du, drow[d]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    });
    top.clear();
    for (std::size_t i = 0; i < k; ++i) top.push_back(task.corpus[order[i]].doc_id);

    auto it = task.qrels.find(q.query_id);
    const auto& relevant = it == task.qrels.end() ? kNone : it->second;
    if (relevant.empty()) ++unjudged;
    ndcg_sum += ndcg_at_k(top, relevant, opts.k);
    recall_sum += recall_at_k(top, relevant, opts.k);
  }

  const double n = static_cast<double>(task.queries.size());
  EvalReport r = make_report(opts, TaskCategory::Retrieval, "ndcg_at_" + std::to_string(opts.k));
  r.n_examples = task.queries.size();
  r.value = ndcg_sum / n;
  r.secondary["recall_at_" + std::to_string(opts.k)] = recall_sum / n;
  if (unjudged > 0) r.secondary["queries_without_relevant"] = static_cast<double>(unjudged);
  BaselineParams bp;
  bp.n = task.corpus.size();
  bp.top_k = opts.k;
  r.random_baseline = random_baseline(TaskCategory::Retrieval, bp);
  return r;
}

EvalReport eval_pairwise(const std::vector<PairExample>& pairs, const EmbeddingProvider& provider,
                         const EvalOptions& opts) {
  if (pairs.empty()) throw ValidationError("eval_pairwise: no pairs");
  TextPool pool;
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  std::vector<bool> is_match;
  std::size_t matches = 0;
  for (const auto& p : pairs) {
    if (auto msg = check(p); !msg.empty()) throw ValidationError(p.id + ": " + msg);
    idx.emplace_back(pool.add(p.text_a, p.id), pool.add(p.text_b, p.id));
    is_match.push_back(p.is_match);
    matches += p.is_match ? 1 : 0;
  }
  if (matches == 0 || matches == pairs.size()) throw ValidationError("eval_pairwise: both classes must be present");
  const UnitRows unit = pool.embed(provider, opts.batch_size);

  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const auto& [a, b] : idx) sims.push_back(unit.dot(a, unit, b));
  const auto best = best_threshold_accuracy(sims, is_match);

  EvalReport r = make_report(opts, TaskCategory::PairwiseClassification, "max_accuracy");
  r.n_examples = pairs.size();
  r.value = best.accuracy;
  r.secondary["threshold"] = best.threshold;
  BaselineParams bp;
  bp.matches = matches;
  bp.non_matches = pairs.size() - matches;
  r.random_baseline = random_baseline(TaskCategory::PairwiseClassification, bp);
  return r;
}

EvalReport eval_bitext(const std::vector<BitextExample>& examples, const EmbeddingProvider& provider,
                       const EvalOptions& opts) {
  if (examples.size() < 2) throw ValidationError("eval_bitext: needs at least 2 examples");
  std::vector<std::string> sources, targets;
  for (const auto& ex : examples) {
    if (auto msg = check(ex); !msg.empty()) throw ValidationError(ex.id + ": " + msg);
    sources.push_back(ex.source_text);
    targets.push_back(ex.target_text);
  }
  std::vector<Embedding> src, tgt;
  try {
    src = embed_all(provider, sources, opts.batch_size);
    tgt = embed_all(provider, targets, opts.batch_size);
  } catch (const TransportError& e) {
    throw TransportError(std::string(e.what()) + " (task " + opts.task_name + ")", e.last_status());
  } catch (const ProviderError& e) {
    throw ProviderError(std::string(e.what()) + " (task " + opts.task_name + ")");
  }
  const SimilarityMatrix m = similarity_matrix(src, tgt);

  std::size_t forward = 0, backward = 0;
  std::vector<double> col(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    if (argmax(std::span<const double>(m.scores.data() + i * m.cols, m.cols)) == i) ++forward;
  }
  const double n = static_cast<double>(examples.size());
  double value = static_cast<double>(forward) / n;
  if (opts.symmetric_bitext) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      for (std::size_t i = 0; i < m.rows; ++i) col[i] = m.at(i, j);
      if (argmax(col) == j) ++backward;
    }
    value = 0.5 * (value + static_cast<double>(backward) / n);
  }

  EvalReport r = make_report(opts, TaskCategory::BitextMining, "accuracy");
  r.n_examples = examples.size();
  r.value = value;
  BaselineParams bp;
  bp.n = examples.size();
  r.random_baseline = random_baseline(TaskCategory::BitextMining, bp);
  return r;
}

// --- random baselines ---------------------------------------------------------

double expected_random_ap(std::size_t positives, std::size_t negatives) {
  if (positives == 0) throw ValidationError("expected_random_ap: needs at least one positive");
  const std::size_t c = positives + negatives;
  std::vector<bool> ranking(c);
  if (c <= 6) {
    double sum = 0.0;
    std::size_t count = 0;
    for (unsigned mask = 0; mask < (1u << c); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != positives) continue;
      for (std::size_t i = 0; i < c; ++i) ranking[i] = (mask >> i) & 1u;
      sum += average_precision(ranking);
      ++count;
    }
    return sum / static_cast<double>(count);
  }
  constexpr std::size_t kSamples = 100000;
  Rng rng(0x7a11e5u);
  std::fill(ranking.begin(), ranking.begin() + static_cast<long>(positives), true);
  std::vector<bool> shuffled = ranking;
  double sum = 0.0;
  for (std::size_t s = 0; s < kSamples; ++s) {
    for (std::size_t i = c; i > 1; --i) {
      const std::size_t j = rng.below(i);
      const bool tmp = shuffled[i - 1];
      shuffled[i - 1] = shuffled[j];
      shuffled[j] = tmp;
    }
    sum += average_precision(shuffled);
  }
  return sum / static_cast<double>(kSamples);
}

double random_baseline(TaskCategory category, const BaselineParams& p) {
  switch (category) {
    case TaskCategory::Classification:
      if (p.k < 2) throw ValidationError("classification baseline needs k >= 2");
      return 1.0 / static_cast<double>(p.k);
    case TaskCategory::Reranking:
      if (p.positives < 1) throw ValidationError("reranking baseline needs at least one positive");
      return expected_random_ap(p.positives, p.negatives);
    case TaskCategory::Retrieval:
      if (p.n < 1 || p.top_k < 1) throw ValidationError("retrieval baseline needs n >= 1 and k >= 1");
      return std::min(1.0, static_cast<double>(p.top_k) / static_cast<double>(p.n));
    case TaskCategory::PairwiseClassification: {
      const std::size_t total = p.matches + p.non_matches;
      if (total == 0) throw ValidationError("pairwise baseline needs at least one pair");
      return static_cast<double>(std::max(p.matches, p.non_matches)) / static_cast<double>(total);
    }
    case TaskCategory::BitextMining:
      if (p.n < 1) throw ValidationError("bitext baseline needs n >= 1");
      return 1.0 / static_cast<double>(p.n);
  }
  return 0.0;
}

}  // namespace embench
