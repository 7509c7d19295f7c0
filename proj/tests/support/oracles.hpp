#pragma once

// Brute-force reference implementations. Deliberately naive: they enumerate
// instead of computing, so they share no logic with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Ranking of candidate indices by descending score, ties by index, found
// by checking every permutation for sortedness.
inline std::vector<std::size_t> rank_by_enumeration(const std::vector<double>& scores) {
  std::vector<std::size_t> perm(scores.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  do {
    bool ok = true;
    for (std::size_t i = 0; i + 1 < perm.size() && ok; ++i) {
      const double a = scores[perm[i]], b = scores[perm[i + 1]];
      ok = a > b || (a == b && perm[i] < perm[i + 1]);
    }
    if (ok) return perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {};
}

// Sum over cutoffs of precision@cutoff at relevant cutoffs, over R.
inline double average_precision(const std::vector<bool>& ranked_relevance) {
  double total = 0.0;
  int relevant = 0;
  for (std::size_t cut = 1; cut <= ranked_relevance.size(); ++cut) {
    if (!ranked_relevance[cut - 1]) continue;
    int hits = 0;
    for (std::size_t i = 0; i < cut; ++i) hits += ranked_relevance[i];
    total += static_cast<double>(hits) / static_cast<double>(cut);
    ++relevant;
  }
  return total / relevant;
}

inline double dcg(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
    if (relevant.count(ranking[i])) s += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  return s;
}

// Ideal DCG as the best DCG over every ordering of the pool.
inline double ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, std::size_t k) {
  std::vector<std::string> pool = ranking;
  for (const auto& r : relevant) {
    if (std::find(pool.begin(), pool.end(), r) == pool.end()) pool.push_back(r);
  }
  std::sort(pool.begin(), pool.end());
  double ideal = 0.0;
  do {
    ideal = std::max(ideal, dcg(pool, relevant, k));
  } while (std::next_permutation(pool.begin(), pool.end()));
  return ideal == 0.0 ? 0.0 : dcg(ranking, relevant, k) / ideal;
}

// Every threshold that yields a distinct split: -inf and each observed value,
// predicting "match" when sim > t.
inline double best_threshold_accuracy(const std::vector<double>& sims, const std::vector<bool>& match) {
  std::vector<double> ts{-std::numeric_limits<double>::infinity()};
  ts.insert(ts.end(), sims.begin(), sims.end());
  double best = 0.0;
  for (double t : ts) {
    int correct = 0;
    for (std::size_t i = 0; i < sims.size(); ++i) correct += (sims[i] > t) == match[i];
    best = std::max(best, static_cast<double>(correct) / static_cast<double>(sims.size()));
  }
  return best;
}

}  // namespace oracle
