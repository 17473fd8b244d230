#pragma once

// Deliberately naive metric definitions used as an oracle.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace reference {

using Grades = std::map<std::string, int>;

inline double dcg(const std::vector<int>& gains_by_rank, std::size_t k) {
  double s = 0;
  for (std::size_t r = 1; r <= k && r <= gains_by_rank.size(); ++r) {
    s += (std::pow(2.0, gains_by_rank[r - 1]) - 1.0) / (std::log(r + 1.0) / std::log(2.0));
  }
  return s;
}

inline double ndcg(const std::vector<std::string>& ranked, const Grades& qrels, std::size_t k) {
  std::vector<int> got;
  for (const auto& id : ranked) {
    auto it = qrels.find(id);
    got.push_back(it == qrels.end() ? 0 : it->second);
  }
  std::vector<int> ideal;
  for (int g = 3; g >= 1; --g) {
    for (const auto& [id, grade] : qrels) {
      if (grade == g) ideal.push_back(g);
    }
  }
  double best = dcg(ideal, k);
  return best == 0 ? 0.0 : dcg(got, k) / best;
}

inline bool relevant(const Grades& qrels, const std::string& id) {
  auto it = qrels.find(id);
  return it != qrels.end() && it->second >= 2;
}

inline double precision_at(const std::vector<std::string>& ranked, const Grades& qrels, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += relevant(qrels, ranked[i]);
  return static_cast<double>(hits) / k;
}

inline double average_precision(const std::vector<std::string>& ranked, const Grades& qrels, std::size_t depth) {
  std::size_t r = 0;
  for (const auto& [id, g] : qrels) r += g >= 2;
  if (r > depth) r = depth;
  if (r == 0) return 0;
  double s = 0;
  for (std::size_t k = 1; k <= ranked.size() && k <= depth; ++k) {
    if (relevant(qrels, ranked[k - 1])) s += precision_at(ranked, qrels, k);
  }
  return s / r;
}

inline double recall(const std::vector<std::string>& ranked, const Grades& qrels, std::size_t k) {
  std::size_t r = 0, hits = 0;
  for (const auto& [id, g] : qrels) r += g >= 2;
  if (r == 0) return 0;
  for (std::size_t i = 0; i < k && i < ranked.size(); ++i) hits += relevant(qrels, ranked[i]);
  return static_cast<double>(hits) / r;
}

struct Instance {
  std::vector<std::string> ranked;
  Grades qrels;
};

/// Random ranking of up to 50 passages from a pool of 120 ids, with up to 40
/// judged, some of them never retrieved.
inline Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> length(0, 50), judged(0, 40), grade(0, 3), pick(0, 119);
  std::vector<std::string> pool;
  for (int i = 0; i < 120; ++i) pool.push_back("p" + std::to_string(i));
  std::shuffle(pool.begin(), pool.end(), rng);
  Instance inst;
  inst.ranked.assign(pool.begin(), pool.begin() + length(rng));
  for (int j = judged(rng); j > 0; --j) inst.qrels[pool[pick(rng)]] = grade(rng);
  return inst;
}

}  // namespace reference
