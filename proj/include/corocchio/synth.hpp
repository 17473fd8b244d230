#pragma once

// Seeded synthetic corpora: graded passage clusters, distractors, logged
// query variants and perturbed "unseen" queries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "corocchio/clicksim.hpp"
#include "corocchio/errors.hpp"
#include "corocchio/io.hpp"
#include "corocchio/random.hpp"
#include "corocchio/vecstore.hpp"

namespace corocchio {

/// Generator settings.
///
/// Each of the `n_queries` topics owns `passages_per_query` judged passages.
/// A grade-g passage is normalize(c + intra_cluster_noise * (4 - g) / 4 * z)
/// where c = normalize(t + topic_offset * z') is the cluster centre of topic
/// vector t. The topic is logged as `queries_per_topic` query variants,
/// normalize(t + variant_noise * z''), that all share the topic's judgments.
/// With topic_offset = 0 and queries_per_topic = 1 the single query is t and
/// passages cluster directly around it.
struct SynthConfig {
  std::size_t dim = 64;
  std::size_t n_queries = 200;
  std::size_t passages_per_query = 25;
  std::size_t queries_per_topic = 5;
  std::array<double, 4> grade_mix = {0.4, 0.2, 0.2, 0.2};
  double intra_cluster_noise = 0.35;
  double topic_offset = 0.15;
  double variant_noise = 0.10;
  std::size_t distractor_count = 5000;
  double unseen_fraction = 0.2;
  double unseen_noise = 0.15;
  std::uint64_t seed = 42;

  void validate() const {
    if (dim == 0) throw ConfigError("synth.dim must be >= 1");
    if (n_queries == 0) throw ConfigError("synth.n_queries must be >= 1");
    if (passages_per_query == 0) throw ConfigError("synth.passages_per_query must be >= 1");
    if (queries_per_topic == 0) throw ConfigError("synth.queries_per_topic must be >= 1");
    double sum = 0.0;
    for (double m : grade_mix) {
      if (!(m >= 0.0)) throw ConfigError("synth.grade_mix entries must be >= 0");
      sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("synth.grade_mix must sum to 1");
    if (!(grade_mix[2] > 0.0 || grade_mix[3] > 0.0)) {
      throw ConfigError("synth.grade_mix needs positive mass on grade 2 or 3");
    }
    for (double s : {intra_cluster_noise, topic_offset, variant_noise, unseen_noise}) {
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("synth noise scales must be >= 0");
    }
    if (!(unseen_fraction >= 0.0 && unseen_fraction < 1.0)) {
      throw ConfigError("synth.unseen_fraction must be in [0, 1)");
    }
  }
};

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["n_queries"] = c.n_queries;
  j["passages_per_query"] = c.passages_per_query;
  j["queries_per_topic"] = c.queries_per_topic;
  j["grade_mix"] = c.grade_mix;
  j["intra_cluster_noise"] = c.intra_cluster_noise;
  j["topic_offset"] = c.topic_offset;
  j["variant_noise"] = c.variant_noise;
  j["distractor_count"] = c.distractor_count;
  j["unseen_fraction"] = c.unseen_fraction;
  j["unseen_noise"] = c.unseen_noise;
  j["seed"] = c.seed;
  return j;
}

struct Corpus {
  EmbeddingStore passages;
  EmbeddingStore queries;  // every logged query variant
  Qrels qrels;
};

struct QuerySplit {
  EmbeddingStore seen;
  EmbeddingStore unseen_base;
};

namespace detail {

inline std::size_t digits(std::size_t n) {
  std::size_t d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

inline std::string padded(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : engine_(seed) {}

  std::vector<double> draw(std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal_(engine_);
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline std::vector<double> normalized(std::vector<double> v) {
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (!(norm > 0.0)) throw DomainError("cannot normalize a zero vector");
  for (auto& x : v) x /= norm;
  return v;
}

/// normalize(base + scale * z); base itself when scale is 0.
inline std::vector<double> jitter(const std::vector<double>& base, double scale, Gaussian& g) {
  if (scale == 0.0) return base;
  auto z = g.draw(base.size());
  for (std::size_t d = 0; d < z.size(); ++d) z[d] = base[d] + scale * z[d];
  return normalized(std::move(z));
}

}  // namespace detail

/// Pure function of cfg. Ids: topic t gives queries `q<t>` (or `q<t>-<v>`
/// with several variants) and passages `p<t>-<j>`; distractors are `d<j>`.
inline Corpus gen_corpus(const SynthConfig& cfg) {
  cfg.validate();
  detail::Gaussian gauss(seed_derive(cfg.seed, "corpus", 0));
  std::discrete_distribution<int> grade_dist(cfg.grade_mix.begin(), cfg.grade_mix.end());

  const std::size_t tw = detail::digits(cfg.n_queries - 1);
  const std::size_t pw = detail::digits(cfg.passages_per_query - 1);
  const std::size_t vw = detail::digits(cfg.queries_per_topic - 1);

  std::vector<EmbeddingStore::Entry> passages;
  std::vector<EmbeddingStore::Entry> queries;
  passages.reserve(cfg.n_queries * cfg.passages_per_query + cfg.distractor_count);
  queries.reserve(cfg.n_queries * cfg.queries_per_topic);
  Qrels qrels;

  for (std::size_t t = 0; t < cfg.n_queries; ++t) {
    const std::string topic_id = detail::padded(t, tw);
    auto topic = detail::normalized(gauss.draw(cfg.dim));
    auto centre = detail::jitter(topic, cfg.topic_offset, gauss);

    std::vector<std::pair<std::string, int>> judged;
    for (std::size_t j = 0; j < cfg.passages_per_query; ++j) {
      int grade = grade_dist(gauss.engine());
      double spread = cfg.intra_cluster_noise * static_cast<double>(4 - grade) / 4.0;
      std::string pid = "p" + topic_id + "-" + detail::padded(j, pw);
      passages.emplace_back(pid, DenseVector(detail::jitter(centre, spread, gauss)));
      judged.emplace_back(std::move(pid), grade);
    }

    for (std::size_t v = 0; v < cfg.queries_per_topic; ++v) {
      std::string qid = "q" + topic_id;
      if (cfg.queries_per_topic > 1) qid += "-" + detail::padded(v, vw);
      auto vec = cfg.queries_per_topic == 1 ? topic : detail::jitter(topic, cfg.variant_noise, gauss);
      queries.emplace_back(qid, DenseVector(std::move(vec)));
      for (const auto& [pid, grade] : judged) qrels.set(qid, pid, grade);
    }
  }

  const std::size_t dw = detail::digits(cfg.distractor_count == 0 ? 0 : cfg.distractor_count - 1);
  for (std::size_t j = 0; j < cfg.distractor_count; ++j) {
    passages.emplace_back("d" + detail::padded(j, dw),
                          DenseVector(detail::normalized(gauss.draw(cfg.dim))));
  }

  return {EmbeddingStore(StoreKind::passage, std::move(passages)),
          EmbeddingStore(StoreKind::query, std::move(queries)), std::move(qrels)};
}

/// Number of queries held out for a store of `n` entries.
inline std::size_t unseen_count(std::size_t n, double fraction) {
  auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  if (fraction > 0.0 && n >= 2 && count == 0) count = 1;
  return std::min(count, n);
}

/// Seeded partition; both halves keep the input order.
inline QuerySplit split_queries(const EmbeddingStore& queries, const SynthConfig& cfg) {
  if (queries.empty()) throw EmptyStoreError("cannot split an empty query store");
  if (!(cfg.unseen_fraction >= 0.0 && cfg.unseen_fraction < 1.0)) {
    throw ConfigError("synth.unseen_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed_derive(cfg.seed, "split", 0));
  // Fisher-Yates with our own uniform draws; std::shuffle differs across libraries.
  for (std::size_t i = order.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  std::vector<bool> unseen(queries.size(), false);
  const std::size_t n_unseen = unseen_count(queries.size(), cfg.unseen_fraction);
  for (std::size_t i = 0; i < n_unseen; ++i) unseen[order[i]] = true;

  std::vector<EmbeddingStore::Entry> seen_entries, unseen_entries;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    (unseen[i] ? unseen_entries : seen_entries)
        .emplace_back(queries.id(i), DenseVector::from_span(queries.row(i)));
  }
  return {EmbeddingStore(StoreKind::query, std::move(seen_entries)),
          EmbeddingStore(StoreKind::query, std::move(unseen_entries))};
}

/// normalize(base + sigma_u * z) per held-out query. Each result keeps its
/// base query's id and therefore its qrels.
inline EmbeddingStore gen_unseen_queries(const EmbeddingStore& unseen_base, double sigma_u,
                                         std::uint64_t seed) {
  if (!(sigma_u >= 0.0) || !std::isfinite(sigma_u)) throw DomainError("sigma_u must be >= 0");
  detail::Gaussian gauss(seed_derive(seed, "unseen", 0));
  std::vector<EmbeddingStore::Entry> entries;
  entries.reserve(unseen_base.size());
  for (std::size_t i = 0; i < unseen_base.size(); ++i) {
    std::vector<double> base(unseen_base.row(i).begin(), unseen_base.row(i).end());
    entries.emplace_back(unseen_base.id(i), DenseVector(detail::jitter(base, sigma_u, gauss)));
  }
  return EmbeddingStore(StoreKind::query, std::move(entries));
}

}  // namespace corocchio
