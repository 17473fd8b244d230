#pragma once

// Query-vector refinement from click logs: Rocchio, the relevance-only target
// q*, CoRocchio (inverse-propensity weighted clicks), and the nearest-neighbour
// variants for queries that never appear in the log.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corocchio/clicksim.hpp"
#include "corocchio/errors.hpp"
#include "corocchio/vecstore.hpp"

namespace corocchio {

enum class Algorithm { rocchio, corocchio };

inline std::string_view to_string(Algorithm a) {
  return a == Algorithm::rocchio ? "rocchio" : "corocchio";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "rocchio") return Algorithm::rocchio;
  if (s == "corocchio") return Algorithm::corocchio;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (rocchio|corocchio)");
}

struct FeedbackConfig {
  double alpha = 0.4;
  double beta = 0.6;
  Algorithm algorithm = Algorithm::corocchio;
  std::size_t ann_k = 3;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
      throw ConfigError("feedback alpha and beta must be finite and >= 0");
    }
    if (!(alpha + beta > 0.0)) throw ConfigError("feedback alpha + beta must be > 0");
    if (ann_k == 0) throw ConfigError("feedback ann_k must be >= 1");
  }
};

/// Weight of a click at 1-based `rank`: 1 for Rocchio, 1/propensity for CoRocchio.
inline double click_weight(Algorithm algorithm, std::size_t rank, double eta) {
  if (algorithm == Algorithm::rocchio) return 1.0;
  double w = 1.0 / propensity(rank, eta);
  if (!std::isfinite(w)) throw DomainError("non-finite inverse-propensity weight");
  return w;
}

/// The scaled feedback term (beta / |R_q|) * sum_r sum_i w_i * p_i * c(p_i).
/// Sessions without clicks still count in |R_q|.
inline std::vector<double> click_feedback(std::span<const SessionRecord> log_q,
                                          const EmbeddingStore& passages, double eta,
                                          Algorithm algorithm, double beta) {
  if (log_q.empty()) throw NoFeedbackError("no logged sessions for query");
  std::vector<double> acc(passages.dim(), 0.0);
  std::vector<double> weights;
  const std::vector<std::string>* cached = nullptr;
  std::vector<const double*> rows;
  for (const SessionRecord& session : log_q) {
    auto ids = session.passages();
    if (session.clicks.size() != ids.size()) {
      throw DomainError("session clicks are not aligned with its ranking");
    }
    if (session.ranking.get() != cached) {
      cached = session.ranking.get();
      rows.assign(ids.size(), nullptr);
    }
    if (weights.size() < ids.size()) {
      for (std::size_t r = weights.size(); r < ids.size(); ++r) {
        weights.push_back(click_weight(algorithm, r + 1, eta));
      }
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!session.clicks[i]) continue;
      if (rows[i] == nullptr) rows[i] = passages.at(ids[i]).data();
      const double* p = rows[i];
      const double w = weights[i];
      for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += p[d] * w;
    }
  }
  const double scale = beta / static_cast<double>(log_q.size());
  for (double& v : acc) v *= scale;
  return acc;
}

/// alpha * q + feedback, no renormalisation.
inline DenseVector combine_query(const DenseVector& query, double alpha,
                                 std::span<const double> feedback) {
  if (feedback.size() != query.dim()) throw DimensionError(query.dim(), feedback.size());
  std::vector<double> out(query.dim());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = alpha * query[d] + feedback[d];
  return DenseVector(std::move(out));
}

inline DenseVector rocchio(const DenseVector& query, std::span<const SessionRecord> log_q,
                           const EmbeddingStore& passages, const FeedbackConfig& cfg) {
  cfg.validate();
  if (query.dim() != passages.dim()) throw DimensionError(passages.dim(), query.dim());
  return combine_query(query, cfg.alpha,
                       click_feedback(log_q, passages, 0.0, Algorithm::rocchio, cfg.beta));
}

/// `eta` must be the exponent the log was generated with (its meta.eta).
inline DenseVector corocchio(const DenseVector& query, std::span<const SessionRecord> log_q,
                             const EmbeddingStore& passages, double eta,
                             const FeedbackConfig& cfg) {
  cfg.validate();
  if (query.dim() != passages.dim()) throw DimensionError(passages.dim(), query.dim());
  return combine_query(query, cfg.alpha,
                       click_feedback(log_q, passages, eta, Algorithm::corocchio, cfg.beta));
}

/// Dispatches on cfg.algorithm.
inline DenseVector refine(const DenseVector& query, std::span<const SessionRecord> log_q,
                          const EmbeddingStore& passages, double eta, const FeedbackConfig& cfg) {
  return cfg.algorithm == Algorithm::rocchio ? rocchio(query, log_q, passages, cfg)
                                             : corocchio(query, log_q, passages, eta, cfg);
}

/// The refined query a click-perfect, bias-free user would produce: every
/// displayed passage with grade >= 2 contributes once per ranking.
inline DenseVector optimal_qstar(const DenseVector& query, std::span<const Ranking> rankings,
                                 const Qrels& qrels, const EmbeddingStore& passages,
                                 const FeedbackConfig& cfg) {
  cfg.validate();
  if (rankings.empty()) throw NoFeedbackError("no rankings for q*");
  if (query.dim() != passages.dim()) throw DimensionError(passages.dim(), query.dim());
  std::vector<double> acc(passages.dim(), 0.0);
  for (const Ranking& r : rankings) {
    for (const auto& item : r.items) {
      if (qrels.grade(r.query_id, item.id) < 2) continue;
      auto p = passages.at(item.id);
      for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += p[d];
    }
  }
  const double scale = cfg.beta / static_cast<double>(rankings.size());
  for (double& v : acc) v *= scale;
  return combine_query(query, cfg.alpha, acc);
}

/// Refines an unseen query from the logs of its cfg.ann_k nearest logged
/// queries: each neighbour's feedback is normalised by its own session count,
/// then the neighbours are averaged. Rocchio or CoRocchio weighting follows
/// cfg.algorithm.
inline DenseVector feedback_ann(const DenseVector& query, const EmbeddingStore& logged_queries,
                                const ClickLog& log, const EmbeddingStore& passages, double eta,
                                const FeedbackConfig& cfg) {
  cfg.validate();
  if (query.dim() != passages.dim()) throw DimensionError(passages.dim(), query.dim());
  auto neighbours = knn_queries(logged_queries, query, cfg.ann_k);
  std::vector<double> total(passages.dim(), 0.0);
  for (const auto& qid : neighbours) {
    auto sessions = log.for_query(qid);
    if (sessions.empty()) throw NoFeedbackError("neighbour query '" + qid + "' has no sessions");
    auto f = click_feedback(sessions, passages, eta, cfg.algorithm, cfg.beta);
    for (std::size_t d = 0; d < total.size(); ++d) total[d] += f[d];
  }
  const double count = static_cast<double>(neighbours.size());
  for (double& v : total) v /= count;
  return combine_query(query, cfg.alpha, total);
}

}  // namespace corocchio
