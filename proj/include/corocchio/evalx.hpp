#pragma once

// Ranking metrics, TREC run files and paired significance tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "corocchio/clicksim.hpp"
#include "corocchio/errors.hpp"
#include "corocchio/io.hpp"
#include "corocchio/vecstore.hpp"

namespace corocchio {

/// Judgments collapsed to {0, 1}: grades 0 and 1 become 0, grades 2 and 3
/// become 1. Only binary_relabel() produces one, so set-based metrics cannot
/// be fed graded labels by accident.
class BinaryQrels {
 public:
  bool relevant(const std::string& query_id, const std::string& passage_id) const {
    return qrels_.grade(query_id, passage_id) == 1;
  }

  std::size_t num_relevant(const std::string& query_id) const {
    std::size_t n = 0;
    for (const auto& [pid, g] : qrels_.judged(query_id)) n += g == 1 ? 1 : 0;
    return n;
  }

  const Qrels& labels() const noexcept { return qrels_; }

 private:
  friend BinaryQrels binary_relabel(const Qrels&);
  Qrels qrels_;
};

inline BinaryQrels binary_relabel(const Qrels& graded) {
  BinaryQrels out;
  for (const auto& [qid, judged] : graded.all()) {
    for (const auto& [pid, grade] : judged) out.qrels_.set(qid, pid, grade >= 2 ? 1 : 0);
  }
  return out;
}

/// nDCG@k with gain 2^grade - 1 and discount log2(rank + 1). The ideal DCG
/// orders every judged passage of the query. 0 when nothing has grade >= 1.
inline double ndcg_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw DomainError("ndcg cutoff must be >= 1");
  std::vector<int> ideal;
  for (const auto& [pid, grade] : qrels.judged(ranking.query_id)) {
    if (grade > 0) ideal.push_back(grade);
  }
  if (ideal.empty()) return 0.0;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  auto gain = [](int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; };
  auto discount = [](std::size_t rank) { return std::log2(static_cast<double>(rank) + 1.0); };

  double dcg = 0.0;
  const std::size_t n = std::min(k, ranking.items.size());
  for (std::size_t i = 0; i < n; ++i) {
    int grade = qrels.grade(ranking.query_id, ranking.items[i].id);
    if (grade > 0) dcg += gain(grade) / discount(i + 1);
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += gain(ideal[i]) / discount(i + 1);
  return dcg / idcg;
}

/// Average precision over the top `depth` results; the denominator is the
/// number of relevant passages, capped at `depth`.
inline double average_precision(const Ranking& ranking, const BinaryQrels& qrels,
                                std::size_t depth = 1000) {
  const std::size_t total = std::min(qrels.num_relevant(ranking.query_id), depth);
  if (total == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t n = std::min(depth, ranking.items.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (qrels.relevant(ranking.query_id, ranking.items[i].id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

inline double recall_at_k(const Ranking& ranking, const BinaryQrels& qrels, std::size_t k) {
  if (k == 0) throw DomainError("recall cutoff must be >= 1");
  const std::size_t total = qrels.num_relevant(ranking.query_id);
  if (total == 0) return 0.0;
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranking.items.size());
  for (std::size_t i = 0; i < n; ++i) hits += qrels.relevant(ranking.query_id, ranking.items[i].id);
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Run files
// ---------------------------------------------------------------------------

struct RunEntry {
  std::string query_id;
  std::string passage_id;
  std::size_t rank = 0;  // 1-based
  double score = 0.0;
  std::string tag;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

/// TREC run: per query, ranks 1..n, scores non-increasing, no repeated passage.
struct RunFile {
  std::vector<RunEntry> entries;

  static RunFile from_rankings(std::span<const Ranking> rankings, const std::string& tag) {
    RunFile run;
    for (const Ranking& r : rankings) {
      for (std::size_t i = 0; i < r.items.size(); ++i) {
        run.entries.push_back({r.query_id, r.items[i].id, i + 1, r.items[i].score, tag});
      }
    }
    return run;
  }

  /// Throws IngestError naming the 1-based entry that breaks an invariant.
  void validate() const {
    std::map<std::string, std::pair<std::size_t, double>> last;
    std::map<std::string, std::unordered_set<std::string>> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const RunEntry& e = entries[i];
      auto [it, fresh] = last.try_emplace(e.query_id, 0, std::numeric_limits<double>::infinity());
      if (e.rank != it->second.first + 1) throw IngestError(i + 1, "ranks must be contiguous from 1");
      if (e.score > it->second.second) throw IngestError(i + 1, "scores must not increase with rank");
      if (!seen[e.query_id].insert(e.passage_id).second) {
        throw IngestError(i + 1, "duplicate passage " + e.passage_id + " for " + e.query_id);
      }
      it->second = {e.rank, e.score};
    }
  }

  /// One Ranking per query, in first-appearance order.
  std::vector<Ranking> to_rankings() const {
    std::vector<Ranking> out;
    std::map<std::string, std::size_t> slot;
    for (const RunEntry& e : entries) {
      auto [it, fresh] = slot.try_emplace(e.query_id, out.size());
      if (fresh) out.push_back({e.query_id, {}, 0});
      Ranking& r = out[it->second];
      r.items.push_back({e.passage_id, e.score});
      r.depth = r.items.size();
    }
    return out;
  }
};

inline void write_run(std::ostream& out, const RunFile& run) {
  for (const RunEntry& e : run.entries) {
    out << e.query_id << " Q0 " << e.passage_id << ' ' << e.rank << ' ' << format_real(e.score)
        << ' ' << e.tag << '\n';
  }
}

inline void save_run(const std::filesystem::path& path, const RunFile& run) {
  write_file_atomic(path, [&](std::ofstream& out) { write_run(out, run); });
}

inline RunFile read_run(std::istream& in) {
  RunFile run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, q0, pid, rank_text, score_text, tag, extra;
    if (!(fields >> qid)) continue;
    if (!(fields >> q0 >> pid >> rank_text >> score_text >> tag) || (fields >> extra)) {
      throw IngestError(line_no, "expected 'qid Q0 pid rank score tag'");
    }
    RunEntry e{qid, pid, 0, 0.0, tag};
    if (!parse_int(rank_text, e.rank) || e.rank == 0) throw IngestError(line_no, "bad rank");
    if (!parse_real(score_text, e.score) || !std::isfinite(e.score)) {
      throw IngestError(line_no, "bad score");
    }
    run.entries.push_back(std::move(e));
  }
  run.validate();
  return run;
}

inline RunFile load_run(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_run(in);
}

// ---------------------------------------------------------------------------
// Metric reports
// ---------------------------------------------------------------------------

struct QueryMetrics {
  double ndcg10 = 0.0;
  double ndcg100 = 0.0;
  double recall1000 = 0.0;
  double map = 0.0;

  friend bool operator==(const QueryMetrics&, const QueryMetrics&) = default;
};

enum class Metric { ndcg10, ndcg100, recall1000, map };

inline constexpr Metric kAllMetrics[] = {Metric::ndcg10, Metric::ndcg100, Metric::recall1000,
                                         Metric::map};

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::ndcg10: return "ndcg@10";
    case Metric::ndcg100: return "ndcg@100";
    case Metric::recall1000: return "recall@1000";
    case Metric::map: return "map";
  }
  return "";
}

inline double metric_value(const QueryMetrics& q, Metric m) {
  switch (m) {
    case Metric::ndcg10: return q.ndcg10;
    case Metric::ndcg100: return q.ndcg100;
    case Metric::recall1000: return q.recall1000;
    case Metric::map: return q.map;
  }
  return 0.0;
}

struct MetricReport {
  std::map<std::string, QueryMetrics> per_query;
  QueryMetrics means;

  /// Per-query values of `m` for `query_ids`, in that order. Throws
  /// StatError if a query is missing from the report.
  std::vector<double> values(Metric m, std::span<const std::string> query_ids) const {
    std::vector<double> out;
    out.reserve(query_ids.size());
    for (const auto& qid : query_ids) {
      auto it = per_query.find(qid);
      if (it == per_query.end()) throw StatError("query " + qid + " missing from report");
      out.push_back(metric_value(it->second, m));
    }
    return out;
  }

  /// Mean over a subset of queries.
  double mean(Metric m, std::span<const std::string> query_ids) const {
    auto v = values(m, query_ids);
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
};

inline QueryMetrics evaluate_ranking(const Ranking& ranking, const Qrels& graded,
                                     const BinaryQrels& binary) {
  return {ndcg_at_k(ranking, graded, 10), ndcg_at_k(ranking, graded, 100),
          recall_at_k(ranking, binary, 1000), average_precision(ranking, binary, 1000)};
}

inline MetricReport evaluate(std::span<const Ranking> rankings, const Qrels& qrels) {
  BinaryQrels binary = binary_relabel(qrels);
  MetricReport report;
  for (const Ranking& r : rankings) report.per_query[r.query_id] = evaluate_ranking(r, qrels, binary);
  if (!report.per_query.empty()) {
    const double n = static_cast<double>(report.per_query.size());
    for (const auto& [qid, m] : report.per_query) {
      report.means.ndcg10 += m.ndcg10;
      report.means.ndcg100 += m.ndcg100;
      report.means.recall1000 += m.recall1000;
      report.means.map += m.map;
    }
    report.means.ndcg10 /= n;
    report.means.ndcg100 /= n;
    report.means.recall1000 /= n;
    report.means.map /= n;
  }
  return report;
}

/// Long-form CSV `metric,query_id,value`; each metric ends with a `mean` row.
inline void write_metric_csv(std::ostream& out, const MetricReport& report) {
  out << "metric,query_id,value\n";
  for (Metric m : kAllMetrics) {
    for (const auto& [qid, q] : report.per_query) {
      out << metric_name(m) << ',' << qid << ',' << format_real(metric_value(q, m)) << '\n';
    }
    out << metric_name(m) << ",mean," << format_real(metric_value(report.means, m)) << '\n';
  }
}

inline void save_metric_csv(const std::filesystem::path& path, const MetricReport& report) {
  write_file_atomic(path, [&](std::ofstream& out) { write_metric_csv(out, report); });
}

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  bool significant = false;  // p_adjusted < 0.05
};

/// Two-tailed paired t-test of a - b with a Bonferroni factor of
/// `comparisons`. All-zero differences give t = 0, p = 1; zero variance with
/// a non-zero mean gives t = +-inf, p = 0.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                                 std::size_t comparisons = 1) {
  if (a.size() != b.size()) throw StatError("paired samples differ in length");
  if (a.size() < 2) throw StatError("paired t-test needs at least 2 pairs");
  if (comparisons == 0) throw StatError("comparisons must be >= 1");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);

  TTestResult r;
  if (var == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p_raw = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p_raw = 0.0;
    }
  } else {
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    boost::math::students_t dist(static_cast<double>(n - 1));
    r.p_raw = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    r.p_raw = std::min(1.0, r.p_raw);
  }
  r.p_adjusted = std::min(1.0, r.p_raw * static_cast<double>(comparisons));
  r.significant = r.p_adjusted < 0.05;
  return r;
}

}  // namespace corocchio
