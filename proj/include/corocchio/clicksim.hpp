#pragma once

// Position-biased click simulation and the historic click log.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "corocchio/errors.hpp"
#include "corocchio/io.hpp"
#include "corocchio/parallel.hpp"
#include "corocchio/random.hpp"
#include "corocchio/vecstore.hpp"

namespace corocchio {

inline constexpr int kMaxGrade = 3;

inline void check_grade(int grade) {
  if (grade < 0 || grade > kMaxGrade) {
    throw DomainError("relevance grade " + std::to_string(grade) + " outside 0..3");
  }
}

// ---------------------------------------------------------------------------
// Qrels
// ---------------------------------------------------------------------------

/// Graded judgments, query id -> passage id -> grade in 0..3. Unlisted pairs
/// are grade 0.
class Qrels {
 public:
  using Judgments = std::map<std::string, int>;

  void set(const std::string& query_id, const std::string& passage_id, int grade) {
    check_grade(grade);
    judgments_[query_id][passage_id] = grade;
  }

  int grade(const std::string& query_id, const std::string& passage_id) const {
    auto q = judgments_.find(query_id);
    if (q == judgments_.end()) return 0;
    auto p = q->second.find(passage_id);
    return p == q->second.end() ? 0 : p->second;
  }

  /// Empty map for unjudged queries.
  const Judgments& judged(const std::string& query_id) const {
    static const Judgments kNone;
    auto q = judgments_.find(query_id);
    return q == judgments_.end() ? kNone : q->second;
  }

  bool has_query(const std::string& query_id) const { return judgments_.contains(query_id); }
  const std::map<std::string, Judgments>& all() const noexcept { return judgments_; }
  std::size_t num_queries() const noexcept { return judgments_.size(); }

  friend bool operator==(const Qrels&, const Qrels&) = default;

 private:
  std::map<std::string, Judgments> judgments_;
};

/// TREC qrels: `qid 0 pid grade` per line.
inline Qrels read_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, iter, pid, grade_text, extra;
    if (!(fields >> qid)) continue;
    if (!(fields >> iter >> pid >> grade_text) || (fields >> extra)) {
      throw IngestError(line_no, "expected 'qid 0 pid grade'");
    }
    int grade = 0;
    if (!parse_int(grade_text, grade) || grade < 0 || grade > kMaxGrade) {
      throw IngestError(line_no, "grade '" + grade_text + "' is not an integer in 0..3");
    }
    qrels.set(qid, pid, grade);
  }
  return qrels;
}

inline Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_qrels(in);
}

inline void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, judged] : qrels.all()) {
    for (const auto& [pid, grade] : judged) out << qid << " 0 " << pid << ' ' << grade << '\n';
  }
}

inline void save_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  write_file_atomic(path, [&](std::ofstream& out) { write_qrels(out, qrels); });
}

// ---------------------------------------------------------------------------
// User model
// ---------------------------------------------------------------------------

enum class Behavior { perfect, noisy };

inline std::string_view to_string(Behavior b) { return b == Behavior::perfect ? "perfect" : "noisy"; }

inline Behavior parse_behavior(std::string_view s) {
  if (s == "perfect") return Behavior::perfect;
  if (s == "noisy") return Behavior::noisy;
  throw ConfigError("unknown user behavior '" + std::string(s) + "' (perfect|noisy)");
}

/// Probability of examining rank `rank` (1-based): (1/rank)^eta.
inline double propensity(std::size_t rank, double eta) {
  if (rank < 1) throw DomainError("rank must be >= 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("eta must be a finite value >= 0");
  return std::pow(1.0 / static_cast<double>(rank), eta);
}

/// Click-given-examination table plus the position-bias exponent.
class UserModel {
 public:
  UserModel(Behavior behavior, double eta) : behavior_(behavior), eta_(eta) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("eta must be a finite value >= 0");
    table_ = behavior == Behavior::perfect ? std::array<double, 4>{0.0, 0.0, 1.0, 1.0}
                                           : std::array<double, 4>{0.2, 0.4, 0.8, 0.9};
  }

  Behavior behavior() const noexcept { return behavior_; }
  double eta() const noexcept { return eta_; }
  const std::array<double, 4>& click_table() const noexcept { return table_; }

  friend bool operator==(const UserModel&, const UserModel&) = default;

 private:
  Behavior behavior_;
  double eta_;
  std::array<double, 4> table_;
};

inline double click_prob(int grade, const UserModel& model) {
  check_grade(grade);
  return model.click_table()[static_cast<std::size_t>(grade)];
}

// ---------------------------------------------------------------------------
// Sessions and logs
// ---------------------------------------------------------------------------

/// Passage ids of a SERP. Sessions of one query share one instance.
using SharedRanking = std::shared_ptr<const std::vector<std::string>>;

struct SessionRecord {
  std::string query_id;
  SharedRanking ranking;
  std::vector<std::uint8_t> clicks;  // aligned with *ranking

  std::span<const std::string> passages() const {
    return ranking ? std::span<const std::string>(*ranking) : std::span<const std::string>{};
  }

  friend bool operator==(const SessionRecord& a, const SessionRecord& b) {
    return a.query_id == b.query_id && a.clicks == b.clicks &&
           std::equal(a.passages().begin(), a.passages().end(), b.passages().begin(),
                      b.passages().end());
  }
};

/// Draws the clicks for one SERP given the grades of its results. Two uniform
/// draws are consumed per slot in rank order (observe, then click), whether or
/// not the slot was observed.
template <class Engine>
std::vector<std::uint8_t> simulate_clicks(std::span<const int> grades, const UserModel& model,
                                          Engine& rng) {
  std::vector<std::uint8_t> clicks(grades.size(), 0);
  for (std::size_t i = 0; i < grades.size(); ++i) {
    double observe = unit_uniform(rng);
    double click = unit_uniform(rng);
    bool observed = observe < propensity(i + 1, model.eta());
    clicks[i] = observed && click < click_prob(grades[i], model) ? 1 : 0;
  }
  return clicks;
}

template <class Engine>
SessionRecord simulate_session(const Ranking& ranking, const Qrels& qrels, const UserModel& model,
                               Engine& rng) {
  if (ranking.items.empty()) throw DomainError("cannot simulate a session on an empty ranking");
  auto ids = std::make_shared<std::vector<std::string>>();
  std::vector<int> grades;
  for (const auto& item : ranking.items) {
    ids->push_back(item.id);
    grades.push_back(qrels.grade(ranking.query_id, item.id));
  }
  SessionRecord s{ranking.query_id, std::move(ids), {}};
  s.clicks = simulate_clicks(grades, model, rng);
  return s;
}

struct ClickLogMeta {
  Behavior behavior = Behavior::perfect;
  double eta = 0.0;
  std::size_t serp_depth = 0;
  std::size_t sessions = 0;  // sessions per query
  std::uint64_t seed = 0;

  UserModel user_model() const { return UserModel(behavior, eta); }

  friend bool operator==(const ClickLogMeta&, const ClickLogMeta&) = default;
};

struct ClickLog {
  ClickLogMeta meta;
  std::map<std::string, std::vector<SessionRecord>> sessions;

  /// Sessions of one query; empty span when the query was never logged.
  std::span<const SessionRecord> for_query(const std::string& query_id) const {
    auto it = sessions.find(query_id);
    if (it == sessions.end()) return {};
    return it->second;
  }

  friend bool operator==(const ClickLog&, const ClickLog&) = default;
};

/// Simulates `sessions_per_query` sessions for every query in `queries` over
/// its static top-`serp_depth` SERP. Session s of query q draws from
/// SplitMix64(seed_derive(master_seed, q, s)), so the output does not depend
/// on `threads`.
inline ClickLog build_click_log(const EmbeddingStore& passages, const EmbeddingStore& queries,
                                const Qrels& qrels, const UserModel& model,
                                std::size_t sessions_per_query, std::size_t serp_depth,
                                std::uint64_t master_seed, std::size_t threads = 1) {
  if (sessions_per_query == 0) throw ConfigError("sessions_per_query must be >= 1");
  if (serp_depth == 0) throw ConfigError("serp_depth must be >= 1");
  if (!queries.empty() && passages.dim() != queries.dim()) {
    throw ConfigError("passage and query stores differ in dimension (" +
                      std::to_string(passages.dim()) + " vs " + std::to_string(queries.dim()) + ")");
  }

  std::vector<std::vector<SessionRecord>> per_query(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t qi) {
    const std::string& qid = queries.id(qi);
    Ranking serp = top_k(passages, queries.row(qi), serp_depth, {}, qid);
    auto ids = std::make_shared<std::vector<std::string>>();
    std::vector<int> grades;
    for (const auto& item : serp.items) {
      ids->push_back(item.id);
      grades.push_back(qrels.grade(qid, item.id));
    }
    SharedRanking shared = std::move(ids);
    auto& out = per_query[qi];
    out.reserve(sessions_per_query);
    for (std::size_t s = 0; s < sessions_per_query; ++s) {
      SplitMix64 rng(seed_derive(master_seed, qid, s));
      out.push_back({qid, shared, simulate_clicks(grades, model, rng)});
    }
  });

  ClickLog log;
  log.meta = {model.behavior(), model.eta(), serp_depth, sessions_per_query, master_seed};
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    log.sessions.emplace(queries.id(qi), std::move(per_query[qi]));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Click-log file: JSONL, one meta header line, then one session per line.
// ---------------------------------------------------------------------------

inline void write_click_log(std::ostream& out, const ClickLog& log) {
  nlohmann::ordered_json meta;
  meta["eta"] = log.meta.eta;
  meta["behavior"] = std::string(to_string(log.meta.behavior));
  meta["serp_depth"] = log.meta.serp_depth;
  meta["sessions"] = log.meta.sessions;
  meta["seed"] = log.meta.seed;
  nlohmann::ordered_json header;
  header["meta"] = std::move(meta);
  out << header.dump() << '\n';

  std::string line;
  for (const auto& [qid, sessions] : log.sessions) {
    const std::string qid_json = nlohmann::json(qid).dump();
    const std::vector<std::string>* cached = nullptr;
    std::string ranking_json;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      const SessionRecord& rec = sessions[s];
      if (rec.ranking.get() != cached) {
        cached = rec.ranking.get();
        ranking_json = nlohmann::json(rec.ranking ? *rec.ranking : std::vector<std::string>{}).dump();
      }
      line.clear();
      line += "{\"qid\":";
      line += qid_json;
      line += ",\"session\":";
      line += std::to_string(s);
      line += ",\"ranking\":";
      line += ranking_json;
      line += ",\"clicks\":[";
      for (std::size_t i = 0; i < rec.clicks.size(); ++i) {
        if (i) line += ',';
        line += rec.clicks[i] ? '1' : '0';
      }
      line += "]}\n";
      out << line;
    }
  }
}

inline void save_click_log(const std::filesystem::path& path, const ClickLog& log) {
  write_file_atomic(path, [&](std::ofstream& out) { write_click_log(out, log); });
}

inline ClickLog read_click_log(std::istream& in) {
  ClickLog log;
  std::map<std::string, std::map<std::size_t, SessionRecord>> staged;
  std::map<std::string, SharedRanking> last_ranking;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw IngestError(line_no, "expected a JSON object");
    try {
      if (!have_header) {
        if (!j.contains("meta")) throw IngestError(line_no, "first line must be the meta header");
        const auto& m = j.at("meta");
        log.meta.eta = m.at("eta").get<double>();
        log.meta.behavior = parse_behavior(m.at("behavior").get<std::string>());
        log.meta.serp_depth = m.at("serp_depth").get<std::size_t>();
        log.meta.sessions = m.at("sessions").get<std::size_t>();
        log.meta.seed = m.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      auto qid = j.at("qid").get<std::string>();
      auto session = j.at("session").get<std::size_t>();
      auto ranking = j.at("ranking").get<std::vector<std::string>>();
      auto clicks_raw = j.at("clicks").get<std::vector<int>>();
      if (clicks_raw.size() != ranking.size()) {
        throw IngestError(line_no, "clicks has " + std::to_string(clicks_raw.size()) +
                                       " entries but ranking has " + std::to_string(ranking.size()));
      }
      std::vector<std::uint8_t> clicks;
      clicks.reserve(clicks_raw.size());
      for (int c : clicks_raw) {
        if (c != 0 && c != 1) throw IngestError(line_no, "click values must be 0 or 1");
        clicks.push_back(static_cast<std::uint8_t>(c));
      }
      SharedRanking& shared = last_ranking[qid];
      if (!shared || *shared != ranking) {
        shared = std::make_shared<const std::vector<std::string>>(std::move(ranking));
      }
      if (!staged[qid].emplace(session, SessionRecord{qid, shared, std::move(clicks)}).second) {
        throw IngestError(line_no, "duplicate session " + std::to_string(session) + " for " + qid);
      }
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(line_no, std::string("bad field: ") + e.what());
    } catch (const ConfigError& e) {
      throw IngestError(line_no, e.what());
    }
  }
  for (auto& [qid, by_index] : staged) {
    auto& dest = log.sessions[qid];
    for (auto& [index, rec] : by_index) {
      if (index != dest.size()) {
        throw IngestError(0, "sessions of " + qid + " are not numbered 0..n-1");
      }
      dest.push_back(std::move(rec));
    }
  }
  return log;
}

inline ClickLog load_click_log(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_click_log(in);
}

}  // namespace corocchio
