#pragma once

// Experiment orchestration: synthetic data -> click logs -> refined queries ->
// run files -> metrics and significance tables.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "corocchio/clicksim.hpp"
#include "corocchio/errors.hpp"
#include "corocchio/evalx.hpp"
#include "corocchio/feedback.hpp"
#include "corocchio/io.hpp"
#include "corocchio/parallel.hpp"
#include "corocchio/random.hpp"
#include "corocchio/synth.hpp"
#include "corocchio/vecstore.hpp"

namespace corocchio {

enum class QuerySet { all, seen, unseen };

inline std::string_view to_string(QuerySet s) {
  switch (s) {
    case QuerySet::all: return "all";
    case QuerySet::seen: return "seen";
    case QuerySet::unseen: return "unseen";
  }
  return "";
}

/// One cell of the experiment grid. Written in config files as `baseline` or
/// `behavior:eta:algorithm[:ann]`, e.g. `noisy:1:corocchio:ann`.
struct Condition {
  bool baseline = false;
  Behavior behavior = Behavior::perfect;
  double eta = 0.0;
  Algorithm algorithm = Algorithm::rocchio;
  bool ann = false;

  static Condition make_baseline() {
    Condition c;
    c.baseline = true;
    return c;
  }

  static Condition make(Behavior behavior, double eta, Algorithm algorithm, bool ann = false) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("condition eta must be >= 0");
    Condition c;
    c.behavior = behavior;
    c.eta = eta;
    c.algorithm = algorithm;
    c.ann = ann;
    return c;
  }

  static Condition parse(std::string_view text) {
    if (text == "baseline") return make_baseline();
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
      if (ch == ':') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    parts.push_back(cur);
    if (parts.size() < 3 || parts.size() > 4 || (parts.size() == 4 && parts[3] != "ann")) {
      throw ConfigError("bad condition '" + std::string(text) +
                        "', expected baseline or behavior:eta:algorithm[:ann]");
    }
    double eta = 0.0;
    if (!parse_real(parts[1], eta)) throw ConfigError("bad eta in condition '" + std::string(text) + "'");
    return make(parse_behavior(parts[0]), eta, parse_algorithm(parts[2]), parts.size() == 4);
  }

  /// Key shared by every condition that reads the same click log.
  std::string user_key() const {
    return std::string(to_string(behavior)) + "_eta" + format_real(eta);
  }

  std::string name() const {
    if (baseline) return "baseline";
    return user_key() + "_" + std::string(to_string(algorithm)) + (ann ? "_ann" : "");
  }

  std::string spec() const {
    if (baseline) return "baseline";
    return std::string(to_string(behavior)) + ":" + format_real(eta) + ":" +
           std::string(to_string(algorithm)) + (ann ? ":ann" : "");
  }

  QuerySet query_set() const {
    if (baseline) return QuerySet::all;
    return ann ? QuerySet::unseen : QuerySet::seen;
  }

  friend bool operator==(const Condition&, const Condition&) = default;
};

/// Baseline plus {rocchio, corocchio} x {perfect, noisy} x {eta 0, eta 1},
/// each on the seen set and as an ANN variant on the unseen set.
inline std::vector<Condition> default_conditions() {
  std::vector<Condition> out{Condition::make_baseline()};
  for (bool ann : {false, true}) {
    for (Behavior b : {Behavior::perfect, Behavior::noisy}) {
      for (double eta : {0.0, 1.0}) {
        for (Algorithm a : {Algorithm::rocchio, Algorithm::corocchio}) {
          out.push_back(Condition::make(b, eta, a, ann));
        }
      }
    }
  }
  return out;
}

struct ExperimentConfig {
  SynthConfig synth;
  std::optional<std::uint64_t> synth_seed;  // defaults to master_seed
  Behavior behavior = Behavior::perfect;    // user model for the `simulate` stage
  double eta = 1.0;
  FeedbackConfig feedback;
  std::size_t sessions_per_query = 1000;
  std::size_t serp_depth = 10;
  std::size_t eval_depth = 1000;
  std::vector<Condition> conditions = default_conditions();
  std::vector<double> sweep_etas = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  std::filesystem::path output_dir = "out";
  std::uint64_t master_seed = 42;

  SynthConfig effective_synth() const {
    SynthConfig s = synth;
    s.seed = synth_seed.value_or(master_seed);
    return s;
  }

  void validate() const {
    synth.validate();
    feedback.validate();
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("user.eta must be >= 0");
    if (sessions_per_query == 0) throw ConfigError("sessions_per_query must be >= 1");
    if (serp_depth == 0) throw ConfigError("serp_depth must be >= 1");
    if (eval_depth < serp_depth) throw ConfigError("eval_depth must be >= serp_depth");
    if (conditions.empty()) throw ConfigError("no conditions configured");
    std::set<std::string> names;
    for (const auto& c : conditions) {
      if (!names.insert(c.name()).second) throw ConfigError("duplicate condition " + c.name());
    }
    for (double e : sweep_etas) {
      if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("sweep etas must be >= 0");
    }
  }
};

// ---------------------------------------------------------------------------
// key=value config files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  if (!parse_real(v, x) || !std::isfinite(x)) throw ConfigError(key + ": '" + v + "' is not a real number");
  return x;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x{};
  if (!parse_int(v, x)) throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return x;
}

}  // namespace detail

/// Applies one `key=value` setting. Unknown keys are a ConfigError.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::to_int;
  using detail::to_real;
  auto& s = cfg.synth;
  if (key == "seed" || key == "master_seed") cfg.master_seed = to_int<std::uint64_t>(key, value);
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "sessions_per_query") cfg.sessions_per_query = to_int<std::size_t>(key, value);
  else if (key == "serp_depth") cfg.serp_depth = to_int<std::size_t>(key, value);
  else if (key == "eval_depth") cfg.eval_depth = to_int<std::size_t>(key, value);
  else if (key == "conditions") {
    cfg.conditions.clear();
    for (const auto& item : detail::split_list(value)) {
      if (item == "default") {
        for (auto& c : default_conditions()) cfg.conditions.push_back(c);
      } else {
        cfg.conditions.push_back(Condition::parse(item));
      }
    }
  } else if (key == "sweep.etas") {
    cfg.sweep_etas.clear();
    for (const auto& item : detail::split_list(value)) cfg.sweep_etas.push_back(to_real(key, item));
  } else if (key == "user.behavior") cfg.behavior = parse_behavior(value);
  else if (key == "user.eta") cfg.eta = to_real(key, value);
  else if (key == "feedback.alpha") cfg.feedback.alpha = to_real(key, value);
  else if (key == "feedback.beta") cfg.feedback.beta = to_real(key, value);
  else if (key == "feedback.algorithm") cfg.feedback.algorithm = parse_algorithm(value);
  else if (key == "feedback.ann_k") cfg.feedback.ann_k = to_int<std::size_t>(key, value);
  else if (key == "synth.dim") s.dim = to_int<std::size_t>(key, value);
  else if (key == "synth.n_queries") s.n_queries = to_int<std::size_t>(key, value);
  else if (key == "synth.passages_per_query") s.passages_per_query = to_int<std::size_t>(key, value);
  else if (key == "synth.queries_per_topic") s.queries_per_topic = to_int<std::size_t>(key, value);
  else if (key == "synth.grade_mix") {
    auto items = detail::split_list(value);
    if (items.size() != 4) throw ConfigError("synth.grade_mix needs 4 comma-separated values");
    for (std::size_t g = 0; g < 4; ++g) s.grade_mix[g] = to_real(key, items[g]);
  } else if (key == "synth.intra_cluster_noise") s.intra_cluster_noise = to_real(key, value);
  else if (key == "synth.topic_offset") s.topic_offset = to_real(key, value);
  else if (key == "synth.variant_noise") s.variant_noise = to_real(key, value);
  else if (key == "synth.distractor_count") s.distractor_count = to_int<std::size_t>(key, value);
  else if (key == "synth.unseen_fraction") s.unseen_fraction = to_real(key, value);
  else if (key == "synth.unseen_noise") s.unseen_noise = to_real(key, value);
  else if (key == "synth.seed") cfg.synth_seed = to_int<std::uint64_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Flat UTF-8 `key=value` text; `#` starts a comment.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string body = detail::trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(cfg, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Logging: the only place wall-clock time appears.
// ---------------------------------------------------------------------------

class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::filesystem::path& path, bool echo = false) : echo_(echo) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    file_ = std::make_unique<std::ofstream>(path, std::ios::app);
  }

  void info(const std::string& msg) { write("INFO", msg); }
  void error(const std::string& msg) { write("ERROR", msg); }

 private:
  void write(const char* level, const std::string& msg) {
    std::lock_guard lock(mutex_);
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream line;
    line << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << level << ' ' << msg << '\n';
    if (file_) *file_ << line.str() << std::flush;
    if (echo_) std::cerr << line.str();
  }

  std::unique_ptr<std::ofstream> file_;
  bool echo_ = false;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Pipeline pieces
// ---------------------------------------------------------------------------

/// Everything the conditions share: generated once per experiment.
struct Testbed {
  Corpus corpus;
  EmbeddingStore seen;
  EmbeddingStore unseen;  // perturbed held-out queries, ids of their base queries
};

inline Testbed build_testbed(const SynthConfig& synth) {
  Testbed tb;
  tb.corpus = gen_corpus(synth);
  QuerySplit split = split_queries(tb.corpus.queries, synth);
  tb.seen = std::move(split.seen);
  tb.unseen = gen_unseen_queries(split.unseen_base, synth.unseen_noise, synth.seed);
  return tb;
}

/// Seed of the click log for one user behaviour. It does not depend on eta,
/// so logs at different eta share their uniform draws.
inline std::uint64_t click_log_seed(std::uint64_t master_seed, Behavior behavior) {
  return seed_derive(master_seed, "clicks/" + std::string(to_string(behavior)), 0);
}

inline ClickLog simulate_log(const Testbed& tb, const UserModel& model, const ExperimentConfig& cfg,
                             std::size_t threads) {
  return build_click_log(tb.corpus.passages, tb.seen, tb.corpus.qrels, model,
                         cfg.sessions_per_query, cfg.serp_depth,
                         click_log_seed(cfg.master_seed, model.behavior()), threads);
}

/// Refined (or raw, for the baseline) vector for every query the condition
/// evaluates, in store order: seen queries then unseen queries for the baseline.
inline std::vector<std::pair<std::string, DenseVector>> condition_queries(
    const Condition& c, const Testbed& tb, const ClickLog* log, const FeedbackConfig& base_fb,
    std::size_t threads) {
  std::vector<const EmbeddingStore*> sources;
  if (c.baseline) sources = {&tb.seen, &tb.unseen};
  else sources = {c.ann ? &tb.unseen : &tb.seen};

  std::vector<std::pair<std::string, DenseVector>> out;
  for (const EmbeddingStore* src : sources) {
    for (std::size_t i = 0; i < src->size(); ++i) out.emplace_back(src->id(i), DenseVector::from_span(src->row(i)));
  }
  if (c.baseline) return out;
  if (log == nullptr) throw ConfigError("condition " + c.name() + " needs a click log");

  FeedbackConfig fb = base_fb;
  fb.algorithm = c.algorithm;
  const double eta = log->meta.eta;
  parallel_for(out.size(), threads, [&](std::size_t i) {
    auto& [qid, vec] = out[i];
    if (c.ann) {
      vec = feedback_ann(vec, tb.seen, *log, tb.corpus.passages, eta, fb);
    } else {
      auto sessions = log->for_query(qid);
      if (sessions.empty()) throw NoFeedbackError("query " + qid + " has no logged sessions");
      vec = refine(vec, sessions, tb.corpus.passages, eta, fb);
    }
  });
  return out;
}

inline std::vector<Ranking> retrieve_all(const EmbeddingStore& passages,
                                         const std::vector<std::pair<std::string, DenseVector>>& queries,
                                         std::size_t depth, std::size_t threads) {
  std::vector<Ranking> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    out[i] = top_k(passages, queries[i].second, depth, {}, queries[i].first);
  });
  return out;
}

// ---------------------------------------------------------------------------
// run-all
// ---------------------------------------------------------------------------

struct ConditionOutcome {
  Condition condition;
  std::vector<std::string> query_ids;
  MetricReport report;
};

struct Comparison {
  std::string marker;  // "dagger": method vs baseline; "star": corocchio vs rocchio
  std::string condition_a;
  std::string condition_b;
  QuerySet query_set = QuerySet::seen;
  Metric metric = Metric::ndcg10;
  double mean_a = 0.0;
  double mean_b = 0.0;
  TTestResult test;
};

struct ExperimentResult {
  std::vector<std::string> seen_ids;
  std::vector<std::string> unseen_ids;
  std::map<std::string, ConditionOutcome> outcomes;
  std::vector<Comparison> comparisons;
  std::vector<std::string> failed;

  const ConditionOutcome& at(const std::string& name) const {
    auto it = outcomes.find(name);
    if (it == outcomes.end()) throw ConfigError("no outcome for condition " + name);
    return it->second;
  }

  const std::vector<std::string>& ids(QuerySet s) const {
    return s == QuerySet::unseen ? unseen_ids : seen_ids;
  }

  /// Comparison row for (a, b, metric); nullptr if it was not computed.
  const Comparison* find(const std::string& a, const std::string& b, Metric m) const {
    for (const auto& c : comparisons) {
      if (c.condition_a == a && c.condition_b == b && c.metric == m) return &c;
    }
    return nullptr;
  }
};

struct RunOptions {
  std::filesystem::path out;
  std::size_t threads = 1;
  std::vector<std::string> only;  // condition names; empty = all
  RunLog* log = nullptr;
};

/// Paired tests: every method against the baseline on the method's query set,
/// and corocchio against rocchio for matching user model and ANN flag. The
/// Bonferroni factor is the number of comparisons per metric.
inline std::vector<Comparison> compare_conditions(const ExperimentResult& r) {
  struct Pair {
    std::string marker;
    const ConditionOutcome* a;
    const ConditionOutcome* b;
    QuerySet set;
  };
  std::vector<Pair> pairs;
  auto base = r.outcomes.find("baseline");
  for (const auto& [name, o] : r.outcomes) {
    if (o.condition.baseline) continue;
    if (base != r.outcomes.end()) pairs.push_back({"dagger", &o, &base->second, o.condition.query_set()});
  }
  for (const auto& [name, o] : r.outcomes) {
    const Condition& c = o.condition;
    if (c.baseline || c.algorithm != Algorithm::corocchio) continue;
    Condition twin = c;
    twin.algorithm = Algorithm::rocchio;
    auto it = r.outcomes.find(twin.name());
    if (it != r.outcomes.end()) pairs.push_back({"star", &o, &it->second, c.query_set()});
  }

  std::vector<Comparison> out;
  for (Metric m : kAllMetrics) {
    for (const auto& p : pairs) {
      const auto& ids = r.ids(p.set);
      if (ids.size() < 2) continue;
      auto a = p.a->report.values(m, ids);
      auto b = p.b->report.values(m, ids);
      Comparison c;
      c.marker = p.marker;
      c.condition_a = p.a->condition.name();
      c.condition_b = p.b->condition.name();
      c.query_set = p.set;
      c.metric = m;
      c.mean_a = p.a->report.mean(m, ids);
      c.mean_b = p.b->report.mean(m, ids);
      c.test = paired_t_test(a, b, pairs.size());
      out.push_back(c);
    }
  }
  return out;
}

inline void write_significance_csv(std::ostream& out, const std::vector<Comparison>& rows) {
  out << "marker,condition_a,condition_b,query_set,metric,mean_a,mean_b,t,p_raw,p_adjusted,significant\n";
  for (const auto& c : rows) {
    out << c.marker << ',' << c.condition_a << ',' << c.condition_b << ',' << to_string(c.query_set)
        << ',' << metric_name(c.metric) << ',' << format_real(c.mean_a) << ','
        << format_real(c.mean_b) << ',' << format_real(c.test.t) << ','
        << format_real(c.test.p_raw) << ',' << format_real(c.test.p_adjusted) << ','
        << (c.test.significant ? 1 : 0) << '\n';
  }
}

inline void write_summary_csv(std::ostream& out, const ExperimentResult& r) {
  out << "condition,query_set,metric,mean\n";
  for (const auto& [name, o] : r.outcomes) {
    QuerySet set = o.condition.query_set();
    std::vector<QuerySet> sets = set == QuerySet::all
                                     ? std::vector<QuerySet>{QuerySet::seen, QuerySet::unseen}
                                     : std::vector<QuerySet>{set};
    for (QuerySet s : sets) {
      for (Metric m : kAllMetrics) {
        const auto& ids = r.ids(s);
        if (ids.empty()) continue;
        out << name << ',' << to_string(s) << ',' << metric_name(m) << ','
            << format_real(o.report.mean(m, ids)) << '\n';
      }
    }
  }
}

/// Human-readable digest. Includes the click-noise versus position-bias
/// contrast, which is reported rather than asserted.
inline void write_report(std::ostream& out, const ExperimentResult& r) {
  out << "# Experiment report\n\n";
  out << "seen queries: " << r.seen_ids.size() << ", unseen queries: " << r.unseen_ids.size() << "\n\n";
  out << "| condition | set | nDCG@10 | nDCG@100 | R@1000 | MAP |\n|---|---|---|---|---|---|\n";
  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
  };
  for (const auto& [name, o] : r.outcomes) {
    QuerySet set = o.condition.query_set();
    for (QuerySet s : set == QuerySet::all ? std::vector<QuerySet>{QuerySet::seen, QuerySet::unseen}
                                           : std::vector<QuerySet>{set}) {
      const auto& ids = r.ids(s);
      if (ids.empty()) continue;
      out << "| " << name << " | " << to_string(s);
      for (Metric m : kAllMetrics) out << " | " << fmt(o.report.mean(m, ids));
      out << " |\n";
    }
  }
  out << "\n## Click noise vs position bias (rocchio, seen set, nDCG@10)\n\n";
  auto mean_of = [&](const std::string& name) -> std::optional<double> {
    auto it = r.outcomes.find(name);
    if (it == r.outcomes.end()) return std::nullopt;
    return it->second.report.mean(Metric::ndcg10, r.seen_ids);
  };
  auto pu = mean_of("perfect_eta0_rocchio");
  auto nu = mean_of("noisy_eta0_rocchio");
  auto pb = mean_of("perfect_eta1_rocchio");
  if (pu && nu) {
    out << "- noisy-unbiased " << fmt(*nu) << " vs perfect-unbiased " << fmt(*pu)
        << (*nu <= *pu ? " (noise does not help)\n" : " (noise helped: unexpected)\n");
  }
  if (pu && nu && pb) {
    out << "- loss from noise " << fmt(*pu - *nu) << ", loss from position bias (eta=1) "
        << fmt(*pu - *pb) << '\n';
  }
  if (!r.failed.empty()) {
    out << "\n## Failed conditions\n\n";
    for (const auto& f : r.failed) out << "- " << f << '\n';
  }
}

/// Full pipeline into `opts.out`. A condition that throws is logged and
/// listed in `failed`; the others still run.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  RunLog fallback;
  RunLog& log = opts.log ? *opts.log : fallback;
  const auto& out = opts.out;
  const SynthConfig synth = cfg.effective_synth();

  std::vector<Condition> conditions;
  for (const auto& c : cfg.conditions) {
    if (opts.only.empty() || std::find(opts.only.begin(), opts.only.end(), c.name()) != opts.only.end()) {
      conditions.push_back(c);
    }
  }
  if (conditions.empty()) throw ConfigError("condition filter matched nothing");

  log.info("generating synthetic corpus");
  Testbed tb = build_testbed(synth);
  save_embeddings(out / "data" / "passages.jsonl", tb.corpus.passages);
  save_embeddings(out / "data" / "queries.jsonl", tb.corpus.queries);
  save_embeddings(out / "data" / "seen.jsonl", tb.seen);
  save_embeddings(out / "data" / "unseen.jsonl", tb.unseen);
  save_qrels(out / "data" / "qrels.txt", tb.corpus.qrels);
  write_text_atomic(out / "data" / "manifest.json", to_json(synth).dump(2) + "\n");

  ExperimentResult result;
  result.seen_ids = tb.seen.ids();
  result.unseen_ids = tb.unseen.ids();

  // Group by click log so each log is simulated once and released early.
  std::map<std::string, std::vector<Condition>> by_log;
  for (const auto& c : conditions) by_log[c.baseline ? std::string() : c.user_key()].push_back(c);

  for (const auto& [key, group] : by_log) {
    std::optional<ClickLog> click_log;
    if (!key.empty()) {
      const Condition& first = group.front();
      try {
        log.info("simulating click log " + key);
        click_log = simulate_log(tb, UserModel(first.behavior, first.eta), cfg, opts.threads);
        save_click_log(out / "logs" / (key + ".clicks.jsonl"), *click_log);
      } catch (const Error& e) {
        for (const auto& c : group) {
          log.error("condition " + c.name() + " failed: " + e.what());
          result.failed.push_back(c.name());
        }
        continue;
      }
    }
    for (const auto& c : group) {
      try {
        log.info("running condition " + c.name());
        auto queries = condition_queries(c, tb, click_log ? &*click_log : nullptr, cfg.feedback, opts.threads);
        auto rankings = retrieve_all(tb.corpus.passages, queries, cfg.eval_depth, opts.threads);
        RunFile run = RunFile::from_rankings(rankings, c.name());
        run.validate();
        save_run(out / "runs" / (c.name() + ".run"), run);
        ConditionOutcome o{c, {}, evaluate(rankings, tb.corpus.qrels)};
        for (const auto& [qid, v] : queries) o.query_ids.push_back(qid);
        save_metric_csv(out / "metrics" / (c.name() + ".csv"), o.report);
        result.outcomes.emplace(c.name(), std::move(o));
      } catch (const Error& e) {
        log.error("condition " + c.name() + " failed: " + e.what());
        result.failed.push_back(c.name());
      }
    }
  }

  result.comparisons = compare_conditions(result);
  write_file_atomic(out / "significance.csv",
                    [&](std::ofstream& f) { write_significance_csv(f, result.comparisons); });
  write_file_atomic(out / "summary.csv", [&](std::ofstream& f) { write_summary_csv(f, result); });
  write_file_atomic(out / "report.md", [&](std::ofstream& f) { write_report(f, result); });
  log.info("done: " + std::to_string(result.outcomes.size()) + " conditions, " +
           std::to_string(result.failed.size()) + " failed");
  return result;
}

// ---------------------------------------------------------------------------
// eta sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  double eta = 0.0;
  std::string condition;  // "<behavior>_<algorithm>"
  std::string metric = "ndcg@10";
  double mean = 0.0;
};

/// Behaviours named by the configured non-baseline conditions; both if none.
inline std::vector<Behavior> sweep_behaviors(const ExperimentConfig& cfg) {
  std::vector<Behavior> out;
  for (const auto& c : cfg.conditions) {
    if (!c.baseline && std::find(out.begin(), out.end(), c.behavior) == out.end()) out.push_back(c.behavior);
  }
  if (out.empty()) out = {Behavior::perfect, Behavior::noisy};
  std::sort(out.begin(), out.end());
  return out;
}

/// Mean seen-set nDCG@10 of rocchio and corocchio for every (eta, behaviour).
inline std::vector<SweepRow> sweep_eta(const ExperimentConfig& cfg, const std::vector<double>& etas,
                                       std::size_t threads = 1, RunLog* log = nullptr) {
  cfg.validate();
  if (etas.empty()) throw ConfigError("sweep needs at least one eta");
  for (double e : etas) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("sweep etas must be >= 0");
  }
  Testbed tb = build_testbed(cfg.effective_synth());
  std::vector<SweepRow> rows;
  for (double eta : etas) {
    for (Behavior b : sweep_behaviors(cfg)) {
      if (log) log->info("sweep eta=" + format_real(eta) + " " + std::string(to_string(b)));
      ClickLog clicks = simulate_log(tb, UserModel(b, eta), cfg, threads);
      for (Algorithm a : {Algorithm::rocchio, Algorithm::corocchio}) {
        Condition c = Condition::make(b, eta, a);
        auto queries = condition_queries(c, tb, &clicks, cfg.feedback, threads);
        auto rankings = retrieve_all(tb.corpus.passages, queries, 10, threads);
        double sum = 0.0;
        for (const auto& r : rankings) sum += ndcg_at_k(r, tb.corpus.qrels, 10);
        rows.push_back({eta, std::string(to_string(b)) + "_" + std::string(to_string(a)), "ndcg@10",
                        rankings.empty() ? 0.0 : sum / static_cast<double>(rankings.size())});
      }
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "eta,condition,metric,mean\n";
  for (const auto& r : rows) {
    out << format_real(r.eta) << ',' << r.condition << ',' << r.metric << ',' << format_real(r.mean) << '\n';
  }
}

}  // namespace corocchio
