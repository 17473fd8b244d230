// Command-line front end. Each subcommand reads and writes only the declared
// file formats, so any stage can be re-run on its own.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corocchio/corocchio.hpp"

namespace fs = std::filesystem;
using namespace corocchio;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

ExperimentConfig resolve_config(const Common& common) {
  ExperimentConfig cfg = common.config.empty() ? ExperimentConfig{} : load_config(common.config);
  if (common.seed) cfg.master_seed = *common.seed;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "key=value experiment config");
  cmd->add_option("--seed", common.seed, "master seed (overrides config)");
  cmd->add_option("--threads", common.threads, "worker threads, 0 = auto; never changes outputs");
}

void print_means(const MetricReport& report) {
  for (Metric m : kAllMetrics) {
    std::cout << metric_name(m) << '\t' << format_real(metric_value(report.means, m)) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Click-feedback query refinement laboratory for dense retrieval"};
  app.require_subcommand(1);

  Common common;

  // gen
  std::string gen_out = "data";
  std::string gen_format = "jsonl";
  auto* gen = app.add_subcommand("gen", "generate synthetic passages, queries, qrels and split");
  add_common(gen, common);
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--format", gen_format, "embedding format")->check(CLI::IsMember({"jsonl", "binary"}));

  // simulate
  std::string sim_passages, sim_queries, sim_qrels, sim_out, sim_behavior;
  std::optional<double> sim_eta;
  std::optional<std::size_t> sim_sessions, sim_depth;
  auto* simulate = app.add_subcommand("simulate", "simulate a click log over static SERPs");
  add_common(simulate, common);
  simulate->add_option("--passages", sim_passages)->required();
  simulate->add_option("--queries", sim_queries, "logged (seen) queries")->required();
  simulate->add_option("--qrels", sim_qrels)->required();
  simulate->add_option("--out", sim_out, "click-log file")->required();
  simulate->add_option("--behavior", sim_behavior)->check(CLI::IsMember({"perfect", "noisy"}));
  simulate->add_option("--eta", sim_eta);
  simulate->add_option("--sessions", sim_sessions);
  simulate->add_option("--depth", sim_depth, "SERP depth");

  // refine
  std::string ref_passages, ref_queries, ref_log, ref_out, ref_algorithm, ref_logged;
  std::optional<double> ref_alpha, ref_beta;
  std::optional<std::size_t> ref_k;
  bool ref_ann = false;
  auto* refine_cmd = app.add_subcommand("refine", "refine query vectors from a click log");
  add_common(refine_cmd, common);
  refine_cmd->add_option("--passages", ref_passages)->required();
  refine_cmd->add_option("--queries", ref_queries, "queries to refine")->required();
  refine_cmd->add_option("--log", ref_log, "click-log file")->required();
  refine_cmd->add_option("--out", ref_out, "refined query embeddings")->required();
  refine_cmd->add_option("--algorithm", ref_algorithm)->check(CLI::IsMember({"rocchio", "corocchio"}));
  refine_cmd->add_option("--alpha", ref_alpha);
  refine_cmd->add_option("--beta", ref_beta);
  refine_cmd->add_option("--ann-k", ref_k);
  refine_cmd->add_flag("--ann", ref_ann, "borrow feedback from the nearest logged queries");
  refine_cmd->add_option("--logged-queries", ref_logged, "query store searched by --ann");

  // retrieve
  std::string ret_passages, ret_queries, ret_out, ret_tag = "run";
  std::optional<std::size_t> ret_depth;
  auto* retrieve = app.add_subcommand("retrieve", "exact top-k retrieval into a TREC run file");
  add_common(retrieve, common);
  retrieve->add_option("--passages", ret_passages)->required();
  retrieve->add_option("--queries", ret_queries)->required();
  retrieve->add_option("--out", ret_out)->required();
  retrieve->add_option("--depth", ret_depth);
  retrieve->add_option("--tag", ret_tag);

  // evaluate
  std::string ev_run, ev_qrels, ev_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a TREC run against qrels");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--run", ev_run)->required();
  evaluate_cmd->add_option("--qrels", ev_qrels)->required();
  evaluate_cmd->add_option("--out", ev_out, "metric CSV");

  // run-all
  std::string all_out;
  std::vector<std::string> all_conditions;
  auto* run_all = app.add_subcommand("run-all", "run the full condition grid");
  add_common(run_all, common);
  run_all->add_option("--out", all_out, "output directory (default: config output_dir)");
  run_all->add_option("--condition", all_conditions, "only run these condition names");

  // sweep-eta
  std::string sweep_out;
  std::vector<double> sweep_etas;
  auto* sweep = app.add_subcommand("sweep-eta", "nDCG@10 of rocchio/corocchio across eta");
  add_common(sweep, common);
  sweep->add_option("--out", sweep_out, "output directory (default: config output_dir)");
  sweep->add_option("--etas", sweep_etas, "eta values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    ExperimentConfig cfg = resolve_config(common);
    const std::size_t threads = common.threads;

    if (*gen) {
      SynthConfig synth = cfg.effective_synth();
      Testbed tb = build_testbed(synth);
      fs::path dir = gen_out;
      const bool binary = gen_format == "binary";
      const char* ext = binary ? ".bin" : ".jsonl";
      save_embeddings(dir / (std::string("passages") + ext), tb.corpus.passages);
      save_embeddings(dir / (std::string("queries") + ext), tb.corpus.queries);
      save_embeddings(dir / (std::string("seen") + ext), tb.seen);
      save_embeddings(dir / (std::string("unseen") + ext), tb.unseen);
      save_qrels(dir / "qrels.txt", tb.corpus.qrels);
      write_text_atomic(dir / "manifest.json", to_json(synth).dump(2) + "\n");
      std::cout << "passages " << tb.corpus.passages.size() << ", queries " << tb.corpus.queries.size()
                << " (seen " << tb.seen.size() << ", unseen " << tb.unseen.size() << ")\n";
      return kExitOk;
    }

    if (*simulate) {
      if (!sim_behavior.empty()) cfg.behavior = parse_behavior(sim_behavior);
      if (sim_eta) cfg.eta = *sim_eta;
      if (sim_sessions) cfg.sessions_per_query = *sim_sessions;
      if (sim_depth) cfg.serp_depth = *sim_depth;
      cfg.validate();
      auto passages = load_embeddings(sim_passages, StoreKind::passage);
      auto queries = load_embeddings(sim_queries, StoreKind::query);
      auto qrels = load_qrels(sim_qrels);
      UserModel model(cfg.behavior, cfg.eta);
      ClickLog log = build_click_log(passages, queries, qrels, model, cfg.sessions_per_query,
                                     cfg.serp_depth, click_log_seed(cfg.master_seed, model.behavior()),
                                     threads);
      save_click_log(sim_out, log);
      return kExitOk;
    }

    if (*refine_cmd) {
      FeedbackConfig fb = cfg.feedback;
      if (!ref_algorithm.empty()) fb.algorithm = parse_algorithm(ref_algorithm);
      if (ref_alpha) fb.alpha = *ref_alpha;
      if (ref_beta) fb.beta = *ref_beta;
      if (ref_k) fb.ann_k = *ref_k;
      fb.validate();
      if (ref_ann && ref_logged.empty()) throw ConfigError("--ann needs --logged-queries");
      auto passages = load_embeddings(ref_passages, StoreKind::passage);
      auto queries = load_embeddings(ref_queries, StoreKind::query);
      ClickLog log = load_click_log(ref_log);
      std::optional<EmbeddingStore> logged;
      if (ref_ann) logged = load_embeddings(ref_logged, StoreKind::query);

      std::vector<EmbeddingStore::Entry> refined = queries.entries();
      parallel_for(refined.size(), threads, [&](std::size_t i) {
        auto& [qid, vec] = refined[i];
        if (ref_ann) {
          vec = feedback_ann(vec, *logged, log, passages, log.meta.eta, fb);
        } else {
          auto sessions = log.for_query(qid);
          if (sessions.empty()) throw NoFeedbackError("query " + qid + " has no logged sessions");
          vec = refine(vec, sessions, passages, log.meta.eta, fb);
        }
      });
      save_embeddings(ref_out, EmbeddingStore(StoreKind::query, std::move(refined)));
      return kExitOk;
    }

    if (*retrieve) {
      auto passages = load_embeddings(ret_passages, StoreKind::passage);
      auto queries = load_embeddings(ret_queries, StoreKind::query);
      auto rankings = retrieve_all(passages, queries.entries(), ret_depth.value_or(cfg.eval_depth), threads);
      save_run(ret_out, RunFile::from_rankings(rankings, ret_tag));
      return kExitOk;
    }

    if (*evaluate_cmd) {
      RunFile run = load_run(ev_run);
      Qrels qrels = load_qrels(ev_qrels);
      auto rankings = run.to_rankings();
      MetricReport report = evaluate(rankings, qrels);
      if (!ev_out.empty()) save_metric_csv(ev_out, report);
      print_means(report);
      return kExitOk;
    }

    if (*run_all) {
      fs::path out = all_out.empty() ? cfg.output_dir : fs::path(all_out);
      RunLog log(out / "run.log", true);
      RunOptions opts{out, threads, all_conditions, &log};
      ExperimentResult result = run_experiment(cfg, opts);
      std::cout << "conditions: " << result.outcomes.size() << " ok, " << result.failed.size()
                << " failed; outputs in " << out.string() << '\n';
      return result.failed.empty() ? kExitOk : kExitFailed;
    }

    if (*sweep) {
      fs::path out = sweep_out.empty() ? cfg.output_dir : fs::path(sweep_out);
      RunLog log(out / "run.log", true);
      auto rows = sweep_eta(cfg, sweep_etas.empty() ? cfg.sweep_etas : sweep_etas, threads, &log);
      write_file_atomic(out / "sweep_eta.csv", [&](std::ofstream& f) { write_sweep_csv(f, rows); });
      write_sweep_csv(std::cout, rows);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitOk;
}
