#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "inferqa/corpus.hpp"
#include "inferqa/forge.hpp"
#include "inferqa/json_io.hpp"
#include "inferqa/fusion.hpp"
#include "inferqa/judge.hpp"
#include "inferqa/labeler.hpp"
#include "inferqa/metrics.hpp"
#include "inferqa/pipeline.hpp"
#include "inferqa/rerank.hpp"
#include "inferqa/retrieval.hpp"
#include "inferqa/serve.hpp"

namespace fs = std::filesystem;
using namespace inferqa;

namespace {

ModelConfig load_models(const std::string& file) {
  return ModelConfig::from_json_text(read_file(file), fs::path(file).parent_path());
}

std::unique_ptr<LeakageOracle> make_oracle(const std::string& kind,
                                           const EquivalenceJudge* judge) {
  if (kind == "lexical") return std::make_unique<LexicalLeakageOracle>();
  if (kind == "judge") {
    if (judge == nullptr) throw std::invalid_argument("the judge oracle needs --models");
    return std::make_unique<JudgeLeakageOracle>(*judge);
  }
  throw std::invalid_argument("unknown leakage oracle '" + kind + "'");
}

std::set<Split> parse_splits(const std::string& csv) {
  std::set<Split> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(parse_split(item));
  }
  return out;
}

void warn_if_lexical(const EquivalenceJudge& judge) {
  if (judge.lexical()) {
    std::cerr << "warning: no judge endpoint configured; using the lexical judge\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference-style QA corpus construction, retrieval and evaluation"};
  app.require_subcommand(1);

  // forge
  auto* forge_cmd = app.add_subcommand("forge", "Filter leaking questions and synthesize passages");
  std::string forge_input, forge_out, forge_oracle = "lexical", forge_models;
  forge_cmd->add_option("--input", forge_input, "Raw questions JSONL")->required();
  forge_cmd->add_option("--out", forge_out, "Output corpus directory")->required();
  forge_cmd->add_option("--oracle", forge_oracle, "Leakage oracle: lexical or judge");
  forge_cmd->add_option("--models", forge_models, "Model config (for the judge oracle)");

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Closed-book parametric filter and split sampling");
  std::string filter_corpus, filter_models, filter_out;
  int filter_trials = 3;
  std::size_t n_train = 0, n_test = 0;
  std::uint64_t filter_seed = 13;
  filter_cmd->add_option("--corpus", filter_corpus)->required();
  filter_cmd->add_option("--models", filter_models)->required();
  filter_cmd->add_option("--out", filter_out, "Output directory (default: in place)");
  filter_cmd->add_option("--trials", filter_trials);
  filter_cmd->add_option("--n-train", n_train)->required();
  filter_cmd->add_option("--n-test", n_test)->required();
  filter_cmd->add_option("--seed", filter_seed);

  // label
  auto* label_cmd = app.add_subcommand("label", "Label every passage with the reader ensemble");
  std::string label_corpus_dir, label_models, label_out;
  std::size_t label_workers = 1;
  label_cmd->add_option("--corpus", label_corpus_dir)->required();
  label_cmd->add_option("--models", label_models)->required();
  label_cmd->add_option("--out", label_out, "Output directory (default: in place)");
  label_cmd->add_option("--workers", label_workers);

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Human verification of harvested answers");
  verify_cmd->require_subcommand(1);
  auto* export_cmd = verify_cmd->add_subcommand("export", "Write verification tasks");
  std::string vx_corpus, vx_out, vx_splits = "dev,test", vx_decisions;
  export_cmd->add_option("--corpus", vx_corpus)->required();
  export_cmd->add_option("--out", vx_out)->required();
  export_cmd->add_option("--splits", vx_splits);
  export_cmd->add_option("--decisions", vx_decisions, "Attach decisions from this log");
  auto* apply_cmd = verify_cmd->add_subcommand("apply", "Apply decisions to the corpus");
  std::string va_corpus, va_tasks, va_decisions, va_out, va_oracle = "lexical", va_models;
  apply_cmd->add_option("--corpus", va_corpus)->required();
  apply_cmd->add_option("--tasks", va_tasks)->required();
  apply_cmd->add_option("--decisions", va_decisions)->required();
  apply_cmd->add_option("--out", va_out)->required();
  apply_cmd->add_option("--oracle", va_oracle);
  apply_cmd->add_option("--models", va_models);

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "First-stage retrieval");
  std::string r_corpus, r_out, r_split = "all";
  RetrieverConfig r_cfg;
  std::string r_metric = "cosine";
  retrieve_cmd->add_option("--corpus", r_corpus)->required();
  retrieve_cmd->add_option("--out", r_out)->required();
  retrieve_cmd->add_option("--method", r_cfg.method, "bm25 or dense");
  retrieve_cmd->add_option("--k", r_cfg.k);
  retrieve_cmd->add_option("--k1", r_cfg.bm25.k1);
  retrieve_cmd->add_option("--b", r_cfg.bm25.b);
  retrieve_cmd->add_option("--embedder", r_cfg.embedder, "hash or http");
  retrieve_cmd->add_option("--dim", r_cfg.dim);
  retrieve_cmd->add_option("--url", r_cfg.base_url);
  retrieve_cmd->add_option("--model", r_cfg.model);
  retrieve_cmd->add_option("--metric", r_metric, "cosine or inner_product");
  retrieve_cmd->add_option("--split", r_split);

  // rerank
  auto* rerank_cmd = app.add_subcommand("rerank", "Rerank a run");
  std::string rr_corpus, rr_in, rr_out;
  RerankerConfig rr_cfg;
  rerank_cmd->add_option("--corpus", rr_corpus)->required();
  rerank_cmd->add_option("--in", rr_in)->required();
  rerank_cmd->add_option("--out", rr_out)->required();
  rerank_cmd->add_option("--scorer", rr_cfg.scorer);
  rerank_cmd->add_option("--depth", rr_cfg.depth);
  rerank_cmd->add_option("--url", rr_cfg.base_url);

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse the top-k passages of a run into contexts");
  std::string f_corpus, f_run, f_out, f_method = "union_freq";
  FusionConfig f_cfg;
  int f_k = 5;
  std::optional<std::size_t> f_cap;
  fuse_cmd->add_option("--corpus", f_corpus)->required();
  fuse_cmd->add_option("--run", f_run)->required();
  fuse_cmd->add_option("--out", f_out)->required();
  fuse_cmd->add_option("--method", f_method, "union_norm or union_freq");
  fuse_cmd->add_option("--alpha", f_cfg.alpha);
  fuse_cmd->add_option("--beta", f_cfg.beta);
  fuse_cmd->add_option("--k", f_k);
  fuse_cmd->add_option("--cap", f_cap, "Keep at most this many sentences");

  // read
  auto* read_cmd = app.add_subcommand("read", "Answer questions from fused contexts");
  std::string rd_corpus, rd_contexts, rd_models, rd_out, rd_reader;
  std::size_t rd_workers = 1;
  read_cmd->add_option("--corpus", rd_corpus)->required();
  read_cmd->add_option("--contexts", rd_contexts)->required();
  read_cmd->add_option("--models", rd_models)->required();
  read_cmd->add_option("--out", rd_out)->required();
  read_cmd->add_option("--reader", rd_reader, "Reader endpoint (default: first configured)");
  read_cmd->add_option("--workers", rd_workers);

  // qrels
  auto* qrels_cmd = app.add_subcommand("qrels", "Export relevance judgments as qrels");
  std::string q_corpus, q_out;
  int q_threshold = 1;
  qrels_cmd->add_option("--corpus", q_corpus)->required();
  qrels_cmd->add_option("--out", q_out)->required();
  qrels_cmd->add_option("--threshold", q_threshold, "Lowest label written")->check(CLI::Range(0, 2));

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score runs and reader answers");
  std::string e_qrels, e_config, e_corpus, e_split = "all", e_jsonl, e_md;
  std::vector<std::string> e_runs, e_answers;
  eval_cmd->add_option("--qrels", e_qrels)->required();
  eval_cmd->add_option("--run", e_runs, "Run files (one row each)");
  eval_cmd->add_option("--answers", e_answers, "Reader answer files (needs --corpus)");
  eval_cmd->add_option("--config", e_config, "Metric config JSON");
  eval_cmd->add_option("--corpus", e_corpus, "Corpus for the question set and answer pools");
  eval_cmd->add_option("--split", e_split);
  eval_cmd->add_option("--out-jsonl", e_jsonl);
  eval_cmd->add_option("--out-md", e_md);

  // run
  auto* run_cmd = app.add_subcommand("run", "Run an experiment manifest end to end");
  std::string manifest_file;
  run_cmd->add_option("--manifest", manifest_file)->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the verification API");
  std::string s_corpus, s_decisions, s_token, s_host = "127.0.0.1", s_static, s_splits = "dev,test";
  int s_port = 8080;
  serve_cmd->add_option("--corpus", s_corpus)->required();
  serve_cmd->add_option("--decisions", s_decisions)->required();
  serve_cmd->add_option("--token", s_token, "Bearer token (default: $INFERQA_TOKEN)");
  serve_cmd->add_option("--host", s_host);
  serve_cmd->add_option("--port", s_port);
  serve_cmd->add_option("--static", s_static, "Directory with the UI build");
  serve_cmd->add_option("--splits", s_splits);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*forge_cmd) {
      auto raw = load_questions(forge_input, false);
      std::unique_ptr<EquivalenceJudge> judge;
      std::optional<ModelConfig> models;
      if (!forge_models.empty()) {
        models = load_models(forge_models);
        judge = models->build_judge(raw);
      }
      auto oracle = make_oracle(forge_oracle, judge.get());
      auto result = forge(raw, *oracle);
      Corpus corpus{result.questions, result.passages, {}};
      corpus.sort();
      save_corpus(corpus, forge_out);
      write_file(fs::path(forge_out) / "forge_report.json", result.report.to_json());
      std::cout << result.report.to_json();
    } else if (*filter_cmd) {
      auto corpus = load_corpus(filter_corpus);
      auto models = load_models(filter_models);
      auto endpoints = models.build(models.closed_book, corpus.questions);
      if (endpoints.empty()) throw std::invalid_argument("no closed_book endpoints configured");
      auto judge = models.build_judge(corpus.questions);
      warn_if_lexical(*judge);
      for (auto& q : corpus.questions) {
        q.parametric = parametric_filter(q, endpoints, *judge, filter_trials);
      }
      auto splits = sample_splits(corpus.questions, n_train, n_test, filter_seed);
      for (const auto& w : splits.warnings) std::cerr << "warning: " << w << "\n";
      for (auto& q : corpus.questions) q.split = splits.splits.at(q.id);
      save_corpus(corpus, filter_out.empty() ? filter_corpus : filter_out);
      std::size_t parametric = 0;
      for (const auto& q : corpus.questions) parametric += q.parametric.value_or(false) ? 1 : 0;
      std::cout << "parametric " << parametric << " of " << corpus.questions.size() << "\n";
    } else if (*label_cmd) {
      auto corpus = load_corpus(label_corpus_dir);
      auto models = load_models(label_models);
      auto endpoints = models.build(models.labelers, corpus.questions);
      if (endpoints.empty()) throw std::invalid_argument("no labeler endpoints configured");
      auto judge = models.build_judge(corpus.questions);
      warn_if_lexical(*judge);
      auto outcome = label_corpus(corpus, endpoints, *judge, label_workers);
      auto out_dir = label_out.empty() ? fs::path(label_corpus_dir) : fs::path(label_out);
      save_corpus(outcome.corpus, out_dir);
      std::string failures;
      for (const auto& job : outcome.jobs) {
        if (job.status != JobStatus::failed) continue;
        failures += nlohmann::json{{"question_id", job.question_id},
                                   {"passage_id", job.passage_id},
                                   {"error", job.error}}
                        .dump() +
                    "\n";
      }
      write_file(out_dir / "labeling_failures.jsonl", failures);
      write_file(out_dir / "qrels.tsv", export_qrels(outcome.corpus, 1));
      std::cout << "labeled " << outcome.jobs.size() - outcome.failed << " of "
                << outcome.jobs.size() << " passages, " << outcome.failed << " failed\n";
    } else if (*export_cmd) {
      auto corpus = load_corpus(vx_corpus);
      auto tasks = export_verification(corpus, parse_splits(vx_splits));
      if (!vx_decisions.empty()) attach_decisions(tasks, DecisionLog(vx_decisions).folded());
      std::string out;
      for (const auto& t : tasks) out += task_to_json(t) + "\n";
      write_file(vx_out, out);
      std::cout << "exported " << tasks.size() << " tasks\n";
    } else if (*apply_cmd) {
      auto corpus = load_corpus(va_corpus);
      std::vector<VerificationTask> tasks;
      std::stringstream ss(read_file(va_tasks));
      for (std::string line; std::getline(ss, line);) {
        if (!line.empty()) tasks.push_back(task_from_json(line));
      }
      attach_decisions(tasks, DecisionLog(va_decisions).folded());
      std::unique_ptr<EquivalenceJudge> judge;
      if (!va_models.empty()) judge = load_models(va_models).build_judge(corpus.questions);
      auto oracle = make_oracle(va_oracle, judge.get());
      auto result = apply_verification(corpus, tasks, *oracle);
      save_corpus(result.corpus, va_out);
      std::string changes;
      for (const auto& c : result.changes) changes += c + "\n";
      write_file(fs::path(va_out) / "verification_changes.txt", changes);
      std::cout << result.changes.size() << " changes, " << result.removed_questions.size()
                << " questions removed\n";
    } else if (*retrieve_cmd) {
      auto corpus = load_corpus(r_corpus);
      r_cfg.metric = r_metric == "cosine" ? DenseMetric::cosine : DenseMetric::inner_product;
      if (r_metric != "cosine" && r_metric != "inner_product") {
        throw std::invalid_argument("unknown metric '" + r_metric + "'");
      }
      auto qids = questions_in_split(corpus, r_split);
      write_file(r_out, format_run(retrieve_all(corpus, qids, r_cfg)));
    } else if (*rerank_cmd) {
      auto corpus = load_corpus(rr_corpus);
      write_file(rr_out, format_run(rerank_all(corpus, read_run(rr_in), rr_cfg)));
    } else if (*fuse_cmd) {
      auto corpus = load_corpus(f_corpus);
      f_cfg.method = parse_fusion_method(f_method);
      f_cfg.sentence_cap = f_cap;
      if (f_k != 1 && f_k != 3 && f_k != 5) throw std::invalid_argument("k must be 1, 3 or 5");
      write_file(f_out, contexts_to_jsonl(fuse_all(corpus, read_run(f_run), f_cfg, f_k)));
    } else if (*read_cmd) {
      auto corpus = load_corpus(rd_corpus);
      auto models = load_models(rd_models);
      std::string name = rd_reader;
      if (name.empty()) {
        if (models.readers.empty()) throw std::invalid_argument("no readers configured");
        name = models.readers.front();
      }
      std::vector<std::string> names{name};
      auto reader = models.build(names, corpus.questions).front();
      auto outputs =
          read_all(corpus, contexts_from_jsonl(read_file(rd_contexts)), reader, rd_workers);
      write_file(rd_out, answers_to_jsonl(name, outputs));
    } else if (*qrels_cmd) {
      write_file(q_out, export_qrels(load_corpus(q_corpus), q_threshold));
    } else if (*eval_cmd) {
      auto qrels = read_qrels(e_qrels);
      MetricConfig config;
      if (!e_config.empty()) config = MetricConfig::from_json_text(read_file(e_config));
      Corpus corpus;
      std::vector<std::string> qids;
      if (!e_corpus.empty()) {
        corpus = load_corpus(e_corpus);
        qids = questions_in_split(corpus, e_split);
      } else {
        if (!e_answers.empty()) throw std::invalid_argument("--answers needs --corpus");
        for (const auto& [qid, labels] : qrels) qids.push_back(qid);
      }
      std::vector<SystemInput> systems;
      for (const auto& f : e_runs) systems.push_back({fs::path(f).stem().string(), read_run(f), {}});
      for (const auto& f : e_answers) {
        systems.push_back({fs::path(f).stem().string(), {}, answers_from_jsonl(read_file(f))});
      }
      auto report = build_report(systems, corpus, qrels, qids, config);
      if (!e_jsonl.empty()) write_file(e_jsonl, report.to_jsonl());
      if (!e_md.empty()) write_file(e_md, report.to_markdown());
      std::cout << report.to_markdown();
      for (const auto& row : report.rows) {
        for (const auto& flag : row.flags) std::cerr << row.system << ": " << flag << "\n";
      }
    } else if (*run_cmd) {
      auto manifest = ExperimentManifest::from_json_text(read_file(manifest_file),
                                                         fs::path(manifest_file).parent_path());
      auto corpus = load_corpus(manifest.corpus);
      auto result = run_manifest(manifest, corpus);
      std::cout << result.report.to_markdown();
      for (const auto& flag : result.flags) std::cerr << "note: " << flag << "\n";
    } else if (*serve_cmd) {
      if (s_token.empty()) {
        const char* env = std::getenv("INFERQA_TOKEN");
        if (env != nullptr) s_token = env;
      }
      ServeOptions options;
      options.token = s_token;
      if (!s_static.empty()) options.static_dir = s_static;
      options.splits = parse_splits(s_splits);
      VerificationServer server(load_corpus(s_corpus), s_decisions, options);
      std::cout << "serving on http://" << s_host << ":" << s_port << "\n" << std::flush;
      if (!server.listen(s_host, s_port)) {
        std::cerr << "error: could not listen on " << s_host << ":" << s_port << "\n";
        return 1;
      }
    }
  } catch (const PipelineError& e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
