// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// fgd: command-line driver for the retrieval pipeline.
//
// Every verb reads one JSON config (--config) plus --set key=value
// overrides, works inside --workdir, and writes a manifest there.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fgd/checkpoint.hpp"
#include "fgd/errors.hpp"
#include "fgd/manifest.hpp"
#include "fgd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fgd;
using namespace fgd::pipeline;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string workdir = "fgd-run";
  bool quiet = false;
};

struct Context {
  TrainConfig config;
  fs::path dir;
  Logger log;

  fs::path corpus_dir() const { return dir / "corpus"; }
  fs::path path(const std::string& name) const { return dir / name; }
};

Context make_context(const Options& o) {
  Context c;
  const TrainConfig base =
      o.config_path.empty() ? TrainConfig{} : TrainConfig::load(o.config_path);
  c.config = base.with_overrides(o.overrides);
  c.dir = o.workdir;
  fs::create_directories(c.dir);
  if (!o.quiet) c.log = [](const std::string& s) { std::cerr << s << '\n'; };
  return c;
}

Collection load_corpus(const Context& c) {
  if (!fs::exists(c.corpus_dir() / "corpus.json")) {
    throw ConfigError("no corpus in " + c.corpus_dir().string() +
                      "; run gen-corpus first");
  }
  return corpus::load_collection(c.corpus_dir());
}

encoder::EncoderParams load_encoder(const Context& c, const fs::path& path) {
  return encoder::EncoderParams::from_tensors(c.config.encoder_config(),
                                              load_checkpoint(path));
}

void write_log(const fs::path& path, const std::vector<StepRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  for (const StepRecord& r : log) out << r.to_json().dump() << '\n';
}

void write_state(const Context& c, const StageState& s) {
  std::ofstream out(c.path(s.stage + ".json"), std::ios::trunc);
  out << s.to_json().dump(2) << '\n';
}

StageState read_state(const Context& c, const std::string& stage) {
  std::ifstream in(c.path(stage + ".json"));
  if (!in) throw ConfigError("stage '" + stage + "' has not been run in " +
                             c.dir.string());
  return StageState::from_json(json::parse(in));
}

std::string stage_name(int stage) { return "stage" + std::to_string(stage); }

void cmd_gen_corpus(const Context& c, const std::string& out_arg) {
  Manifest m("gen-corpus", c.config);
  const Collection col = corpus::generate_collection(c.config.corpus);
  const fs::path out = out_arg.empty() ? c.corpus_dir() : fs::path(out_arg);
  corpus::save_collection(out, col);
  m.add_output("corpus", out);
  m.set("collection_fingerprint", corpus::collection_fingerprint(col));
  m.write(c.dir);
  std::cout << "wrote " << col.documents.size() << " documents and "
            << col.queries.size() << " queries to " << out << '\n';
}

void cmd_train_teacher(const Context& c) {
  Manifest m("train-teacher", c.config);
  const Collection col = load_corpus(c);
  const Splits splits = make_splits(col, c.config.splits);
  const TeacherResult t = train_teacher(col, splits.train, c.config, c.log);
  const fs::path out = c.path("teacher.ckpt");
  save_checkpoint(out, t.params.all_tensors());
  auto params = std::make_shared<const scoring::CrossEncoderParams>(t.params);
  TeacherScorer scorer(params, col);
  const double acc = teacher_span_accuracy(scorer, col, splits.dev, 1,
                                           c.config.teacher.label_scale);
  m.add_input("corpus", c.corpus_dir());
  m.add_output("teacher", out);
  m.set("teacher_fingerprint", t.params.fingerprint());
  m.set("epoch_loss", t.epoch_loss);
  m.set("dev_span_accuracy", acc);
  m.write(c.dir);
  std::cout << "teacher " << t.params.fingerprint() << " dev span accuracy "
            << acc << '\n';
}

void cmd_warm_start(const Context& c) {
  Manifest m("warm-start", c.config);
  const Collection col = load_corpus(c);
  const Splits splits = make_splits(col, c.config.splits);
  const WarmStartResult w =
      train_warm_start(col, splits, c.config, c.config.seed, c.log);
  const fs::path out = c.path("warm.ckpt");
  save_checkpoint(out, w.train.params.tensors());
  write_log(c.path("loss-warm.jsonl"), w.train.log);
  StageState s;
  s.stage = "warm";
  s.encoder_checkpoint = out.string();
  s.encoder_fingerprint = w.train.params.fingerprint();
  s.metrics.push_back({{"untrained_mrr@10", w.untrained_mrr10},
                       {"warm_mrr@10", w.warm_mrr10}});
  write_state(c, s);
  m.add_input("corpus", c.corpus_dir());
  m.add_output("checkpoint", out);
  m.set("encoder_fingerprint", s.encoder_fingerprint);
  m.set("metrics", s.metrics.back());
  m.write(c.dir);
  std::cout << "warm start dev mrr@10 " << w.warm_mrr10 << " (untrained "
            << w.untrained_mrr10 << ")\n";
}

void cmd_mine(const Context& c, int stage, std::size_t depth,
              const std::string& out_arg) {
  Manifest m("mine-" + stage_name(stage), c.config);
  const Collection col = load_corpus(c);
  const Splits splits = make_splits(col, c.config.splits);
  const StageState parent = read_state(c, stage == 1 ? "warm" : "stage1");
  mining::MiningConfig mc = c.config.mining;
  if (depth > 0) mc.depths[0] = depth;
  const mining::PoolSet pools = mining::refresh_negatives(
      stage_name(stage), col, splits.train, parent.encoder_checkpoint,
      c.config.encoder_config(), mc);
  for (const auto& [qid, pool] : pools.pools) mining::validate_pool(pool);
  const fs::path out =
      out_arg.empty() ? c.path("pools-" + stage_name(stage) + ".jsonl")
                      : fs::path(out_arg);
  mining::save_pools(out, pools);
  m.add_input("retriever", parent.encoder_checkpoint);
  m.add_output("pools", out);
  m.set("retriever_fingerprint", pools.retriever_fingerprint);
  m.set("depths", pools.depths);
  m.write(c.dir);
  std::cout << "mined " << pools.pools.size() << " pools with depths "
            << json(pools.depths).dump() << " into " << out << '\n';
}

scoring::LossFlags row_flags(const std::string& row, encoder::SpanPooling& pooling,
                             const scoring::LossFlags& fallback) {
  if (row.empty()) return fallback;
  for (const AblationRow& r : ablation_rows()) {
    if (r.name == row) {
      pooling = r.pooling;
      return r.flags;
    }
  }
  throw ConfigError("unknown ablation row '" + row + "'");
}

void cmd_train(const Context& c, int stage, const std::string& row) {
  if (stage != 1 && stage != 2) throw ConfigError("--stage must be 1 or 2");
  Manifest m("train-" + stage_name(stage), c.config);
  const Collection col = load_corpus(c);
  const Splits splits = make_splits(col, c.config.splits);
  const StageState parent = read_state(c, stage == 1 ? "warm" : "stage1");
  const encoder::EncoderParams init = load_encoder(c, parent.encoder_checkpoint);
  const fs::path pools_path = c.path("pools-" + stage_name(stage) + ".jsonl");
  const mining::PoolSet pools = mining::load_pools(pools_path);
  StageState s;
  s.stage = stage_name(stage);
  s.parent_fingerprint = init.fingerprint();
  s.pools = pools_path.string();
  TrainResult r;
  if (stage == 1) {
    r = train_stage1(init, col, splits.train, pools, c.config, c.config.seed, c.log);
  } else {
    const fs::path tpath = c.path("teacher.ckpt");
    if (!fs::exists(tpath)) {
      throw ConfigError("stage 2 needs a teacher; run train-teacher first");
    }
    auto teacher = std::make_shared<const scoring::CrossEncoderParams>(
        scoring::CrossEncoderParams::from_tensors(c.config.teacher_config(),
                                                  load_checkpoint(tpath)));
    TeacherScorer scorer(teacher, col);
    scoring::LossConfig loss = c.config.loss;
    encoder::SpanPooling pooling = c.config.span_pooling;
    loss.flags = row_flags(row, pooling, loss.flags);
    r = train_stage2_fgd(init, col, splits.train, pools, &scorer, c.config, loss,
                         pooling, c.config.seed, c.log);
    s.teacher_fingerprint = teacher->fingerprint();
    m.add_input("teacher", tpath);
  }
  const fs::path out = c.path(stage_name(stage) + ".ckpt");
  save_checkpoint(out, r.params.tensors());
  write_log(c.path("loss-" + stage_name(stage) + ".jsonl"), r.log);
  s.encoder_checkpoint = out.string();
  s.encoder_fingerprint = r.params.fingerprint();
  const index::EvalReport e = evaluate_retriever(col, r.params, splits.dev, c.config);
  s.metrics.push_back(e.metrics);
  write_state(c, s);
  m.add_input("init", parent.encoder_checkpoint);
  m.add_input("pools", pools_path);
  m.add_output("checkpoint", out);
  m.set("encoder_fingerprint", s.encoder_fingerprint);
  m.set("metrics", e.metrics);
  m.write(c.dir);
  std::cout << stage_name(stage) << " dev " << json(e.metrics).dump() << '\n';
}

fs::path default_checkpoint(const Context& c, const std::string& given) {
  if (!given.empty()) return given;
  for (const char* stage : {"stage2", "stage1", "warm"}) {
    if (fs::exists(c.path(std::string(stage) + ".ckpt"))) {
      return c.path(std::string(stage) + ".ckpt");
    }
  }
  throw ConfigError("no trained checkpoint in " + c.dir.string());
}

void cmd_index(const Context& c, const std::string& ckpt, bool spans,
               const std::string& out_arg) {
  Manifest m("index", c.config);
  const Collection col = load_corpus(c);
  const fs::path cp = default_checkpoint(c, ckpt);
  const encoder::EncoderParams p = load_encoder(c, cp);
  const index::DenseIndex idx =
      index::build_index(col, p, spans, c.config.span_pooling);
  const fs::path out = out_arg.empty() ? c.path("index.bin") : fs::path(out_arg);
  index::save_index(out, idx);
  m.add_input("checkpoint", cp);
  m.add_output("index", out);
  m.set("encoder_fingerprint", idx.encoder_fingerprint);
  m.write(c.dir);
  std::cout << "indexed " << idx.size() << " documents and "
            << idx.span_keys.size() << " spans into " << out << '\n';
}

void cmd_search(const Context& c, const std::string& ckpt,
                const std::string& index_arg, long query_id,
                const std::string& tokens, std::size_t k, double gamma) {
  Manifest m("search", c.config);
  const fs::path cp = default_checkpoint(c, ckpt);
  const encoder::EncoderParams p = load_encoder(c, cp);
  const fs::path ipath = index_arg.empty() ? c.path("index.bin") : fs::path(index_arg);
  const index::DenseIndex idx = index::load_index(ipath, p.fingerprint());
  std::vector<corpus::TokenId> q;
  if (query_id >= 0) {
    q = load_corpus(c).query(static_cast<QueryId>(query_id)).tokens;
  } else {
    std::istringstream is(tokens);
    for (corpus::TokenId t; is >> t;) q.push_back(t);
  }
  const auto u = index::query_vector(q, p);
  const index::SearchResult r = gamma > 0.0
                                    ? index::ensemble_search(u, idx, k, gamma)
                                    : index::search(u, idx, k);
  json hits = json::array();
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    std::cout << i + 1 << '\t' << r.hits[i].doc << '\t' << r.hits[i].score << '\n';
    hits.push_back({r.hits[i].doc, r.hits[i].score});
  }
  m.add_input("checkpoint", cp);
  m.add_input("index", ipath);
  m.set("query", q);
  m.set("hits", hits);
  m.write(c.dir);
}

void cmd_eval(const Context& c, const std::string& ckpt,
              const std::string& metrics, std::optional<double> gamma,
              const std::string& split) {
  Manifest m("eval", c.config);
  TrainConfig config = c.config;
  if (!metrics.empty()) {
    config.eval.metrics.clear();
    std::istringstream is(metrics);
    for (std::string s; std::getline(is, s, ',');) config.eval.metrics.push_back(s);
  }
  const Collection col = load_corpus(c);
  const Splits splits = make_splits(col, config.splits);
  const QueryList& queries = split == "train" ? splits.train
                             : split == "warm" ? splits.warm
                                               : splits.dev;
  const fs::path cp = default_checkpoint(c, ckpt);
  const encoder::EncoderParams p = load_encoder(c, cp);
  const index::EvalReport e =
      evaluate_retriever(col, p, queries, config, gamma, config.span_pooling);
  const json report{{"checkpoint", cp.string()},
                    {"split", split},
                    {"gamma", gamma ? json(*gamma) : json(nullptr)},
                    {"metrics", e.metrics},
                    {"excluded_queries", e.excluded}};
  std::ofstream(c.path("eval.json"), std::ios::trunc) << report.dump(2) << '\n';
  m.add_input("checkpoint", cp);
  m.add_output("report", c.path("eval.json"));
  m.set("metrics", e.metrics);
  m.write(c.dir);
  std::cout << report.dump(2) << '\n';
}

void cmd_matrix(const Context& c) {
  Manifest m("matrix", c.config);
  const MatrixReport r = run_experiment_matrix(c.config, ablation_rows(), c.log);
  const fs::path json_out = c.path("matrix.json");
  const fs::path md_out = c.path("matrix.md");
  std::ofstream(json_out, std::ios::trunc) << r.to_json().dump(2) << '\n';
  std::ofstream(md_out, std::ios::trunc) << r.to_markdown();
  m.add_output("report", json_out);
  m.add_output("table", md_out);
  m.set("collection_fingerprint", r.collection_fingerprint);
  m.set("teacher_fingerprint", r.teacher_fingerprint);
  m.write(c.dir);
  std::cout << r.to_markdown();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fgd: fine-grained distillation for long-document retrieval"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_path, "JSON config file");
  app.add_option("-s,--set", o.overrides, "override, e.g. loss.lambda=0.5");
  app.add_option("-w,--workdir", o.workdir, "artifact directory");
  app.add_flag("-q,--quiet", o.quiet, "no progress output");

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  std::optional<std::size_t> docs, topics, doc_len;
  std::optional<std::uint64_t> corpus_seed;
  std::string corpus_out;
  gen->add_option("--docs", docs, "number of documents");
  gen->add_option("--topics", topics, "topic blocks per document");
  gen->add_option("--doc-len", doc_len, "tokens per document");
  gen->add_option("--seed", corpus_seed, "generator seed");
  gen->add_option("--out", corpus_out, "output directory (default <workdir>/corpus)");
  auto* teacher = app.add_subcommand("train-teacher", "train the cross-encoder");
  auto* warm = app.add_subcommand("warm-start", "train the initial retriever");

  int stage = 1;
  std::size_t depth = 0;
  std::string out;
  auto* mine = app.add_subcommand("mine", "mine hard negative pools");
  mine->add_option("--stage", stage, "1 or 2")->required()->check(CLI::Range(1, 2));
  mine->add_option("--depth", depth, "document mining depth");
  mine->add_option("--out", out, "pool file");

  std::string row;
  auto* train = app.add_subcommand("train", "train stage 1 or stage 2");
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::Range(1, 2));
  train->add_option("--row", row, "ablation row name, e.g. \"w/o ALL\"");

  std::string ckpt;
  bool spans = false;
  auto* idx = app.add_subcommand("index", "embed the collection");
  idx->add_option("--checkpoint", ckpt, "encoder checkpoint");
  idx->add_flag("--spans", spans, "also store passage and sentence vectors");
  idx->add_option("--out", out, "index file");

  long query_id = -1;
  std::string tokens;
  std::size_t k = 100;
  double gamma = 0.0;
  std::string index_path;
  auto* search = app.add_subcommand("search", "rank the collection for a query");
  search->add_option("--checkpoint", ckpt, "encoder checkpoint");
  search->add_option("--index", index_path, "index file");
  search->add_option("--query-id", query_id, "query from the corpus");
  search->add_option("--tokens", tokens, "space-separated token ids");
  search->add_option("--k", k, "cutoff")->check(CLI::PositiveNumber);
  search->add_option("--gamma", gamma, "ensemble weight (needs --spans index)");

  std::string metrics, split = "dev";
  std::optional<double> eval_gamma;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt, "encoder checkpoint");
  eval->add_option("--metrics", metrics, "e.g. mrr@100,r@100,ndcg@10");
  eval->add_option("--gamma", eval_gamma, "multi-vector ensemble weight");
  eval->add_option("--split", split, "dev, train or warm")
      ->check(CLI::IsMember({"dev", "train", "warm"}));

  auto* matrix = app.add_subcommand("matrix", "run every ablation row and the gamma sweep");

  CLI11_PARSE(app, argc, argv);
  try {
    if (docs) o.overrides.push_back("corpus.num_docs=" + std::to_string(*docs));
    if (topics) o.overrides.push_back("corpus.topics_per_doc=" + std::to_string(*topics));
    if (doc_len) o.overrides.push_back("corpus.doc_length=" + std::to_string(*doc_len));
    if (corpus_seed) o.overrides.push_back("corpus.seed=" + std::to_string(*corpus_seed));
    const Context c = make_context(o);
    if (*gen) cmd_gen_corpus(c, corpus_out);
    if (*teacher) cmd_train_teacher(c);
    if (*warm) cmd_warm_start(c);
    if (*mine) cmd_mine(c, stage, depth, out);
    if (*train) cmd_train(c, stage, row);
    if (*idx) cmd_index(c, ckpt, spans, out);
    if (*search) {
      if (query_id < 0 && tokens.empty()) {
        throw ConfigError("search needs --query-id or --tokens");
      }
      cmd_search(c, ckpt, index_path, query_id, tokens, k, gamma);
    }
    if (*eval) cmd_eval(c, ckpt, metrics, eval_gamma, split);
    if (*matrix) cmd_matrix(c);
  } catch (const Error& e) {
    std::cerr << "fgd: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fgd: unexpected failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
