// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "fgd/checkpoint.hpp"
#include "fgd/errors.hpp"
#include "fgd/manifest.hpp"
#include "fgd/ops.hpp"
#include "fgd/optim.hpp"
#include "fgd/pipeline.hpp"

using namespace fgd;
using namespace fgd::pipeline;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.corpus.num_docs = 40;
  c.corpus.doc_length = 32;
  c.corpus.fragment_lengths = {16, 8};
  c.corpus.max_doc_length = 32;
  c.corpus.max_query_length = 8;
  c.corpus.query_length = 6;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_hidden = 16;
  c.teacher.hidden = 8;
  c.teacher.heads = 2;
  c.teacher.layers = 1;
  c.teacher.ffn_hidden = 16;
  c.teacher.head_hidden = 8;
  c.teacher.epochs = 1;
  c.teacher.pairs_per_query = 4;
  c.splits = {8, 16, 8};
  c.schedule.epochs_warm = 2;
  c.schedule.epochs_stage1 = 2;
  c.schedule.epochs_stage2 = 1;
  c.schedule.batch_size = 4;
  c.schedule.negatives = 3;
  c.schedule.max_span_negatives = 4;
  c.mining.depths = {6, 4, 4};
  c.eval.k = 20;
  c.eval.metrics = {"mrr@10", "r@20"};
  c.optim.lr = 5e-3;
  return c;
}

struct Fixture {
  TrainConfig config = tiny_config();
  Collection collection = corpus::generate_collection(config.corpus);
  Splits splits = make_splits(collection, config.splits);
};

std::vector<double> flat(const NamedTensors& t) {
  std::vector<double> out;
  for (const auto& [name, x] : t) {
    for (double v : x.data()) out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("config survives a JSON round trip and overrides") {
  const TrainConfig c = tiny_config();
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());

  const TrainConfig o =
      c.with_overrides({"loss.lambda=0.5", "encoder.span_pooling=mean",
                        "mining.depths=[7,3,3]"});
  CHECK(o.loss.lambda == 0.5);
  CHECK(o.span_pooling == encoder::SpanPooling::kMean);
  CHECK(o.mining.depths == std::vector<std::size_t>{7, 3, 3});
  CHECK(o.hash() != c.hash());

  const auto path = std::filesystem::temp_directory_path() / "fgd_cfg.json";
  c.save(path);
  CHECK(TrainConfig::load(path).hash() == c.hash());
  std::filesystem::remove(path);
}

TEST_CASE("bad configs are rejected") {
  const TrainConfig c = tiny_config();
  CHECK_THROWS_AS(c.with_overrides({"loss.lambda=-1"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"loss.no_such_key=1"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"missing_equals"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"mining.depths=[3,3]"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"encoder.span_pooling=max"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"splits.train_queries=100"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"eval.metrics=[\"map@10\"]"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"schedule.positives=2"}), ConfigError);
  CHECK_THROWS_AS(c.with_overrides({"schedule.random_negatives=4"}), ConfigError);
  // defaults are valid on their own
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("linear warmup then linear decay") {
  CHECK(warmup_linear_rate(1.0, 0, 4, 20) == doctest::Approx(0.25));
  CHECK(warmup_linear_rate(1.0, 3, 4, 20) == doctest::Approx(1.0));
  CHECK(warmup_linear_rate(1.0, 4, 4, 20) == doctest::Approx(1.0));
  CHECK(warmup_linear_rate(1.0, 12, 4, 20) == doctest::Approx(0.5));
  CHECK(warmup_linear_rate(1.0, 20, 4, 20) == doctest::Approx(0.0));
  CHECK(warmup_linear_rate(2.0, 5, 0, 10) == doctest::Approx(1.0));
}

TEST_CASE("first AdamW step moves each coordinate by about the rate") {
  NamedTensors p;
  p.add("x", Tensor::vector({1.0, -2.0}, true));
  OptimConfig oc;
  oc.lr = 0.1;
  oc.weight_decay = 0.5;
  oc.warmup_fraction = 0.0;
  AdamW opt(p, oc, 1000);
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor x = p.at("x");
    tape.backward(ops::sum_all(ops::mul(x, x)));
  }
  opt.step();
  // bias-corrected first step: update = g / |g|, plus decoupled decay
  const auto v = p.at("x").data();
  CHECK(v[0] == doctest::Approx(1.0 - 0.1 * (1.0 + 0.5 * 1.0)).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(-2.0 - 0.1 * (-1.0 + 0.5 * -2.0)).epsilon(1e-6));
  CHECK(opt.steps_taken() == 1);
  CHECK_THROWS_AS(AdamW(p, oc, 0), ConfigError);
}

TEST_CASE("teacher label is the covered fraction of distinct query tokens") {
  const std::vector<corpus::TokenId> q = {5, 6, 6, 7};
  CHECK(teacher_label(q, std::vector<corpus::TokenId>{6, 9, 5}, 3.0) ==
        doctest::Approx(2.0));
  CHECK(teacher_label(q, std::vector<corpus::TokenId>{}, 3.0) == 0.0);
  CHECK(teacher_label(q, std::vector<corpus::TokenId>{7, 6, 5, 5}, 1.0) ==
        doctest::Approx(1.0));
}

TEST_CASE("manifest hashes match git object ids") {
  const std::string hello = "hello\n";
  CHECK(git_blob_sha1(std::span(reinterpret_cast<const std::uint8_t*>(hello.data()),
                                hello.size())) ==
        "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1({}) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");

  const auto dir = std::filesystem::temp_directory_path() / "fgd_manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "in");
  std::ofstream(dir / "in" / "a.txt") << "hello\n";
  Manifest m("unit", tiny_config());
  m.add_input("file", dir / "in" / "a.txt");
  m.add_input("dir", dir / "in");
  m.set("note", 3);
  const auto path = m.write(dir);
  const auto j = nlohmann::json::parse(std::ifstream(path));
  CHECK(j["verb"] == "unit");
  CHECK(j["config_hash"] == tiny_config().hash());
  CHECK(j["inputs"]["file"]["sha1"] == "ce013625030ba8dba906f756967f9e9ca394464a");
  const std::string listing = "a.txt ce013625030ba8dba906f756967f9e9ca394464a\n";
  CHECK(j["inputs"]["dir"]["sha1"] ==
        git_blob_sha1(std::span(reinterpret_cast<const std::uint8_t*>(listing.data()),
                                listing.size())));
  CHECK(j["note"] == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("splits are disjoint, sized, sorted and reproducible") {
  Fixture f;
  std::set<QueryId> seen;
  for (const QueryList* l : {&f.splits.warm, &f.splits.train, &f.splits.dev}) {
    for (std::size_t i = 0; i + 1 < l->size(); ++i) {
      CHECK((*l)[i]->id < (*l)[i + 1]->id);
    }
    for (const QueryRecord* q : *l) CHECK(seen.insert(q->id).second);
  }
  CHECK(f.splits.warm.size() == 8);
  CHECK(f.splits.train.size() == 16);
  CHECK(f.splits.dev.size() == 8);
  const Splits again = make_splits(f.collection, f.config.splits);
  CHECK(again.train == f.splits.train);
  SplitConfig too_many{30, 30, 30};
  CHECK_THROWS_AS(make_splits(f.collection, too_many), ConfigError);
}

TEST_CASE("training is deterministic in the seed") {
  Fixture f;
  TrainInputs in;
  in.collection = &f.collection;
  in.queries = f.splits.train;
  in.sampler = std::make_shared<corpus::UniformNegativeSampler>(f.collection.documents.size());
  scoring::LossConfig cl;
  cl.flags = {true, false, false, false};
  const auto init = init_retriever(f.config, 1);
  const auto a = train_retriever(init, in, f.config, cl,
                                 encoder::SpanPooling::kGlobalAttention, 1, 3);
  in.sampler = std::make_shared<corpus::UniformNegativeSampler>(f.collection.documents.size());
  const auto b = train_retriever(init, in, f.config, cl,
                                 encoder::SpanPooling::kGlobalAttention, 1, 3);
  CHECK(a.params.fingerprint() == b.params.fingerprint());
  CHECK(a.params.fingerprint() != init.fingerprint());
  in.sampler = std::make_shared<corpus::UniformNegativeSampler>(f.collection.documents.size());
  const auto c = train_retriever(init, in, f.config, cl,
                                 encoder::SpanPooling::kGlobalAttention, 1, 4);
  CHECK(c.params.fingerprint() != a.params.fingerprint());
}

TEST_CASE("an objective with every term off leaves parameters unchanged") {
  Fixture f;
  TrainInputs in;
  in.collection = &f.collection;
  in.queries = f.splits.train;
  in.sampler = std::make_shared<corpus::UniformNegativeSampler>(f.collection.documents.size());
  scoring::LossConfig none;
  none.flags = {false, false, false, false};
  const auto init = init_retriever(f.config, 1);
  const auto r = train_retriever(init, in, f.config, none,
                                 encoder::SpanPooling::kGlobalAttention, 1, 3);
  CHECK(flat(r.params.tensors()) == flat(init.tensors()));
  for (const StepRecord& s : r.log) CHECK(s.total == 0.0);

  scoring::LossConfig zero_lambda;
  zero_lambda.lambda = 0.0;
  zero_lambda.flags = {true, false, false, false};
  const auto z = train_retriever(init, in, f.config, zero_lambda,
                                 encoder::SpanPooling::kGlobalAttention, 1, 3);
  CHECK(flat(z.params.tensors()) == flat(init.tensors()));
}

TEST_CASE("stage lineage and the teacher requirement are enforced") {
  Fixture f;
  const auto warm = init_retriever(f.config, 2);
  const auto other = init_retriever(f.config, 3);
  const mining::PoolSet pools = mining::refresh_negatives(
      "stage1", f.collection, f.splits.train, warm, f.config.mining);
  CHECK_NOTHROW(check_lineage(pools, "stage1", warm.fingerprint()));
  CHECK_THROWS_AS(check_lineage(pools, "stage2", warm.fingerprint()), ConfigError);
  CHECK_THROWS_AS(train_stage1(other, f.collection, f.splits.train, pools,
                               f.config, 1),
                  ConfigError);

  const mining::PoolSet p2 = mining::refresh_negatives(
      "stage2", f.collection, f.splits.train, warm, f.config.mining);
  CHECK_THROWS_AS(train_stage2_fgd(warm, f.collection, f.splits.train, p2, nullptr,
                                   f.config, f.config.loss,
                                   encoder::SpanPooling::kGlobalAttention, 1),
                  ConfigError);
  CHECK_THROWS_AS(train_stage1(warm, f.collection, f.splits.train, p2, f.config, 1),
                  ConfigError);
}

TEST_CASE("the contrastive-only row is the stage-1 trainer") {
  Fixture f;
  f.config.schedule.epochs_stage1 = 1;
  const auto start = init_retriever(f.config, 5);
  mining::PoolSet p2 = mining::refresh_negatives(
      "stage2", f.collection, f.splits.train, start, f.config.mining);
  mining::PoolSet p1 = p2;
  p1.stage = "stage1";
  scoring::LossConfig loss = f.config.loss;
  for (const AblationRow& row : ablation_rows()) {
    if (row.name == "w/o ALL") loss.flags = row.flags;
  }
  const auto a = train_stage2_fgd(start, f.collection, f.splits.train, p2, nullptr,
                                  f.config, loss,
                                  encoder::SpanPooling::kGlobalAttention, 9);
  const auto b = train_stage1(start, f.collection, f.splits.train, p1, f.config, 9);
  CHECK(a.params.fingerprint() == b.params.fingerprint());
}

TEST_CASE("stage-1 loss falls and fkd terms are logged per level") {
  Fixture f;
  f.config.schedule.epochs_stage1 = 6;
  const auto start = init_retriever(f.config, 5);
  const mining::PoolSet p1 = mining::refresh_negatives(
      "stage1", f.collection, f.splits.train, start, f.config.mining);
  const auto r = train_stage1(start, f.collection, f.splits.train, p1, f.config, 1);
  const std::size_t per_epoch = r.log.size() / 6;
  REQUIRE(per_epoch > 0);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < per_epoch; ++i) {
    first += r.log[i].total;
    last += r.log[r.log.size() - 1 - i].total;
  }
  CHECK(last < first);

  // one stage-2 step with the full objective and a teacher
  const auto teacher = std::make_shared<const scoring::CrossEncoderParams>(
      scoring::CrossEncoderParams::init(f.config.teacher_config(), 3));
  TeacherScorer scorer(teacher, f.collection);
  const mining::PoolSet p2 = mining::refresh_negatives(
      "stage2", f.collection, f.splits.train, r.params, f.config.mining);
  scoring::LossConfig full = f.config.loss;
  full.flags = {true, true, true, true};
  const auto s2 = train_stage2_fgd(r.params, f.collection, f.splits.train, p2,
                                   &scorer, f.config, full,
                                   encoder::SpanPooling::kGlobalAttention, 1);
  REQUIRE(!s2.log.empty());
  for (const StepRecord& s : s2.log) {
    CHECK(s.fkd.size() == 2);
    CHECK(s.doc_kd >= 0.0);
    CHECK(std::isfinite(s.total));
  }
  CHECK(scorer.cached() > 0);
  const auto j = s2.log.front().to_json();
  CHECK(j.contains("L_cl"));
  CHECK(j.contains("L_kd_doc"));
  CHECK(j.contains("L_fkd"));
}

TEST_CASE("stage state round trip") {
  StageState s;
  s.stage = "stage2";
  s.encoder_checkpoint = "x.ckpt";
  s.encoder_fingerprint = "abc";
  s.parent_fingerprint = "def";
  s.metrics.push_back({{"mrr@10", 0.5}});
  const StageState back = StageState::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK_THROWS_AS(StageState::from_json(nlohmann::json::object()), FormatError);
}
