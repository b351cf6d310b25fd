// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/mining.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fgd/checkpoint.hpp"
#include "fgd/errors.hpp"
#include "json.hpp"

namespace fgd::mining {

using nlohmann::json;

namespace {

bool negative_before(const SpanNegative& a, const SpanNegative& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.doc != b.doc) return a.doc < b.doc;
  return a.span.index < b.span.index;
}

void keep_top(std::vector<SpanNegative>& list, std::size_t depth) {
  const std::size_t k = std::min(depth, list.size());
  std::partial_sort(list.begin(), list.begin() + static_cast<long>(k),
                    list.end(), negative_before);
  list.resize(k);
}

bool overlaps(const SpanRef& a, const SpanRef& b) {
  return a.begin <= b.end && b.begin <= a.end;
}

std::string where(const NegativePool& pool, std::size_t j) {
  return "pool of query " + std::to_string(pool.query) + ", j=" +
         std::to_string(j);
}

}  // namespace

const std::vector<SpanNegative>& NegativePool::at(int granularity) const {
  if (granularity < 0 || static_cast<std::size_t>(granularity) >= levels.size()) {
    throw MiningRequiredError("query " + std::to_string(query) +
                              " has no mined negatives at j=" +
                              std::to_string(granularity));
  }
  return levels[static_cast<std::size_t>(granularity)];
}

void MiningConfig::validate(int granularities) const {
  if (depths.size() != static_cast<std::size_t>(granularities) + 1) {
    throw ConfigError("mining needs " + std::to_string(granularities + 1) +
                      " depths (documents plus each span level), got " +
                      std::to_string(depths.size()));
  }
  for (std::size_t j = 0; j < depths.size(); ++j) {
    if (depths[j] == 0) {
      throw ConfigError("mining depth at j=" + std::to_string(j) +
                        " is zero; that level's distillation term cannot "
                        "be built");
    }
  }
}

const NegativePool& PoolSet::pool(QueryId query) const {
  auto it = pools.find(query);
  if (it == pools.end()) {
    throw MiningRequiredError("query " + std::to_string(query) +
                              " has no mined negative pool");
  }
  return it->second;
}

DocumentMining mine_document_negatives(std::span<const double> query,
                                       DocId positive,
                                       const index::DenseIndex& index,
                                       std::size_t depth) {
  if (depth == 0) throw ConfigError("document mining depth must be positive");
  DocumentMining out;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const DocId id = index.doc_ids[i];
    if (id == positive) continue;
    out.negatives.push_back(
        {id, SpanRef{0, 1, 0, 0}, index::dot(query, index.doc_vector(i))});
  }
  out.truncated = out.negatives.size() < depth;
  keep_top(out.negatives, depth);
  return out;
}

std::vector<std::vector<SpanNegative>> mine_hierarchical_negatives(
    std::span<const double> query, DocId positive,
    const std::vector<SpanNegative>& document_negatives,
    const index::DenseIndex& index, std::span<const std::size_t> depths) {
  if (!index.has_spans) {
    throw ConfigError("hierarchical mining needs an index with span vectors");
  }
  std::vector<std::vector<SpanNegative>> levels;
  const std::vector<SpanNegative>* parent = &document_negatives;
  for (std::size_t j = 1; j <= depths.size(); ++j) {
    if (parent->empty()) {
      throw MiningRequiredError("no negatives at j=" + std::to_string(j - 1) +
                                " to mine j=" + std::to_string(j) + " from");
    }
    if (depths[j - 1] == 0) {
      throw ConfigError("mining depth at j=" + std::to_string(j) + " is zero");
    }
    std::map<DocId, std::vector<SpanRef>> parents;
    for (const SpanNegative& n : *parent) {
      if (n.doc != positive) parents[n.doc].push_back(n.span);
    }
    std::vector<SpanNegative> candidates;
    for (const auto& [doc, spans] : parents) {
      const std::size_t row = index.row_of(doc);
      for (std::size_t s = index.span_offsets[row];
           s < index.span_offsets[row + 1]; ++s) {
        const SpanRef& span = index.span_keys[s].span;
        if (span.granularity != static_cast<int>(j)) continue;
        const bool descends =
            j == 1 || std::any_of(spans.begin(), spans.end(),
                                  [&](const SpanRef& p) { return overlaps(p, span); });
        if (!descends) continue;
        candidates.push_back(
            {doc, span, index::dot(query, index.span_vector(s))});
      }
    }
    if (candidates.empty()) {
      throw MiningRequiredError("no level-" + std::to_string(j) +
                                " spans under the level-" +
                                std::to_string(j - 1) + " negatives");
    }
    keep_top(candidates, depths[j - 1]);
    levels.push_back(std::move(candidates));
    parent = &levels.back();
  }
  return levels;
}

NegativePool mine_pool(const corpus::QueryRecord& query,
                       const index::DenseIndex& index,
                       const encoder::EncoderParams& retriever,
                       const MiningConfig& config) {
  if (config.depths.empty()) throw ConfigError("mining needs at least a depth");
  const std::vector<double> u = index::query_vector(query.tokens, retriever);
  DocumentMining docs =
      mine_document_negatives(u, query.positive, index, config.depths[0]);
  NegativePool pool;
  pool.query = query.id;
  pool.positive = query.positive;
  pool.truncated = docs.truncated;
  auto spans = mine_hierarchical_negatives(
      u, query.positive, docs.negatives, index,
      std::span(config.depths).subspan(1));
  pool.levels.push_back(std::move(docs.negatives));
  for (auto& level : spans) pool.levels.push_back(std::move(level));
  return pool;
}

PoolSet refresh_negatives(const std::string& stage,
                          const corpus::Collection& collection,
                          std::span<const corpus::QueryRecord* const> queries,
                          const encoder::EncoderParams& retriever,
                          const MiningConfig& config) {
  if (collection.documents.empty()) {
    throw ConfigError("cannot mine an empty collection");
  }
  config.validate(collection.documents.front().granularity_count());
  const index::DenseIndex index =
      index::build_index(collection, retriever, /*include_spans=*/true);
  PoolSet set;
  set.stage = stage;
  set.depths = config.depths;
  set.retriever_fingerprint = retriever.fingerprint();
  set.collection_fingerprint = index.collection_fingerprint;
  for (const corpus::QueryRecord* q : queries) {
    set.pools.emplace(q->id, mine_pool(*q, index, retriever, config));
  }
  return set;
}

PoolSet refresh_negatives(const std::string& stage,
                          const corpus::Collection& collection,
                          std::span<const corpus::QueryRecord* const> queries,
                          const std::filesystem::path& checkpoint,
                          const encoder::EncoderConfig& encoder_config,
                          const MiningConfig& config) {
  const encoder::EncoderParams retriever = encoder::EncoderParams::from_tensors(
      encoder_config, load_checkpoint(checkpoint));
  return refresh_negatives(stage, collection, queries, retriever, config);
}

void validate_pool(const NegativePool& pool) {
  for (std::size_t j = 0; j < pool.levels.size(); ++j) {
    const auto& level = pool.levels[j];
    for (std::size_t i = 0; i < level.size(); ++i) {
      if (level[i].doc == pool.positive) {
        throw IntegrityError(where(pool, j) + " contains the positive document");
      }
      if (level[i].span.granularity != static_cast<int>(j)) {
        throw IntegrityError(where(pool, j) + " holds a span of granularity " +
                             std::to_string(level[i].span.granularity));
      }
      if (i > 0 && negative_before(level[i], level[i - 1])) {
        throw IntegrityError(where(pool, j) + " is not sorted by score");
      }
      if (j == 0) continue;
      const auto& parent = pool.levels[j - 1];
      const bool descends = std::any_of(
          parent.begin(), parent.end(), [&](const SpanNegative& p) {
            return p.doc == level[i].doc &&
                   (j == 1 || overlaps(p.span, level[i].span));
          });
      if (!descends) {
        throw IntegrityError(where(pool, j) + ": span (" +
                             std::to_string(level[i].doc) + ", " +
                             std::to_string(level[i].span.index) +
                             ") does not descend from the parent level");
      }
    }
  }
}

void save_pools(const std::filesystem::path& path, const PoolSet& pools) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write pools " + path.string());
  out << json{{"stage", pools.stage},
              {"depths", pools.depths},
              {"retriever", pools.retriever_fingerprint},
              {"collection", pools.collection_fingerprint},
              {"queries", pools.pools.size()}}
             .dump()
      << '\n';
  for (const auto& [qid, pool] : pools.pools) {
    json entries = json::array();
    for (const auto& level : pool.levels) {
      for (const SpanNegative& n : level) {
        entries.push_back({n.span.granularity, n.doc, n.span.index,
                           n.span.begin, n.span.end, n.score});
      }
    }
    out << json{{"query", qid},
                {"positive", pool.positive},
                {"truncated", pool.truncated},
                {"negatives", entries}}
               .dump()
        << '\n';
  }
}

PoolSet load_pools(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing pool file " + path.string());
  PoolSet set;
  std::string line;
  try {
    if (!std::getline(in, line)) throw FormatError("empty pool file");
    const json header = json::parse(line);
    set.stage = header.at("stage").get<std::string>();
    set.depths = header.at("depths").get<std::vector<std::size_t>>();
    set.retriever_fingerprint = header.at("retriever").get<std::string>();
    set.collection_fingerprint = header.at("collection").get<std::string>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      NegativePool pool;
      pool.query = rec.at("query").get<QueryId>();
      pool.positive = rec.at("positive").get<DocId>();
      pool.truncated = rec.at("truncated").get<bool>();
      pool.levels.resize(set.depths.size());
      for (const json& e : rec.at("negatives")) {
        const int j = e.at(0).get<int>();
        if (j < 0 || static_cast<std::size_t>(j) >= pool.levels.size()) {
          throw FormatError("pool entry with granularity " + std::to_string(j));
        }
        SpanNegative n;
        n.span.granularity = j;
        n.doc = e.at(1).get<DocId>();
        n.span.index = e.at(2).get<int>();
        n.span.begin = e.at(3).get<std::size_t>();
        n.span.end = e.at(4).get<std::size_t>();
        n.score = e.at(5).get<double>();
        pool.levels[static_cast<std::size_t>(j)].push_back(n);
      }
      set.pools.emplace(pool.query, std::move(pool));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed pool file " + path.string() + ": " + e.what());
  }
  return set;
}

PoolNegativeSampler::PoolNegativeSampler(std::shared_ptr<const PoolSet> pools,
                                         std::size_t num_docs,
                                         std::size_t random)
    : pools_(std::move(pools)), num_docs_(num_docs), random_(random) {
  if (!pools_) throw ConfigError("PoolNegativeSampler needs pools");
  if (random_ > 0 && num_docs_ < 2) {
    throw ConfigError("random negatives need the collection size");
  }
}

void PoolNegativeSampler::require(const corpus::QueryRecord& query,
                                  std::size_t count) const {
  const NegativePool& pool = pools_->pool(query.id);
  const std::size_t mined = count - std::min(count, random_);
  if (pool.levels.empty() || pool.levels[0].size() < mined) {
    throw MiningRequiredError(
        "query " + std::to_string(query.id) + " has " +
        std::to_string(pool.levels.empty() ? 0 : pool.levels[0].size()) +
        " mined negatives, " + std::to_string(mined) + " required");
  }
  if (random_ > 0 && num_docs_ < count + 1) {
    throw MiningRequiredError("query " + std::to_string(query.id) +
                              ": collection too small for " +
                              std::to_string(count) + " negatives");
  }
}

std::vector<DocId> PoolNegativeSampler::sample(const corpus::QueryRecord& query,
                                               std::size_t count,
                                               corpus::Rng& rng) const {
  require(query, count);
  const NegativePool& pool = pools_->pool(query.id);
  const std::size_t mined = count - std::min(count, random_);
  std::vector<DocId> owners;
  for (const SpanNegative& n : pool.levels.back()) {
    if (std::find(owners.begin(), owners.end(), n.doc) == owners.end()) {
      owners.push_back(n.doc);
    }
  }
  std::vector<DocId> chosen;
  const std::size_t from_spans = std::min(mined / 2, owners.size());
  std::sample(owners.begin(), owners.end(), std::back_inserter(chosen),
              static_cast<long>(from_spans), rng);
  std::shuffle(chosen.begin(), chosen.end(), rng);
  std::vector<DocId> rest;
  for (const SpanNegative& n : pool.levels[0]) {
    if (std::find(chosen.begin(), chosen.end(), n.doc) == chosen.end()) {
      rest.push_back(n.doc);
    }
  }
  std::vector<DocId> extra;
  std::sample(rest.begin(), rest.end(), std::back_inserter(extra),
              static_cast<long>(mined - chosen.size()), rng);
  std::shuffle(extra.begin(), extra.end(), rng);
  chosen.insert(chosen.end(), extra.begin(), extra.end());
  std::uniform_int_distribution<DocId> any(0, static_cast<DocId>(num_docs_ - 1));
  while (chosen.size() < count) {
    const DocId d = any(rng);
    if (d != query.positive &&
        std::find(chosen.begin(), chosen.end(), d) == chosen.end()) {
      chosen.push_back(d);
    }
  }
  return chosen;
}

}  // namespace fgd::mining
