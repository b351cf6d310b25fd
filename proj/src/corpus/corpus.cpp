// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

#include "fgd/checkpoint.hpp"
#include "fgd/errors.hpp"
#include "json.hpp"

namespace fgd::corpus {

using nlohmann::json;

Vocabulary Vocabulary::make(std::size_t size, std::size_t num_topics) {
  if (num_topics == 0) throw ConfigError("vocabulary: need at least 1 topic");
  if (size < static_cast<std::size_t>(kFirstRegularToken) + num_topics) {
    throw ConfigError("vocabulary of size " + std::to_string(size) +
                      " too small for " + std::to_string(num_topics) +
                      " topics");
  }
  Vocabulary v;
  v.size_ = size;
  const std::size_t regular = size - kFirstRegularToken;
  const std::size_t base = regular / num_topics;
  const std::size_t extra = regular % num_topics;
  TokenId next = kFirstRegularToken;
  for (std::size_t t = 0; t < num_topics; ++t) {
    const auto width = static_cast<TokenId>(base + (t < extra ? 1 : 0));
    v.topics_.push_back({next, next + width});
    next += width;
  }
  return v;
}

std::optional<std::size_t> Vocabulary::topic_of(TokenId token) const {
  for (std::size_t t = 0; t < topics_.size(); ++t) {
    if (topics_[t].contains(token)) return t;
  }
  return std::nullopt;
}

int Document::granularity_count() const {
  int m = 0;
  for (const SpanRef& s : spans) m = std::max(m, s.granularity);
  return m;
}

std::vector<SpanRef> Document::spans_at(int granularity) const {
  std::vector<SpanRef> out;
  for (const SpanRef& s : spans) {
    if (s.granularity == granularity) out.push_back(s);
  }
  return out;
}

std::size_t Document::span_count(int granularity) const {
  return static_cast<std::size_t>(
      std::count_if(spans.begin(), spans.end(), [&](const SpanRef& s) {
        return s.granularity == granularity;
      }));
}

const SpanRef& Document::span(int granularity, int index) const {
  for (const SpanRef& s : spans) {
    if (s.granularity == granularity && s.index == index) return s;
  }
  throw IndexError("document " + std::to_string(id) + " has no span (j=" +
                   std::to_string(granularity) +
                   ", k=" + std::to_string(index) + ")");
}

std::span<const TokenId> Document::span_tokens(const SpanRef& span) const {
  if (span.begin > span.end || span.end >= tokens.size()) {
    throw IndexError("span [" + std::to_string(span.begin) + "," +
                     std::to_string(span.end) + "] outside document " +
                     std::to_string(id) + " of " +
                     std::to_string(tokens.size()) + " tokens");
  }
  return std::span<const TokenId>(tokens).subspan(span.begin, span.length());
}

const Document& Collection::doc(DocId id) const {
  if (id >= documents.size()) {
    throw IndexError("unknown document id " + std::to_string(id));
  }
  return documents[id];
}

const QueryRecord& Collection::query(QueryId id) const {
  if (id >= queries.size()) {
    throw IndexError("unknown query id " + std::to_string(id));
  }
  return queries[id];
}

void validate_fragment_lengths(std::span<const std::size_t> fragment_lengths) {
  for (std::size_t j = 0; j < fragment_lengths.size(); ++j) {
    if (fragment_lengths[j] == 0) {
      throw ConfigError("segment: fragment length for j=" +
                        std::to_string(j + 1) + " is zero");
    }
    if (j > 0 && fragment_lengths[j] >= fragment_lengths[j - 1]) {
      throw ConfigError(
          "segment: fragment lengths must strictly decrease from coarse to "
          "fine");
    }
  }
}

void segment(Document& doc, std::span<const std::size_t> fragment_lengths) {
  validate_fragment_lengths(fragment_lengths);
  if (doc.tokens.empty()) {
    throw ConfigError("segment: document " + std::to_string(doc.id) +
                      " has no tokens");
  }
  const std::size_t n = doc.tokens.size();
  doc.spans.clear();
  doc.spans.push_back({0, 1, 0, n - 1});
  for (std::size_t j = 0; j < fragment_lengths.size(); ++j) {
    const std::size_t len = fragment_lengths[j];
    int k = 1;
    for (std::size_t b = 0; b < n; b += len) {
      doc.spans.push_back(
          {static_cast<int>(j + 1), k++, b, std::min(b + len, n) - 1});
    }
  }
}

namespace {

void validate(const CorpusConfig& c) {
  if (c.topics_per_doc == 0) throw ConfigError("topics_per_doc must be >= 1");
  if (c.num_topics < c.topics_per_doc) {
    throw ConfigError("vocabulary has " + std::to_string(c.num_topics) +
                      " topics, fewer than topics_per_doc=" +
                      std::to_string(c.topics_per_doc));
  }
  if (c.num_docs == 0) throw ConfigError("num_docs must be >= 1");
  if (c.doc_length < c.topics_per_doc) {
    throw ConfigError("doc_length shorter than topics_per_doc");
  }
  if (c.doc_length > c.max_doc_length) {
    throw ConfigError("doc_length " + std::to_string(c.doc_length) +
                      " exceeds max_doc_length " +
                      std::to_string(c.max_doc_length));
  }
  if (c.query_length == 0 || c.query_length > c.max_query_length) {
    throw ConfigError("query_length must be in [1, max_query_length]");
  }
  if (c.topic_purity < 0.0 || c.topic_purity > 1.0) {
    throw ConfigError("topic_purity must be in [0, 1]");
  }
  validate_fragment_lengths(c.fragment_lengths);
}

}  // namespace

QueryRecord sample_query(const Collection& collection, const Document& doc,
                         Rng& rng) {
  const CorpusConfig& config = collection.config;
  QueryRecord q;
  q.positive = doc.id;
  std::uniform_int_distribution<std::size_t> pick_block(
      0, config.topics_per_doc - 1);
  q.block = pick_block(rng);
  q.topic = doc.topic_ids[q.block];
  const TopicRange& range =
      collection.vocab.topic(static_cast<std::size_t>(q.topic));
  const std::size_t start = doc.block_starts[q.block];
  const std::size_t stop = q.block + 1 < doc.block_starts.size()
                               ? doc.block_starts[q.block + 1]
                               : doc.tokens.size();
  std::vector<TokenId> pool;
  for (std::size_t i = start; i < stop; ++i) {
    if (range.contains(doc.tokens[i])) pool.push_back(doc.tokens[i]);
  }
  if (pool.empty()) {
    // A block with no on-topic token (possible only at very low purity).
    std::uniform_int_distribution<TokenId> topic_token(range.begin,
                                                       range.end - 1);
    pool.push_back(topic_token(rng));
  }
  if (pool.size() >= config.query_length) {
    std::shuffle(pool.begin(), pool.end(), rng);
    q.tokens.assign(pool.begin(),
                    pool.begin() +
                        static_cast<std::ptrdiff_t>(config.query_length));
  } else {
    std::uniform_int_distribution<std::size_t> any(0, pool.size() - 1);
    for (std::size_t i = 0; i < config.query_length; ++i) {
      q.tokens.push_back(pool[any(rng)]);
    }
  }
  if (std::count(doc.topic_ids.begin(), doc.topic_ids.end(), q.topic) != 1) {
    throw Error("sample_query: query topic must label exactly one block of "
                "its positive document");
  }
  return q;
}

Collection generate_collection(const CorpusConfig& config) {
  validate(config);
  Collection out;
  out.config = config;
  out.vocab = Vocabulary::make(config.vocab_size, config.num_topics);
  Rng rng(config.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<TokenId> any_token(
      kFirstRegularToken, static_cast<TokenId>(config.vocab_size) - 1);

  const std::size_t block_len = config.doc_length / config.topics_per_doc;
  std::vector<int> topic_order(config.num_topics);

  out.documents.reserve(config.num_docs);
  for (std::size_t d = 0; d < config.num_docs; ++d) {
    Document doc;
    doc.id = static_cast<DocId>(d);
    std::iota(topic_order.begin(), topic_order.end(), 0);
    std::shuffle(topic_order.begin(), topic_order.end(), rng);
    doc.topic_ids.assign(topic_order.begin(),
                         topic_order.begin() +
                             static_cast<std::ptrdiff_t>(config.topics_per_doc));
    doc.tokens.reserve(config.doc_length);
    for (std::size_t b = 0; b < config.topics_per_doc; ++b) {
      doc.block_starts.push_back(doc.tokens.size());
      const std::size_t len = b + 1 == config.topics_per_doc
                                  ? config.doc_length - b * block_len
                                  : block_len;
      const TopicRange& range =
          out.vocab.topic(static_cast<std::size_t>(doc.topic_ids[b]));
      std::uniform_int_distribution<TokenId> topic_token(range.begin,
                                                         range.end - 1);
      for (std::size_t i = 0; i < len; ++i) {
        doc.tokens.push_back(coin(rng) < config.topic_purity ? topic_token(rng)
                                                             : any_token(rng));
      }
    }
    segment(doc, config.fragment_lengths);
    out.documents.push_back(std::move(doc));
  }

  out.queries.reserve(config.num_docs);
  for (const Document& doc : out.documents) {
    QueryRecord q = sample_query(out, doc, rng);
    q.id = doc.id;
    out.queries.push_back(std::move(q));
  }
  return out;
}

namespace {

json span_table(const Document& doc) {
  json table = json::array();
  for (const SpanRef& s : doc.spans) {
    table.push_back({s.granularity, s.index, s.begin, s.end});
  }
  return table;
}

json config_to_json(const CorpusConfig& c) {
  return {{"num_docs", c.num_docs},
          {"topics_per_doc", c.topics_per_doc},
          {"doc_length", c.doc_length},
          {"vocab_size", c.vocab_size},
          {"num_topics", c.num_topics},
          {"topic_purity", c.topic_purity},
          {"query_length", c.query_length},
          {"fragment_lengths", c.fragment_lengths},
          {"max_doc_length", c.max_doc_length},
          {"max_query_length", c.max_query_length},
          {"seed", c.seed}};
}

CorpusConfig config_from_json(const json& j) {
  CorpusConfig c;
  c.num_docs = j.at("num_docs");
  c.topics_per_doc = j.at("topics_per_doc");
  c.doc_length = j.at("doc_length");
  c.vocab_size = j.at("vocab_size");
  c.num_topics = j.at("num_topics");
  c.topic_purity = j.at("topic_purity");
  c.query_length = j.at("query_length");
  c.fragment_lengths = j.at("fragment_lengths").get<std::vector<std::size_t>>();
  c.max_doc_length = j.at("max_doc_length");
  c.max_query_length = j.at("max_query_length");
  c.seed = j.at("seed");
  return c;
}

std::string document_line(const Document& doc) {
  return json{{"doc_id", doc.id},
              {"tokens", doc.tokens},
              {"topic_ids", doc.topic_ids},
              {"block_starts", doc.block_starts},
              {"spans", span_table(doc)}}
      .dump();
}

std::string query_line(const QueryRecord& q) {
  return json{{"query_id", q.id},
              {"tokens", q.tokens},
              {"positive_doc_id", q.positive},
              {"topic", q.topic},
              {"block", q.block}}
      .dump();
}

}  // namespace

void save_collection(const std::filesystem::path& dir,
                     const Collection& collection) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream meta(dir / "corpus.json");
    if (!meta) throw ConfigError("cannot write " + (dir / "corpus.json").string());
    json topics = json::array();
    for (std::size_t t = 0; t < collection.vocab.num_topics(); ++t) {
      const TopicRange& r = collection.vocab.topic(t);
      topics.push_back({r.begin, r.end});
    }
    meta << json{{"config", config_to_json(collection.config)},
                 {"vocab_size", collection.vocab.size()},
                 {"topic_ranges", topics},
                 {"special_tokens", {{"PAD", kPad}, {"CLS", kCls}, {"SEP", kSep}}}}
                .dump(2)
         << '\n';
  }
  std::ofstream docs(dir / "documents.jsonl");
  for (const Document& doc : collection.documents) docs << document_line(doc) << '\n';
  std::ofstream queries(dir / "queries.jsonl");
  for (const QueryRecord& q : collection.queries) queries << query_line(q) << '\n';
}

Collection load_collection(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "corpus.json");
  if (!meta_in) throw ConfigError("missing collection at " + dir.string());
  const json meta = json::parse(meta_in);
  Collection out;
  out.config = config_from_json(meta.at("config"));
  out.vocab = Vocabulary::make(meta.at("vocab_size"), out.config.num_topics);

  std::ifstream docs(dir / "documents.jsonl");
  std::string line;
  while (std::getline(docs, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Document doc;
    doc.id = j.at("doc_id");
    doc.tokens = j.at("tokens").get<std::vector<TokenId>>();
    doc.topic_ids = j.at("topic_ids").get<std::vector<int>>();
    doc.block_starts = j.at("block_starts").get<std::vector<std::size_t>>();
    for (const json& s : j.at("spans")) {
      doc.spans.push_back({s.at(0).get<int>(), s.at(1).get<int>(),
                           s.at(2).get<std::size_t>(),
                           s.at(3).get<std::size_t>()});
    }
    if (doc.id != out.documents.size()) {
      throw FormatError("documents.jsonl: ids must be dense and ordered");
    }
    out.documents.push_back(std::move(doc));
  }
  std::ifstream queries(dir / "queries.jsonl");
  while (std::getline(queries, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    QueryRecord q;
    q.id = j.at("query_id");
    q.tokens = j.at("tokens").get<std::vector<TokenId>>();
    q.positive = j.at("positive_doc_id");
    q.topic = j.at("topic");
    q.block = j.at("block");
    if (q.positive >= out.documents.size()) {
      throw FormatError("query " + std::to_string(q.id) +
                        " references unknown document");
    }
    out.queries.push_back(std::move(q));
  }
  return out;
}

std::string collection_fingerprint(const Collection& collection) {
  std::string bytes = config_to_json(collection.config).dump();
  for (const Document& doc : collection.documents) bytes += document_line(doc);
  for (const QueryRecord& q : collection.queries) bytes += query_line(q);
  return fnv1a_hex(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                   bytes.size());
}

void UniformNegativeSampler::require(const QueryRecord& query,
                                     std::size_t count) const {
  if (num_docs_ < count + 1) {
    throw MiningRequiredError("query " + std::to_string(query.id) +
                              ": collection too small for " +
                              std::to_string(count) + " negatives");
  }
}

std::vector<DocId> UniformNegativeSampler::sample(const QueryRecord& query,
                                                  std::size_t count,
                                                  Rng& rng) const {
  std::vector<DocId> out;
  std::uniform_int_distribution<DocId> any(0,
                                           static_cast<DocId>(num_docs_ - 1));
  while (out.size() < count) {
    const DocId d = any(rng);
    if (d == query.positive ||
        std::find(out.begin(), out.end(), d) != out.end()) {
      continue;
    }
    out.push_back(d);
  }
  return out;
}

BatchIterator::BatchIterator(std::vector<const QueryRecord*> queries,
                             std::shared_ptr<const NegativeSampler> sampler,
                             std::size_t batch_size,
                             std::size_t negatives_per_query,
                             std::uint64_t seed)
    : queries_(std::move(queries)),
      sampler_(std::move(sampler)),
      batch_size_(batch_size),
      negatives_(negatives_per_query),
      rng_(seed) {
  if (queries_.empty()) throw ConfigError("batch iterator: no queries");
  if (batch_size_ == 0) throw ConfigError("batch iterator: batch_size is 0");
  for (const QueryRecord* q : queries_) sampler_->require(*q, negatives_);
  order_.resize(queries_.size());
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (queries_.size() + batch_size_ - 1) / batch_size_;
}

Batch BatchIterator::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  Batch batch;
  const std::size_t stop = std::min(order_.size(), cursor_ + batch_size_);
  for (; cursor_ < stop; ++cursor_) {
    const QueryRecord* q = queries_[order_[cursor_]];
    batch.push_back({q, q->positive, sampler_->sample(*q, negatives_, rng_)});
  }
  return batch;
}

}  // namespace fgd::corpus
