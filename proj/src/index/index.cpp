// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fgd/bytes.hpp"
#include "fgd/errors.hpp"

namespace fgd::index {

namespace {

constexpr char kMagic[8] = {'F', 'G', 'D', 'I', 'D', 'X', '0', '\0'};
constexpr std::uint32_t kVersion = 1;

void append(std::vector<double>& dst, const Tensor& v) {
  dst.insert(dst.end(), v.data().begin(), v.data().end());
}

bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc < b.doc;
}

}  // namespace

std::span<const double> DenseIndex::doc_vector(std::size_t row) const {
  return {doc_vectors.data() + row * hidden, hidden};
}

std::span<const double> DenseIndex::span_vector(std::size_t row) const {
  return {span_vectors.data() + row * hidden, hidden};
}

std::size_t DenseIndex::row_of(DocId doc) const {
  // build_index stores ids in ascending order.
  auto it = std::lower_bound(doc_ids.begin(), doc_ids.end(), doc);
  if (it == doc_ids.end() || *it != doc) {
    throw IndexError("document " + std::to_string(doc) + " is not indexed");
  }
  return static_cast<std::size_t>(it - doc_ids.begin());
}

DenseIndex build_index(const corpus::Collection& collection,
                       const encoder::EncoderParams& params, bool include_spans,
                       encoder::SpanPooling pooling) {
  NoGradScope no_grad;
  DenseIndex index;
  index.hidden = params.config().hidden;
  index.has_spans = include_spans;
  index.encoder_fingerprint = params.fingerprint();
  index.collection_fingerprint = corpus::collection_fingerprint(collection);
  std::vector<const corpus::Document*> docs;
  for (const auto& d : collection.documents) docs.push_back(&d);
  std::sort(docs.begin(), docs.end(),
            [](auto* a, auto* b) { return a->id < b->id; });
  for (const corpus::Document* d : docs) {
    const encoder::EncodeOutput out = encoder::encode_document(*d, params);
    index.doc_ids.push_back(d->id);
    append(index.doc_vectors, out.cls);
    if (!include_spans) continue;
    index.span_offsets.push_back(index.span_keys.size());
    for (const SpanRef& s : d->spans) {
      if (s.granularity == 0) continue;
      index.span_keys.push_back({d->id, s});
      append(index.span_vectors, encoder::span_embedding(out, s, pooling));
    }
  }
  if (include_spans) index.span_offsets.push_back(index.span_keys.size());
  return index;
}

void save_index(const std::filesystem::path& path, const DenseIndex& index) {
  bytes::Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  w.put<std::uint64_t>(index.hidden);
  w.put<std::uint64_t>(index.doc_ids.size());
  w.put<std::uint64_t>(index.span_keys.size());
  w.put<std::uint8_t>(index.has_spans ? 1 : 0);
  w.put_string(index.encoder_fingerprint);
  w.put_string(index.collection_fingerprint);
  for (DocId id : index.doc_ids) w.put(id);
  w.put_doubles(index.doc_vectors);
  if (index.has_spans) {
    for (std::size_t off : index.span_offsets) w.put<std::uint64_t>(off);
    for (const SpanKey& key : index.span_keys) {
      w.put(key.doc);
      w.put<std::int32_t>(key.span.granularity);
      w.put<std::int32_t>(key.span.index);
      w.put<std::uint64_t>(key.span.begin);
      w.put<std::uint64_t>(key.span.end);
    }
    w.put_doubles(index.span_vectors);
  }
  bytes::write_file(path, w.data());
}

DenseIndex load_index(const std::filesystem::path& path,
                      const std::optional<std::string>& expected_encoder) {
  const auto data = bytes::read_file(path);
  bytes::Reader r(data, "index " + path.string());
  for (char c : kMagic) {
    if (r.get<char>() != c) throw FormatError("index: bad magic");
  }
  if (r.get<std::uint32_t>() != kVersion) {
    throw FormatError("index: unsupported version");
  }
  DenseIndex index;
  index.hidden = r.get<std::uint64_t>();
  const auto docs = r.get<std::uint64_t>();
  const auto spans = r.get<std::uint64_t>();
  index.has_spans = r.get<std::uint8_t>() != 0;
  index.encoder_fingerprint = r.get_string();
  index.collection_fingerprint = r.get_string();
  if (expected_encoder && *expected_encoder != index.encoder_fingerprint) {
    throw IntegrityError("index was built with encoder " +
                         index.encoder_fingerprint + ", expected " +
                         *expected_encoder);
  }
  for (std::uint64_t i = 0; i < docs; ++i) {
    index.doc_ids.push_back(r.get<DocId>());
  }
  index.doc_vectors = r.get_doubles(docs * index.hidden);
  if (index.has_spans) {
    for (std::uint64_t i = 0; i <= docs; ++i) {
      index.span_offsets.push_back(r.get<std::uint64_t>());
    }
    for (std::uint64_t i = 0; i < spans; ++i) {
      SpanKey key;
      key.doc = r.get<DocId>();
      key.span.granularity = r.get<std::int32_t>();
      key.span.index = r.get<std::int32_t>();
      key.span.begin = r.get<std::uint64_t>();
      key.span.end = r.get<std::uint64_t>();
      index.span_keys.push_back(key);
    }
    index.span_vectors = r.get_doubles(spans * index.hidden);
  }
  if (!r.done()) throw FormatError("index: trailing bytes");
  return index;
}

std::vector<double> query_vector(std::span<const corpus::TokenId> tokens,
                                 const encoder::EncoderParams& params) {
  NoGradScope no_grad;
  return encoder::encode_query(tokens, params).to_vector();
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: width " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rank_hits(std::vector<Hit>& hits, std::size_t k) {
  k = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<long>(k),
                    hits.end(), hit_before);
  hits.resize(k);
}

SearchResult search(std::span<const double> query, const DenseIndex& index,
                    std::size_t k) {
  if (k == 0) throw ConfigError("search: k must be at least 1");
  SearchResult result;
  if (index.size() == 0) {
    result.empty_index = true;
    return result;
  }
  result.hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    result.hits.push_back({index.doc_ids[i], dot(query, index.doc_vector(i))});
  }
  rank_hits(result.hits, k);
  return result;
}

SearchResult ensemble_search(std::span<const double> query,
                             const DenseIndex& index, std::size_t k,
                             double gamma) {
  if (!index.has_spans) {
    throw ConfigError("ensemble_search: index was built without spans");
  }
  if (gamma < 0.0) throw ConfigError("ensemble_search: gamma must be >= 0");
  if (k == 0) throw ConfigError("search: k must be at least 1");
  SearchResult result;
  if (index.size() == 0) {
    result.empty_index = true;
    return result;
  }
  for (std::size_t i = 0; i < index.size(); ++i) {
    double score = dot(query, index.doc_vector(i));
    std::map<int, double> best;
    for (std::size_t s = index.span_offsets[i]; s < index.span_offsets[i + 1];
         ++s) {
      const double v = dot(query, index.span_vector(s));
      auto [it, fresh] = best.emplace(index.span_keys[s].span.granularity, v);
      if (!fresh) it->second = std::max(it->second, v);
    }
    double extra = 0.0;
    for (const auto& [j, v] : best) extra += v;
    result.hits.push_back({index.doc_ids[i], score + gamma * extra});
  }
  rank_hits(result.hits, k);
  return result;
}

namespace {

// Calls fn(ranking, relevant) for every run query with qrels.
template <typename Fn>
MetricValue average(const Run& run, const Qrels& qrels, Fn fn) {
  MetricValue m;
  double total = 0.0;
  for (const auto& [qid, ranking] : run) {
    auto it = qrels.find(qid);
    if (it == qrels.end() || it->second.empty()) {
      ++m.excluded;
      continue;
    }
    total += fn(ranking, it->second);
    ++m.evaluated;
  }
  m.value = m.evaluated ? total / static_cast<double>(m.evaluated) : 0.0;
  return m;
}

double reciprocal_rank(const std::vector<DocId>& ranking,
                       const std::set<DocId>& relevant, std::size_t k) {
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
    if (relevant.count(ranking[r])) return 1.0 / static_cast<double>(r + 1);
  }
  return 0.0;
}

}  // namespace

MetricValue mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return average(run, qrels, [k](const auto& ranking, const auto& relevant) {
    return reciprocal_rank(ranking, relevant, k);
  });
}

MetricValue recall_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return average(run, qrels, [k](const auto& ranking, const auto& relevant) {
    std::size_t found = 0;
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
      found += relevant.count(ranking[r]);
    }
    return static_cast<double>(found) / static_cast<double>(relevant.size());
  });
}

MetricValue ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return average(run, qrels, [k](const auto& ranking, const auto& relevant) {
    double dcg = 0.0, ideal = 0.0;
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
      if (relevant.count(ranking[r])) dcg += 1.0 / std::log2(r + 2.0);
    }
    for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) {
      ideal += 1.0 / std::log2(r + 2.0);
    }
    return dcg / ideal;
  });
}

std::string MetricSpec::label() const {
  return name + "@" + std::to_string(k);
}

MetricSpec parse_metric(const std::string& text) {
  const auto at = text.find('@');
  if (at == std::string::npos) {
    throw ConfigError("metric '" + text + "' needs a cutoff, e.g. mrr@100");
  }
  MetricSpec spec;
  spec.name = text.substr(0, at);
  if (spec.name == "recall") spec.name = "r";
  if (spec.name != "mrr" && spec.name != "r" && spec.name != "ndcg") {
    throw ConfigError("unknown metric '" + spec.name + "'");
  }
  try {
    spec.k = std::stoul(text.substr(at + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad cutoff in metric '" + text + "'");
  }
  if (spec.k == 0) throw ConfigError("metric cutoff must be positive");
  return spec;
}

MetricValue compute_metric(const MetricSpec& spec, const Run& run,
                           const Qrels& qrels) {
  if (spec.name == "mrr") return mrr_at_k(run, qrels, spec.k);
  if (spec.name == "r") return recall_at_k(run, qrels, spec.k);
  return ndcg_at_k(run, qrels, spec.k);
}

EvalReport evaluate(const Run& run, const Qrels& qrels,
                    std::span<const MetricSpec> metrics) {
  EvalReport report;
  std::size_t rr_k = 0;
  for (const MetricSpec& spec : metrics) {
    const MetricValue v = compute_metric(spec, run, qrels);
    report.metrics[spec.label()] = v.value;
    report.excluded = v.excluded;
    if (spec.name == "mrr") rr_k = std::max(rr_k, spec.k);
  }
  if (rr_k > 0) {
    for (const auto& [qid, ranking] : run) {
      auto it = qrels.find(qid);
      if (it != qrels.end() && !it->second.empty()) {
        report.reciprocal_ranks[qid] = reciprocal_rank(ranking, it->second, rr_k);
      }
    }
  }
  return report;
}

MarginSummary margin_distribution(std::span<const ScoredPair> pairs,
                                  std::size_t bins) {
  if (pairs.empty()) {
    throw ConfigError("margin_distribution: no labeled pairs");
  }
  if (bins == 0) throw ConfigError("margin_distribution: bins must be positive");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const ScoredPair& p : pairs) {
    lo = std::min({lo, p.positive, p.negative});
    hi = std::max({hi, p.positive, p.negative});
  }
  MarginSummary out;
  out.beta = hi - lo;
  if (!(out.beta > 0.0)) {
    throw DegenerateRangeError("margin_distribution: every score is equal, "
                               "the range is zero");
  }
  out.histogram.assign(bins, 0);
  double total = 0.0;
  for (const ScoredPair& p : pairs) {
    const double m = (p.positive - p.negative) / out.beta;
    out.margins.push_back(m);
    total += m;
    const double unit = (m + 1.0) / 2.0;
    const auto bin = std::min(bins - 1, static_cast<std::size_t>(
                                            std::max(0.0, unit) * bins));
    ++out.histogram[bin];
  }
  out.mean = total / static_cast<double>(pairs.size());
  return out;
}

}  // namespace fgd::index
