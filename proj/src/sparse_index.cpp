// SPDX-License-Identifier: Apache-2.0
#include "cqr/sparse_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <queue>

#include "cqr/error.hpp"
#include "cqr/util.hpp"

namespace cqr::sparse {

namespace {

const std::vector<Posting> kNoPostings;

constexpr char kMagic[8] = {'C', 'Q', 'R', 'B', 'M', '2', '5', '\n'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      u8(static_cast<std::uint8_t>(v | 0x80));
      v >>= 7;
    }
    u8(static_cast<std::uint8_t>(v));
  }
  void str(std::string_view s) {
    varint(s.size());
    raw(s.data(), s.size());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}

  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw InputError(name_ + ": truncated index file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t byte = u8();
      v |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
      if ((byte & 0x80) == 0) return v;
    }
    throw InputError(name_ + ": corrupt varint");
  }
  std::string str() {
    const auto n = varint();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::string name_;
  std::size_t pos_ = 0;
};

struct Candidate {
  double score;
  const std::string* id;
  std::uint32_t doc;
};

// Heap ordering: the worst-ranked candidate sits on top.
struct WorseOnTop {
  bool operator()(const Candidate& a, const Candidate& b) const {
    return ranks_before(a.score, *a.id, b.score, *b.id);
  }
};

}  // namespace

const std::vector<Posting>& Bm25Index::postings(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  return it == term_ids_.end() ? kNoPostings : postings_[it->second];
}

double Bm25Index::idf(std::string_view term) const {
  const auto n = static_cast<double>(doc_count());
  const auto df = static_cast<double>(doc_freq(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::term_weight(std::uint32_t tf, std::uint32_t doc_len, double idf) const {
  const double k1 = params_.k1;
  const double b = params_.b;
  const double norm = avg_doc_len_ > 0.0 ? static_cast<double>(doc_len) / avg_doc_len_ : 0.0;
  const double t = static_cast<double>(tf);
  return idf * t * (k1 + 1.0) / (t + k1 * (1.0 - b + b * norm));
}

double Bm25Index::score(std::uint32_t doc, const std::vector<std::string>& query_terms) const {
  double total = 0.0;
  for (const auto& term : query_terms) {
    const auto& plist = postings(term);
    auto it = std::lower_bound(plist.begin(), plist.end(), doc,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (it == plist.end() || it->doc != doc) continue;
    total += term_weight(it->tf, doc_lens_[doc], idf(term));
  }
  return total;
}

std::vector<ScoredDoc> Bm25Index::search(std::string_view query, std::size_t k) const {
  return search_terms(text::analyze(query, analyzer_), k);
}

std::vector<ScoredDoc> Bm25Index::search_terms(const std::vector<std::string>& query_terms,
                                               std::size_t k) const {
  if (k == 0) return {};
  // (doc, contribution) in query-term order; a stable sort keeps per-document
  // summation order identical to score().
  std::vector<std::pair<std::uint32_t, double>> contrib;
  for (const auto& term : query_terms) {
    const auto& plist = postings(term);
    if (plist.empty()) continue;
    const double w_idf = idf(term);
    for (const auto& p : plist) contrib.emplace_back(p.doc, term_weight(p.tf, doc_lens_[p.doc], w_idf));
  }
  std::stable_sort(contrib.begin(), contrib.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::priority_queue<Candidate, std::vector<Candidate>, WorseOnTop> heap;
  WorseOnTop better;
  for (std::size_t i = 0; i < contrib.size();) {
    const std::uint32_t doc = contrib[i].first;
    double s = 0.0;
    for (; i < contrib.size() && contrib[i].first == doc; ++i) s += contrib[i].second;
    if (!(s > 0.0)) continue;
    Candidate c{s, &doc_ids_[doc], doc};
    if (heap.size() < k) {
      heap.push(c);
    } else if (better(c, heap.top())) {
      heap.pop();
      heap.push(c);
    }
  }

  std::vector<ScoredDoc> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = ScoredDoc{*heap.top().id, heap.top().score, 0};
    heap.pop();
  }
  assign_ranks(out);
  return out;
}

bool Bm25Index::operator==(const Bm25Index& o) const {
  if (params_.k1 != o.params_.k1 || params_.b != o.params_.b || !(analyzer_ == o.analyzer_) ||
      doc_ids_ != o.doc_ids_ || doc_lens_ != o.doc_lens_ || terms_.size() != o.terms_.size()) {
    return false;
  }
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    if (o.postings(terms_[t]) != postings_[t]) return false;
  }
  return true;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.f64(params_.k1);
  w.f64(params_.b);
  w.u8(analyzer_.lowercase ? 1 : 0);
  w.u8(analyzer_.stemmer == text::Stemmer::Porter ? 1 : 0);
  std::vector<std::string> stop;
  if (analyzer_.stopwords) stop.assign(analyzer_.stopwords->begin(), analyzer_.stopwords->end());
  std::sort(stop.begin(), stop.end());
  w.varint(stop.size());
  for (const auto& s : stop) w.str(s);

  w.varint(doc_ids_.size());
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    w.str(doc_ids_[d]);
    w.varint(doc_lens_[d]);
  }
  // Terms in lexicographic order so identical inputs give identical bytes.
  std::vector<std::uint32_t> order(terms_.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return terms_[a] < terms_[b]; });
  w.varint(terms_.size());
  for (auto t : order) {
    w.str(terms_[t]);
    const auto& plist = postings_[t];
    w.varint(plist.size());
    std::uint32_t prev = 0;
    for (const auto& p : plist) {
      w.varint(p.doc - prev);
      w.varint(p.tf);
      prev = p.doc;
    }
  }
  write_file(path, w.data());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader r(data, path.string());
  if (r.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw InputError(path.string() + ": not a BM25 index file");
  }
  const auto version = r.u32();
  if (version != kFormatVersion) {
    throw InputError(path.string() + ": unsupported index version " + std::to_string(version));
  }
  Bm25Index idx;
  idx.params_.k1 = r.f64();
  idx.params_.b = r.f64();
  idx.analyzer_.lowercase = r.u8() != 0;
  idx.analyzer_.stemmer = r.u8() != 0 ? text::Stemmer::Porter : text::Stemmer::None;
  const auto n_stop = r.varint();
  if (n_stop > 0) {
    auto stop = std::make_shared<std::unordered_set<std::string>>();
    for (std::uint64_t i = 0; i < n_stop; ++i) stop->insert(r.str());
    idx.analyzer_.stopwords = std::move(stop);
  }
  const auto n_docs = r.varint();
  idx.doc_ids_.reserve(n_docs);
  idx.doc_lens_.reserve(n_docs);
  std::uint64_t total_len = 0;
  for (std::uint64_t d = 0; d < n_docs; ++d) {
    idx.doc_ids_.push_back(r.str());
    idx.doc_lens_.push_back(static_cast<std::uint32_t>(r.varint()));
    total_len += idx.doc_lens_.back();
  }
  idx.avg_doc_len_ = n_docs == 0 ? 0.0 : static_cast<double>(total_len) / static_cast<double>(n_docs);
  const auto n_terms = r.varint();
  idx.terms_.reserve(n_terms);
  idx.postings_.reserve(n_terms);
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    std::string term = r.str();
    const auto df = r.varint();
    std::vector<Posting> plist;
    plist.reserve(df);
    std::uint64_t doc = 0;
    for (std::uint64_t i = 0; i < df; ++i) {
      doc += r.varint();
      const auto tf = r.varint();
      if (doc >= n_docs) throw InputError(path.string() + ": posting references unknown document");
      plist.push_back({static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(tf)});
    }
    idx.term_ids_.emplace(term, static_cast<std::uint32_t>(idx.terms_.size()));
    idx.terms_.push_back(std::move(term));
    idx.postings_.push_back(std::move(plist));
  }
  if (!r.done()) throw InputError(path.string() + ": trailing bytes in index file");
  return idx;
}

Bm25Builder::Bm25Builder(text::Analyzer analyzer, Bm25Params params) {
  index_.analyzer_ = std::move(analyzer);
  index_.params_ = params;
}

void Bm25Builder::add(const corpus::Passage& passage) {
  const auto doc = static_cast<std::uint32_t>(index_.doc_ids_.size());
  if (!seen_.emplace(passage.id, doc).second) {
    throw InputError("duplicate passage id '" + passage.id + "'");
  }
  const auto tokens = text::analyze(passage.text, index_.analyzer_);
  std::unordered_map<std::string_view, std::uint32_t> tf;
  for (const auto& tok : tokens) ++tf[tok];
  for (const auto& [term, count] : tf) {
    auto [it, inserted] = index_.term_ids_.try_emplace(std::string(term),
                                                       static_cast<std::uint32_t>(index_.terms_.size()));
    if (inserted) {
      index_.terms_.emplace_back(term);
      index_.postings_.emplace_back();
    }
    // Documents arrive in ordinal order, so postings stay sorted.
    index_.postings_[it->second].push_back({doc, count});
  }
  index_.doc_ids_.push_back(passage.id);
  index_.doc_lens_.push_back(static_cast<std::uint32_t>(tokens.size()));
}

Bm25Index Bm25Builder::finish() && {
  if (index_.doc_ids_.empty()) throw InputError("empty collection");
  std::uint64_t total = 0;
  for (auto len : index_.doc_lens_) total += len;
  index_.avg_doc_len_ = static_cast<double>(total) / static_cast<double>(index_.doc_ids_.size());
  return std::move(index_);
}

Bm25Index build_index(const std::vector<corpus::Passage>& passages, const text::Analyzer& analyzer,
                      Bm25Params params) {
  Bm25Builder builder(analyzer, params);
  for (const auto& p : passages) builder.add(p);
  return std::move(builder).finish();
}

}  // namespace cqr::sparse
