#include "regent/lexical_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "regent/binio.hpp"

namespace regent::lexical {

namespace {
constexpr char kMagic[4] = {'R', 'G', 'I', 'X'};
}

InvertedIndex InvertedIndex::build(
    const std::vector<std::pair<std::string, std::string>>& corpus,
    const text::StopwordList& stopwords, Bm25Params params) {
  InvertedIndex index;
  index.params_ = params;
  index.stopwords_ = stopwords;
  long long total_len = 0;
  for (const auto& [doc_id, body] : corpus) {
    if (index.doc_ordinals_.count(doc_id) != 0)
      throw std::invalid_argument("duplicate doc_id: " + doc_id);
    int ordinal = static_cast<int>(index.doc_ids_.size());
    index.doc_ordinals_.emplace(doc_id, ordinal);
    index.doc_ids_.push_back(doc_id);

    std::unordered_map<std::string, int> tf;
    int doc_len = 0;
    for (const text::AnalyzerTerm& term : text::analyze(body, stopwords)) {
      if (term.stem.empty()) continue;
      ++tf[term.stem];
      ++doc_len;
    }
    index.doc_lengths_.push_back(doc_len);
    total_len += doc_len;
    for (const auto& [stem, count] : tf) index.postings_[stem].emplace_back(ordinal, count);
  }
  for (auto& [stem, list] : index.postings_)
    std::sort(list.begin(), list.end());
  index.avg_doc_length_ =
      index.doc_ids_.empty() ? 0.0
                             : static_cast<double>(total_len) /
                                   static_cast<double>(index.doc_ids_.size());
  return index;
}

bool InvertedIndex::has_doc(const std::string& doc_id) const {
  return doc_ordinals_.count(doc_id) != 0;
}

int InvertedIndex::doc_ordinal(const std::string& doc_id) const {
  auto it = doc_ordinals_.find(doc_id);
  if (it == doc_ordinals_.end()) throw std::out_of_range("unknown doc_id: " + doc_id);
  return it->second;
}

int InvertedIndex::doc_length(const std::string& doc_id) const {
  return doc_lengths_[static_cast<std::size_t>(doc_ordinal(doc_id))];
}

int InvertedIndex::term_frequency(const std::string& stem, const std::string& doc_id) const {
  int ordinal = doc_ordinal(doc_id);
  auto it = postings_.find(stem);
  if (it == postings_.end()) return 0;
  auto pit = std::lower_bound(it->second.begin(), it->second.end(),
                              std::make_pair(ordinal, 0));
  if (pit == it->second.end() || pit->first != ordinal) return 0;
  return pit->second;
}

std::size_t InvertedIndex::doc_frequency(const std::string& stem) const {
  auto it = postings_.find(stem);
  return it == postings_.end() ? 0 : it->second.size();
}

double InvertedIndex::bm25_term_score(const std::string& stem, const std::string& doc_id) const {
  int ordinal = doc_ordinal(doc_id);
  int tf = term_frequency(stem, doc_id);
  if (tf == 0) return 0.0;
  double df = static_cast<double>(doc_frequency(stem));
  double n = static_cast<double>(doc_count());
  double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  double dl = static_cast<double>(doc_lengths_[static_cast<std::size_t>(ordinal)]);
  double norm = params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_length_);
  double tf_part = static_cast<double>(tf) * (params_.k1 + 1.0) /
                   (static_cast<double>(tf) + norm);
  return idf * tf_part;
}

std::vector<std::string> InvertedIndex::query_stems(const std::string& query_text) const {
  std::set<std::string> stems;
  for (const text::AnalyzerTerm& term : text::analyze(query_text, stopwords_))
    if (!term.stem.empty()) stems.insert(term.stem);
  return {stems.begin(), stems.end()};
}

std::vector<ScoredDoc> InvertedIndex::retrieve(const std::string& query_text,
                                               std::size_t k) const {
  if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
  std::vector<double> scores(doc_ids_.size(), 0.0);
  std::vector<std::uint8_t> matched(doc_ids_.size(), 0);
  for (const std::string& stem : query_stems(query_text)) {
    auto it = postings_.find(stem);
    if (it == postings_.end()) continue;
    for (const auto& [ordinal, tf] : it->second) {
      scores[static_cast<std::size_t>(ordinal)] +=
          bm25_term_score(stem, doc_ids_[static_cast<std::size_t>(ordinal)]);
      matched[static_cast<std::size_t>(ordinal)] = 1;
    }
  }
  std::vector<ScoredDoc> out;
  for (std::size_t i = 0; i < doc_ids_.size(); ++i)
    if (matched[i]) out.push_back({doc_ids_[i], scores[i]});
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

TokenRelevanceVector InvertedIndex::token_relevance(const std::string& query_text,
                                                    const text::AnalyzedDocument& doc) const {
  TokenRelevanceVector rv;
  rv.scores.assign(doc.subwords.size(), 0.0);
  std::vector<std::string> stems = query_stems(query_text);
  std::set<std::string> stem_set(stems.begin(), stems.end());
  for (std::size_t i = 0; i < doc.alignments.size(); ++i) {
    const std::string& stem = doc.terms[i].stem;
    if (stem.empty() || stem_set.count(stem) == 0) continue;
    double score = bm25_term_score(stem, doc.doc_id);
    for (int pos = doc.alignments[i].start; pos <= doc.alignments[i].end; ++pos)
      rv.scores[static_cast<std::size_t>(pos)] = score;
  }
  return rv;
}

void InvertedIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write index file: " + path);
  binio::put_magic(out, kMagic);
  binio::put_u64(out, 1);  // version
  binio::put_f64(out, params_.k1);
  binio::put_f64(out, params_.b);
  binio::put_u64(out, stopwords_.size());
  std::vector<std::string> sorted_stopwords(stopwords_.begin(), stopwords_.end());
  std::sort(sorted_stopwords.begin(), sorted_stopwords.end());
  for (const std::string& w : sorted_stopwords) binio::put_string(out, w);
  binio::put_u64(out, doc_ids_.size());
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    binio::put_string(out, doc_ids_[i]);
    binio::put_u64(out, static_cast<std::uint64_t>(doc_lengths_[i]));
  }
  binio::put_u64(out, postings_.size());
  for (const auto& [stem, list] : postings_) {
    binio::put_string(out, stem);
    binio::put_u64(out, list.size());
    for (const auto& [ordinal, tf] : list) {
      binio::put_u64(out, static_cast<std::uint64_t>(ordinal));
      binio::put_u64(out, static_cast<std::uint64_t>(tf));
    }
  }
  if (!out) throw std::runtime_error("failed writing index file: " + path);
}

InvertedIndex InvertedIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index file: " + path);
  binio::check_magic(in, kMagic, "index");
  std::uint64_t version = binio::get_u64(in);
  if (version != 1) throw std::runtime_error("unsupported index version");
  InvertedIndex index;
  index.params_.k1 = binio::get_f64(in);
  index.params_.b = binio::get_f64(in);
  std::uint64_t n_stop = binio::get_u64(in);
  for (std::uint64_t i = 0; i < n_stop; ++i) index.stopwords_.insert(binio::get_string(in));
  std::uint64_t n_docs = binio::get_u64(in);
  long long total_len = 0;
  for (std::uint64_t i = 0; i < n_docs; ++i) {
    std::string doc_id = binio::get_string(in);
    int len = static_cast<int>(binio::get_u64(in));
    index.doc_ordinals_.emplace(doc_id, static_cast<int>(i));
    index.doc_ids_.push_back(std::move(doc_id));
    index.doc_lengths_.push_back(len);
    total_len += len;
  }
  index.avg_doc_length_ =
      n_docs == 0 ? 0.0 : static_cast<double>(total_len) / static_cast<double>(n_docs);
  std::uint64_t n_terms = binio::get_u64(in);
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    std::string stem = binio::get_string(in);
    std::uint64_t n_postings = binio::get_u64(in);
    auto& list = index.postings_[stem];
    list.reserve(n_postings);
    for (std::uint64_t p = 0; p < n_postings; ++p) {
      int ordinal = static_cast<int>(binio::get_u64(in));
      int tf = static_cast<int>(binio::get_u64(in));
      list.emplace_back(ordinal, tf);
    }
  }
  return index;
}

}  // namespace regent::lexical
