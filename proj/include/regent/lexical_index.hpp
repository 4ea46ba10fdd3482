#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "regent/text_analysis.hpp"

namespace regent::lexical {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
};

// Per-subword-position BM25 scores for one query-document pair.
struct TokenRelevanceVector {
  std::vector<double> scores;
};

// Immutable after build; safe for concurrent readers.
class InvertedIndex {
 public:
  static InvertedIndex build(const std::vector<std::pair<std::string, std::string>>& corpus,
                             const text::StopwordList& stopwords,
                             Bm25Params params = Bm25Params{});

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const Bm25Params& params() const { return params_; }
  const text::StopwordList& stopwords() const { return stopwords_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }

  bool has_doc(const std::string& doc_id) const;
  int doc_length(const std::string& doc_id) const;
  int term_frequency(const std::string& stem, const std::string& doc_id) const;
  std::size_t doc_frequency(const std::string& stem) const;

  // idf(stem) * tf*(k1+1) / (tf + k1*(1-b+b*dl/avgdl)); 0 when the stem is
  // absent from the document. Throws for an unknown doc_id.
  double bm25_term_score(const std::string& stem, const std::string& doc_id) const;

  // Documents matching at least one query stem, ordered by the sum of
  // bm25_term_score over distinct query stems (descending, ties by
  // ascending doc_id), at most k entries.
  std::vector<ScoredDoc> retrieve(const std::string& query_text, std::size_t k) const;

  // Distinct non-empty query stems, sorted, for score reproducibility.
  std::vector<std::string> query_stems(const std::string& query_text) const;

  TokenRelevanceVector token_relevance(const std::string& query_text,
                                       const text::AnalyzedDocument& doc) const;

  void save(const std::string& path) const;
  static InvertedIndex load(const std::string& path);

 private:
  int doc_ordinal(const std::string& doc_id) const;  // throws when unknown

  Bm25Params params_;
  text::StopwordList stopwords_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, int> doc_ordinals_;
  std::vector<int> doc_lengths_;
  double avg_doc_length_ = 0.0;
  // stem -> (doc ordinal, term frequency), ordinals ascending
  std::map<std::string, std::vector<std::pair<int, int>>> postings_;
};

}  // namespace regent::lexical
