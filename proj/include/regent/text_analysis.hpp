#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace regent::text {

// One original word, with its post-analysis term. stem is empty for
// stopwords and punctuation runs.
struct AnalyzerTerm {
  std::string surface;
  std::string stem;
  int word_index = 0;
};

// Inclusive subword span [start, end] for word word_index.
struct AlignmentTuple {
  int word_index = 0;
  int start = 0;
  int end = 0;
};

struct AnalyzedDocument {
  std::string doc_id;
  std::vector<int> subwords;            // token ids, length == max_len
  std::vector<AlignmentTuple> alignments;
  std::vector<AnalyzerTerm> terms;      // one per alignment tuple (truncation-surviving words)
  int content_len = 0;                  // positions occupied incl. sequence-start and separator

  std::vector<std::uint8_t> padding_mask() const;  // 1 = real position, 0 = padding
};

// Classic Porter stemmer over a lowercase word. Words containing
// non-alphabetic characters are returned unchanged.
std::string porter_stem(const std::string& lowercase_word);

using StopwordList = std::unordered_set<std::string>;

StopwordList load_stopwords(const std::string& path);
const StopwordList& default_stopwords();  // the 33-word Lucene English default

// Splits text into alphanumeric words and punctuation runs, then lowercases,
// drops stopwords, and stems. Stopwords and punctuation keep their surface
// but get an empty stem.
std::vector<AnalyzerTerm> analyze(const std::string& text, const StopwordList& stopwords);

// Subword vocabulary: one token per line, line number = id, continuation
// prefix "##". Must contain [PAD], [UNK], [CLS], [SEP].
class SubwordVocab {
 public:
  static SubwordVocab load(const std::string& path);
  static SubwordVocab from_tokens(const std::vector<std::string>& tokens);

  int id_of(const std::string& token) const;  // -1 when absent
  const std::string& token_of(int id) const;
  std::size_t size() const { return tokens_.size(); }

  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }

  // Greedy longest-match segmentation of one lowercase word; empty result
  // means the word is unmatchable and the caller should emit [UNK].
  std::vector<int> segment_word(const std::string& lowercase_word) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1;
};

// Lays out [CLS] w1... [SEP] pad..., truncating whole words that do not fit.
// Surfaces are lowercased before matching (uncased convention).
AnalyzedDocument tokenize_subwords(const std::vector<AnalyzerTerm>& terms,
                                   const SubwordVocab& vocab, int max_len,
                                   const std::string& doc_id = "");

}  // namespace regent::text
