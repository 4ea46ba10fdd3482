#include "regent/text_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace regent::text {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool all_alpha(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c >= 'a' && c <= 'z';
  });
}

// --- Porter stemmer internals (classic 1980 definition) ---

bool is_consonant(const std::string& w, std::size_t i) {
  char c = w[i];
  switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return false;
    case 'y':
      return i == 0 ? true : !is_consonant(w, i - 1);
    default:
      return true;
  }
}

// m in the [C](VC)^m[V] decomposition of w[0, len).
int measure(const std::string& w, std::size_t len) {
  std::size_t i = 0;
  int m = 0;
  while (i < len && is_consonant(w, i)) ++i;
  while (i < len) {
    while (i < len && !is_consonant(w, i)) ++i;
    if (i >= len) break;
    ++m;
    while (i < len && is_consonant(w, i)) ++i;
  }
  return m;
}

bool contains_vowel(const std::string& w, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

bool ends_double_consonant(const std::string& w) {
  std::size_t n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

// *o: ends cvc where the final consonant is not w, x or y.
bool ends_cvc(const std::string& w, std::size_t len) {
  if (len < 3) return false;
  if (!is_consonant(w, len - 3) || is_consonant(w, len - 2) || !is_consonant(w, len - 1))
    return false;
  char c = w[len - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, const char* suffix) {
  std::size_t n = std::char_traits<char>::length(suffix);
  return w.size() >= n && w.compare(w.size() - n, n, suffix) == 0;
}

struct Rule {
  const char* suffix;
  const char* replacement;
};

// Applies the longest matching suffix rule whose stem satisfies
// m(stem) > min_measure. In each step only the longest match is considered;
// a failed condition means the whole step does nothing.
void apply_step(std::string& w, const Rule* rules, std::size_t count, int min_measure) {
  const Rule* best = nullptr;
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t n = std::char_traits<char>::length(rules[i].suffix);
    if (n > best_len && ends_with(w, rules[i].suffix)) {
      best = &rules[i];
      best_len = n;
    }
  }
  if (best == nullptr) return;
  std::size_t stem_len = w.size() - best_len;
  if (measure(w, stem_len) > min_measure) {
    w.erase(stem_len);
    w += best->replacement;
  }
}

void step1a(std::string& w) {
  if (ends_with(w, "sses")) w.erase(w.size() - 2);
  else if (ends_with(w, "ies")) w.erase(w.size() - 2);
  else if (ends_with(w, "ss")) {}
  else if (ends_with(w, "s")) w.erase(w.size() - 1);
}

void step1b(std::string& w) {
  if (ends_with(w, "eed")) {
    if (measure(w, w.size() - 3) > 0) w.erase(w.size() - 1);
    return;
  }
  bool fired = false;
  if (ends_with(w, "ed") && contains_vowel(w, w.size() - 2)) {
    w.erase(w.size() - 2);
    fired = true;
  } else if (ends_with(w, "ing") && contains_vowel(w, w.size() - 3)) {
    w.erase(w.size() - 3);
    fired = true;
  }
  if (!fired) return;
  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w += 'e';
  } else if (ends_double_consonant(w)) {
    char c = w.back();
    if (c != 'l' && c != 's' && c != 'z') w.erase(w.size() - 1);
  } else if (measure(w, w.size()) == 1 && ends_cvc(w, w.size())) {
    w += 'e';
  }
}

// Terminal y -> i only when the stem has a vowel AND ends in a consonant
// (the common revision; the original condition would map play -> plai and
// boy -> boi).
void step1c(std::string& w) {
  if (!ends_with(w, "y")) return;
  std::size_t stem_len = w.size() - 1;
  if (contains_vowel(w, stem_len) && stem_len >= 1 && is_consonant(w, stem_len - 1))
    w.back() = 'i';
}

const Rule kStep2[] = {
    {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
    {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
    {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
    {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
    {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
};

const Rule kStep3[] = {
    {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
    {"ical", "ic"},  {"ful", ""},   {"ness", ""},
};

const Rule kStep4[] = {
    {"al", ""},    {"ance", ""}, {"ence", ""}, {"er", ""},  {"ic", ""},
    {"able", ""},  {"ible", ""}, {"ant", ""},  {"ement", ""}, {"ment", ""},
    {"ent", ""},   {"ou", ""},   {"ism", ""},  {"ate", ""}, {"iti", ""},
    {"ous", ""},   {"ive", ""},  {"ize", ""},
};

void step4(std::string& w) {
  // ION carries the extra *S/*T condition, so the longest-match scan
  // includes it explicitly alongside the plain suffix table.
  const Rule* best = nullptr;
  std::size_t best_len = 0;
  for (const Rule& r : kStep4) {
    std::size_t n = std::char_traits<char>::length(r.suffix);
    if (n > best_len && ends_with(w, r.suffix)) {
      best = &r;
      best_len = n;
    }
  }
  bool ion = ends_with(w, "ion") && 3 > best_len;
  if (ion) {
    std::size_t stem_len = w.size() - 3;
    if (measure(w, stem_len) > 1 && stem_len > 0 &&
        (w[stem_len - 1] == 's' || w[stem_len - 1] == 't'))
      w.erase(stem_len);
    return;
  }
  if (best == nullptr) return;
  std::size_t stem_len = w.size() - best_len;
  if (measure(w, stem_len) > 1) w.erase(stem_len);
}

void step5a(std::string& w) {
  if (!ends_with(w, "e")) return;
  std::size_t stem_len = w.size() - 1;
  int m = measure(w, stem_len);
  if (m > 1 || (m == 1 && !ends_cvc(w, stem_len))) w.erase(stem_len);
}

void step5b(std::string& w) {
  if (measure(w, w.size()) > 1 && ends_double_consonant(w) && w.back() == 'l')
    w.erase(w.size() - 1);
}

}  // namespace

std::string porter_stem(const std::string& lowercase_word) {
  if (!all_alpha(lowercase_word) || lowercase_word.size() <= 2) return lowercase_word;
  std::string w = lowercase_word;
  step1a(w);
  step1b(w);
  step1c(w);
  apply_step(w, kStep2, std::size(kStep2), 0);
  apply_step(w, kStep3, std::size(kStep3), 0);
  step4(w);
  step5a(w);
  step5b(w);
  return w;
}

StopwordList load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword file: " + path);
  StopwordList out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) out.insert(ascii_lower(line));
  }
  return out;
}

const StopwordList& default_stopwords() {
  static const StopwordList kList = {
      "a",    "an",   "and",   "are",  "as",    "at",   "be",    "but",  "by",
      "for",  "if",   "in",    "into", "is",    "it",   "no",    "not",  "of",
      "on",   "or",   "such",  "that", "the",   "their", "then", "there", "these",
      "they", "this", "to",    "was",  "will",  "with"};
  return kList;
}

std::vector<AnalyzerTerm> analyze(const std::string& text, const StopwordList& stopwords) {
  std::vector<AnalyzerTerm> out;
  std::size_t i = 0;
  int word_index = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    bool word = is_word_char(c);
    while (i < text.size()) {
      unsigned char cur = static_cast<unsigned char>(text[i]);
      if (std::isspace(cur) || is_word_char(cur) != word) break;
      ++i;
    }
    AnalyzerTerm term;
    term.surface = text.substr(start, i - start);
    term.word_index = word_index++;
    if (word) {
      std::string lower = ascii_lower(term.surface);
      if (stopwords.count(lower) == 0) term.stem = porter_stem(lower);
    }
    out.push_back(std::move(term));
  }
  return out;
}

SubwordVocab SubwordVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

SubwordVocab SubwordVocab::from_tokens(const std::vector<std::string>& tokens) {
  SubwordVocab v;
  v.tokens_ = tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    v.index_.emplace(tokens[i], static_cast<int>(i));
  v.pad_id_ = v.id_of("[PAD]");
  v.unk_id_ = v.id_of("[UNK]");
  v.cls_id_ = v.id_of("[CLS]");
  v.sep_id_ = v.id_of("[SEP]");
  if (v.pad_id_ < 0 || v.unk_id_ < 0 || v.cls_id_ < 0 || v.sep_id_ < 0)
    throw std::runtime_error("vocab must contain [PAD], [UNK], [CLS] and [SEP]");
  return v;
}

int SubwordVocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

const std::string& SubwordVocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> SubwordVocab::segment_word(const std::string& lowercase_word) const {
  std::vector<int> pieces;
  std::size_t start = 0;
  while (start < lowercase_word.size()) {
    int match = -1;
    std::size_t match_end = start;
    for (std::size_t end = lowercase_word.size(); end > start; --end) {
      std::string piece = lowercase_word.substr(start, end - start);
      if (start > 0) piece = "##" + piece;
      int id = id_of(piece);
      if (id >= 0) {
        match = id;
        match_end = end;
        break;
      }
    }
    if (match < 0) return {};
    pieces.push_back(match);
    start = match_end;
  }
  return pieces;
}

std::vector<std::uint8_t> AnalyzedDocument::padding_mask() const {
  std::vector<std::uint8_t> mask(subwords.size(), 0);
  for (int i = 0; i < content_len && static_cast<std::size_t>(i) < mask.size(); ++i)
    mask[static_cast<std::size_t>(i)] = 1;
  return mask;
}

AnalyzedDocument tokenize_subwords(const std::vector<AnalyzerTerm>& terms,
                                   const SubwordVocab& vocab, int max_len,
                                   const std::string& doc_id) {
  if (max_len < 2) throw std::invalid_argument("tokenize_subwords: max_len must be >= 2");
  AnalyzedDocument doc;
  doc.doc_id = doc_id;
  doc.subwords.assign(static_cast<std::size_t>(max_len), vocab.pad_id());
  doc.subwords[0] = vocab.cls_id();
  int pos = 1;
  const int limit = max_len - 1;  // final separator needs one slot
  for (const AnalyzerTerm& term : terms) {
    std::vector<int> pieces = vocab.segment_word(ascii_lower(term.surface));
    if (pieces.empty()) pieces.push_back(vocab.unk_id());
    if (pos + static_cast<int>(pieces.size()) > limit) break;  // whole word dropped
    AlignmentTuple tuple;
    tuple.word_index = term.word_index;
    tuple.start = pos;
    tuple.end = pos + static_cast<int>(pieces.size()) - 1;
    for (int id : pieces) doc.subwords[static_cast<std::size_t>(pos++)] = id;
    doc.alignments.push_back(tuple);
    doc.terms.push_back(term);
  }
  doc.subwords[static_cast<std::size_t>(pos)] = vocab.sep_id();
  doc.content_len = pos + 1;
  return doc;
}

}  // namespace regent::text
