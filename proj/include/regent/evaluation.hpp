#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "regent/lexical_index.hpp"

namespace regent::eval {

struct Qrels {
  // query_id -> doc_id -> grade (>= 0)
  std::map<std::string, std::unordered_map<std::string, int>> grades;

  int grade(const std::string& query_id, const std::string& doc_id) const;
  int relevant_count(const std::string& query_id) const;  // grade >= 1
  std::vector<std::string> queries_with_relevant() const;

  static Qrels read_trec(const std::string& path);  // "qid 0 docid grade"
};

struct RankedRun {
  std::string tag = "regent";
  std::map<std::string, std::vector<lexical::ScoredDoc>> queries;  // rank order

  void validate() const;  // non-increasing scores, unique doc ids per query
  void write_trec(const std::string& path) const;
  static RankedRun read_trec(const std::string& path);
};

// Sorts candidates into run order: score descending, doc_id ascending.
void sort_run_entries(std::vector<lexical::ScoredDoc>& entries);

double average_precision(const std::vector<lexical::ScoredDoc>& ranking,
                         const std::unordered_map<std::string, int>& grades);
double ndcg_at_k(const std::vector<lexical::ScoredDoc>& ranking,
                 const std::unordered_map<std::string, int>& grades, int k = 20);
double precision_at_k(const std::vector<lexical::ScoredDoc>& ranking,
                      const std::unordered_map<std::string, int>& grades, int k = 20);

struct AggregateMetrics {
  double map = 0.0;
  double ndcg20 = 0.0;
  double p20 = 0.0;
  std::map<std::string, double> per_query_ap;
  std::map<std::string, double> per_query_ndcg20;
  std::map<std::string, double> per_query_p20;
  std::size_t query_count = 0;
};

// trec_eval -c semantics: averages over every qrels query with >= 1 relevant
// document, counting queries missing from the run as zero.
AggregateMetrics evaluate_run(const RankedRun& run, const Qrels& qrels, int k = 20);

// Percentile bands over baseline nDCG@20: [0,5) [5,25) [25,75) [75,95) [95,100].
struct DifficultyBins {
  static constexpr int kBinCount = 5;
  static const char* label(int bin);
  std::map<std::string, int> bin_of;  // query_id -> 0..4 (0 = most difficult)
};

DifficultyBins difficulty_bins(const RankedRun& baseline, const Qrels& qrels);

// (1/top_k) * sum over top-k retrieved docs of (score - corpus mean) / |q|,
// where the corpus mean is over every document matching >= 1 query stem.
double wig(const std::string& query_text, const lexical::InvertedIndex& index, int top_k = 5);

enum class WigBin { hard, medium, easy };
std::string to_string(WigBin bin);
// Tercile split by ascending WIG score: lowest third hard, top third easy.
std::map<std::string, WigBin> wig_terciles(const std::map<std::string, double>& wig_scores);

struct RankDistribution {
  bool empty = true;  // no documents of the requested grade
  double mean_rank = 0.0;
  std::size_t doc_count = 0;
  std::size_t in_top_10 = 0;
  std::size_t in_top_50 = 0;
};

// Statistics over all qrels docs with exactly `grade`; unretrieved documents
// take rank = run length + 1.
RankDistribution rank_distribution(const std::vector<lexical::ScoredDoc>& ranking,
                                   const std::unordered_map<std::string, int>& grades,
                                   int grade);

}  // namespace regent::eval
