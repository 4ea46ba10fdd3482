#include "regent/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace regent::eval {

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
  auto qit = grades.find(query_id);
  if (qit == grades.end()) return 0;
  auto dit = qit->second.find(doc_id);
  return dit == qit->second.end() ? 0 : dit->second;
}

int Qrels::relevant_count(const std::string& query_id) const {
  auto qit = grades.find(query_id);
  if (qit == grades.end()) return 0;
  int n = 0;
  for (const auto& [doc, g] : qit->second) n += (g >= 1);
  return n;
}

std::vector<std::string> Qrels::queries_with_relevant() const {
  std::vector<std::string> out;
  for (const auto& [qid, docs] : grades)
    if (relevant_count(qid) > 0) out.push_back(qid);
  return out;
}

Qrels Qrels::read_trec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open qrels file: " + path);
  Qrels qrels;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string qid, zero, docid;
    int grade;
    if (!(row >> qid >> zero >> docid >> grade) || grade < 0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed qrels line");
    auto [it, inserted] = qrels.grades[qid].emplace(docid, grade);
    if (!inserted)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": duplicate pair " + qid +
                               "/" + docid);
  }
  return qrels;
}

void RankedRun::validate() const {
  for (const auto& [qid, entries] : queries) {
    std::unordered_map<std::string, int> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (++seen[entries[i].doc_id] > 1)
        throw std::runtime_error("run: duplicate doc " + entries[i].doc_id + " for query " + qid);
      if (i > 0 && entries[i].score > entries[i - 1].score)
        throw std::runtime_error("run: scores increase at rank " + std::to_string(i + 1) +
                                 " for query " + qid);
    }
  }
}

void RankedRun::write_trec(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run file: " + path);
  out << std::setprecision(17);
  for (const auto& [qid, entries] : queries)
    for (std::size_t i = 0; i < entries.size(); ++i)
      out << qid << " Q0 " << entries[i].doc_id << ' ' << (i + 1) << ' ' << entries[i].score
          << ' ' << tag << '\n';
  if (!out) throw std::runtime_error("failed writing run file: " + path);
}

RankedRun RankedRun::read_trec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run file: " + path);
  RankedRun run;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string qid, q0, docid, tag;
    long long rank;
    double score;
    if (!(row >> qid >> q0 >> docid >> rank >> score >> tag))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed run line");
    run.queries[qid].push_back({docid, score});
    run.tag = tag;
  }
  return run;
}

void sort_run_entries(std::vector<lexical::ScoredDoc>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const lexical::ScoredDoc& a, const lexical::ScoredDoc& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
}

double average_precision(const std::vector<lexical::ScoredDoc>& ranking,
                         const std::unordered_map<std::string, int>& grades) {
  int total_relevant = 0;
  for (const auto& [doc, g] : grades) total_relevant += (g >= 1);
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    auto it = grades.find(ranking[i].doc_id);
    if (it != grades.end() && it->second >= 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

double ndcg_at_k(const std::vector<lexical::ScoredDoc>& ranking,
                 const std::unordered_map<std::string, int>& grades, int k) {
  double dcg = 0.0;
  std::size_t cutoff = std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < cutoff; ++i) {
    auto it = grades.find(ranking[i].doc_id);
    int g = it == grades.end() ? 0 : it->second;
    if (g > 0) dcg += static_cast<double>(g) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [doc, g] : grades)
    if (g > 0) ideal.push_back(g);
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(ideal.size(), static_cast<std::size_t>(k)); ++i)
    idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double precision_at_k(const std::vector<lexical::ScoredDoc>& ranking,
                      const std::unordered_map<std::string, int>& grades, int k) {
  int hits = 0;
  std::size_t cutoff = std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < cutoff; ++i) {
    auto it = grades.find(ranking[i].doc_id);
    if (it != grades.end() && it->second >= 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

AggregateMetrics evaluate_run(const RankedRun& run, const Qrels& qrels, int k) {
  AggregateMetrics agg;
  static const std::vector<lexical::ScoredDoc> kEmpty;
  for (const std::string& qid : qrels.queries_with_relevant()) {
    auto rit = run.queries.find(qid);
    const auto& ranking = rit == run.queries.end() ? kEmpty : rit->second;
    const auto& grades = qrels.grades.at(qid);
    double ap = average_precision(ranking, grades);
    double ndcg = ndcg_at_k(ranking, grades, k);
    double p = precision_at_k(ranking, grades, k);
    agg.per_query_ap[qid] = ap;
    agg.per_query_ndcg20[qid] = ndcg;
    agg.per_query_p20[qid] = p;
    agg.map += ap;
    agg.ndcg20 += ndcg;
    agg.p20 += p;
    ++agg.query_count;
  }
  if (agg.query_count > 0) {
    double n = static_cast<double>(agg.query_count);
    agg.map /= n;
    agg.ndcg20 /= n;
    agg.p20 /= n;
  }
  return agg;
}

const char* DifficultyBins::label(int bin) {
  static const char* kLabels[kBinCount] = {"0-5", "5-25", "25-75", "75-95", "95-100"};
  if (bin < 0 || bin >= kBinCount) throw std::out_of_range("difficulty bin out of range");
  return kLabels[bin];
}

DifficultyBins difficulty_bins(const RankedRun& baseline, const Qrels& qrels) {
  std::vector<std::pair<double, std::string>> scored;
  static const std::vector<lexical::ScoredDoc> kEmpty;
  for (const std::string& qid : qrels.queries_with_relevant()) {
    auto rit = baseline.queries.find(qid);
    const auto& ranking = rit == baseline.queries.end() ? kEmpty : rit->second;
    scored.emplace_back(ndcg_at_k(ranking, qrels.grades.at(qid), 20), qid);
  }
  if (scored.size() < 5)
    throw std::invalid_argument("difficulty_bins: need at least 5 queries, have " +
                                std::to_string(scored.size()));
  std::sort(scored.begin(), scored.end());  // ndcg ascending, query_id breaks ties
  DifficultyBins bins;
  double count = static_cast<double>(scored.size());
  std::size_t group_start = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].first != scored[group_start].first) group_start = i;
    double percentile = 100.0 * static_cast<double>(group_start) / count;
    int bin;
    if (percentile < 5.0) bin = 0;
    else if (percentile < 25.0) bin = 1;
    else if (percentile < 75.0) bin = 2;
    else if (percentile < 95.0) bin = 3;
    else bin = 4;
    bins.bin_of[scored[i].second] = bin;
  }
  return bins;
}

double wig(const std::string& query_text, const lexical::InvertedIndex& index, int top_k) {
  if (top_k < 1) throw std::invalid_argument("wig: top_k must be >= 1");
  std::vector<std::string> stems = index.query_stems(query_text);
  if (stems.empty()) throw std::domain_error("wig: query has no analyzable stems");
  auto matching = index.retrieve(query_text, index.doc_count() == 0 ? 1 : index.doc_count());
  if (matching.empty()) throw std::domain_error("wig: no matching documents for query");
  double corpus_mean = 0.0;
  for (const auto& entry : matching) corpus_mean += entry.score;
  corpus_mean /= static_cast<double>(matching.size());
  double sum = 0.0;
  std::size_t top = std::min<std::size_t>(matching.size(), static_cast<std::size_t>(top_k));
  for (std::size_t i = 0; i < top; ++i) sum += matching[i].score - corpus_mean;
  return sum / (static_cast<double>(top_k) * static_cast<double>(stems.size()));
}

std::string to_string(WigBin bin) {
  switch (bin) {
    case WigBin::hard: return "hard";
    case WigBin::medium: return "medium";
    case WigBin::easy: return "easy";
  }
  throw std::logic_error("unreachable wig bin");
}

std::map<std::string, WigBin> wig_terciles(const std::map<std::string, double>& wig_scores) {
  std::vector<std::pair<double, std::string>> sorted;
  for (const auto& [qid, score] : wig_scores) sorted.emplace_back(score, qid);
  std::sort(sorted.begin(), sorted.end());
  std::map<std::string, WigBin> out;
  std::size_t n = sorted.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (3 * i < n) out[sorted[i].second] = WigBin::hard;
    else if (3 * i < 2 * n) out[sorted[i].second] = WigBin::medium;
    else out[sorted[i].second] = WigBin::easy;
  }
  return out;
}

RankDistribution rank_distribution(const std::vector<lexical::ScoredDoc>& ranking,
                                   const std::unordered_map<std::string, int>& grades,
                                   int grade) {
  if (grade < 1) throw std::invalid_argument("rank_distribution: grade must be >= 1");
  std::unordered_map<std::string, std::size_t> rank_of;
  for (std::size_t i = 0; i < ranking.size(); ++i) rank_of.emplace(ranking[i].doc_id, i + 1);
  RankDistribution dist;
  double sum = 0.0;
  for (const auto& [doc, g] : grades) {
    if (g != grade) continue;
    dist.empty = false;
    ++dist.doc_count;
    auto it = rank_of.find(doc);
    std::size_t rank = it == rank_of.end() ? ranking.size() + 1 : it->second;
    sum += static_cast<double>(rank);
    if (rank <= 10) ++dist.in_top_10;
    if (rank <= 50) ++dist.in_top_50;
  }
  if (!dist.empty) dist.mean_rank = sum / static_cast<double>(dist.doc_count);
  return dist;
}

}  // namespace regent::eval
