#include "regent/entity_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "regent/binio.hpp"

namespace regent::entity {

namespace {

constexpr char kCrossMagic[4] = {'R', 'G', 'X', 'S'};

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cos_to_unit(double c) { return (1.0 + c) / 2.0; }

std::vector<std::string> resolved_query_entities(const QueryRecord& query,
                                                 const ScorerResources& res) {
  if (res.links == nullptr) throw std::invalid_argument("scorer needs entity links");
  const std::vector<std::string>* linked = res.links->query_links(query.query_id);
  if (linked == nullptr || linked->empty())
    throw std::domain_error("query " + query.query_id +
                            " has no linked entities; fall back to the query-relevant set");
  return *linked;
}

std::map<std::string, double> description_bm25_scores(const QueryRecord& query,
                                                      const std::set<std::string>& candidates,
                                                      const lexical::InvertedIndex& index) {
  std::map<std::string, double> raw;
  std::vector<std::string> stems = index.query_stems(query.text);
  for (const std::string& id : candidates) {
    double s = 0.0;
    if (index.has_doc(id))
      for (const std::string& stem : stems) s += index.bm25_term_score(stem, id);
    raw[id] = s;
  }
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& [id, s] : raw) {
    lo = first ? s : std::min(lo, s);
    hi = first ? s : std::max(hi, s);
    first = false;
  }
  std::map<std::string, double> out;
  for (const auto& [id, s] : raw) out[id] = hi > lo ? (s - lo) / (hi - lo) : 0.5;
  return out;
}

std::map<std::string, double> max_sim_scores(const QueryRecord& query,
                                             const std::set<std::string>& candidates,
                                             const ScorerResources& res) {
  if (res.embeddings == nullptr) throw std::invalid_argument("scorer needs entity embeddings");
  std::vector<std::string> linked = resolved_query_entities(query, res);
  std::map<std::string, double> out;
  for (const std::string& id : candidates) {
    const std::vector<double>& emb = res.embeddings->at(id);
    double best = -1.0;
    for (const std::string& qe : linked) best = std::max(best, cosine(emb, res.embeddings->at(qe)));
    out[id] = cos_to_unit(best);
  }
  return out;
}

std::map<std::string, double> centroid_sim_scores(const QueryRecord& query,
                                                  const std::set<std::string>& candidates,
                                                  const ScorerResources& res) {
  if (res.embeddings == nullptr) throw std::invalid_argument("scorer needs entity embeddings");
  std::vector<std::string> linked = resolved_query_entities(query, res);
  std::vector<double> centroid(res.embeddings->dim, 0.0);
  for (const std::string& qe : linked) {
    const std::vector<double>& emb = res.embeddings->at(qe);
    for (std::size_t i = 0; i < centroid.size(); ++i) centroid[i] += emb[i];
  }
  for (double& v : centroid) v /= static_cast<double>(linked.size());
  std::map<std::string, double> out;
  for (const std::string& id : candidates)
    out[id] = cos_to_unit(cosine(res.embeddings->at(id), centroid));
  return out;
}

}  // namespace

EntityLinkFile load_links(const std::string& path, const std::set<std::string>& doc_ids,
                          const std::set<std::string>& query_ids,
                          const embed::EntityEmbeddingTable& table) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open entity links file: " + path);
  EntityLinkFile links;
  std::set<std::string> unresolved;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.contains("id") || !record.contains("entities"))
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected fields \"id\" and \"entities\"");
    std::string id = record["id"].get<std::string>();
    std::vector<std::string> resolved;
    for (const auto& e : record["entities"]) {
      std::string entity = e.get<std::string>();
      if (table.contains(entity)) resolved.push_back(entity);
      else unresolved.insert(entity);
    }
    if (doc_ids.count(id) != 0) links.documents[id] = resolved;
    if (query_ids.count(id) != 0) links.queries[id] = resolved;
  }
  links.unresolvable.assign(unresolved.begin(), unresolved.end());
  return links;
}

std::unordered_map<std::string, int> candidate_pool_frequency(
    const std::vector<lexical::ScoredDoc>& run, const EntityLinkFile& links,
    std::size_t depth) {
  if (depth < 1) throw std::invalid_argument("candidate_pool: depth must be >= 1");
  std::unordered_map<std::string, int> freq;
  std::size_t limit = std::min(run.size(), depth);
  for (std::size_t i = 0; i < limit; ++i) {
    const std::vector<std::string>* entities = links.doc_links(run[i].doc_id);
    if (entities == nullptr) continue;
    std::set<std::string> unique(entities->begin(), entities->end());
    for (const std::string& e : unique) ++freq[e];
  }
  return freq;
}

std::set<std::string> candidate_pool(const std::vector<lexical::ScoredDoc>& run,
                                     const EntityLinkFile& links, std::size_t depth) {
  std::set<std::string> pool;
  for (const auto& [entity, count] : candidate_pool_frequency(run, links, depth))
    pool.insert(entity);
  return pool;
}

CrossEncoderScorer::CrossEncoderScorer(embed::EncoderConfig config,
                                       const text::SubwordVocab* vocab, std::uint64_t seed)
    : config_(config), vocab_(vocab) {
  if (vocab_ == nullptr) throw std::invalid_argument("cross scorer needs a vocabulary");
  config_.validate();
  std::mt19937_64 rng(seed);
  embed::add_encoder_params(params_, config_, static_cast<int>(vocab_->size()), rng);
  std::size_t d = static_cast<std::size_t>(config_.hidden_dim);
  params_.add("head_w", Matrix::uniform_init(d, 1, d, rng));
  params_.add("head_b", Matrix(1, 1, 0.0));
}

text::AnalyzedDocument CrossEncoderScorer::build_pair(const std::string& query_text,
                                                      const std::string& entity_name) const {
  int max_len = config_.max_len;
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(max_len));
  ids.push_back(vocab_->cls_id());
  // query words get at most two thirds of the usable budget
  int query_budget = 1 + std::max(1, (max_len - 3) * 2 / 3);
  auto append_words = [&](const std::string& text_in, int limit) {
    for (const text::AnalyzerTerm& term : text::analyze(text_in, text::default_stopwords())) {
      std::string lower = term.surface;
      for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      std::vector<int> pieces = vocab_->segment_word(lower);
      if (pieces.empty()) pieces.push_back(vocab_->unk_id());
      if (static_cast<int>(ids.size() + pieces.size()) > limit) break;
      ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
  };
  append_words(query_text, query_budget);
  ids.push_back(vocab_->sep_id());
  append_words(entity_name, max_len - 1);
  ids.push_back(vocab_->sep_id());

  text::AnalyzedDocument pair;
  pair.content_len = static_cast<int>(ids.size());
  ids.resize(static_cast<std::size_t>(max_len), vocab_->pad_id());
  pair.subwords = std::move(ids);
  return pair;
}

ad::Node* CrossEncoderScorer::logit(ad::Tape& tape, const std::string& query_text,
                                    const std::string& entity_name, bool training,
                                    std::mt19937_64* dropout_rng) {
  text::AnalyzedDocument pair = build_pair(query_text, entity_name);
  ad::Node* h = embed::encode(tape, config_, params_, pair, training, dropout_rng);
  std::vector<std::uint8_t> first_row(h->rows(), 0);
  first_row[0] = 1;
  ad::Node* cls = tape.mean_rows(h, first_row);  // the sequence-start representation
  return tape.add_rowvec(tape.matmul(cls, tape.param(params_.at("head_w"))),
                         tape.param(params_.at("head_b")));
}

double CrossEncoderScorer::score(const std::string& query_text, const std::string& entity_name) {
  ad::Tape tape(false);
  double z = logit(tape, query_text, entity_name)->value(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

void CrossEncoderScorer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write entity ranker checkpoint: " + path);
  binio::put_magic(out, kCrossMagic);
  binio::put_u64(out, 1);
  binio::put_u64(out, static_cast<std::uint64_t>(config_.hidden_dim));
  binio::put_u64(out, static_cast<std::uint64_t>(config_.num_layers));
  binio::put_u64(out, static_cast<std::uint64_t>(config_.num_heads));
  binio::put_u64(out, static_cast<std::uint64_t>(config_.max_len));
  binio::put_f64(out, config_.dropout);
  binio::put_u64(out, params_.count());
  for (std::size_t i = 0; i < params_.count(); ++i) {
    const ad::Parameter& p = params_[i];
    binio::put_string(out, p.name);
    binio::put_u64(out, p.value.rows());
    binio::put_u64(out, p.value.cols());
    for (std::size_t r = 0; r < p.value.rows(); ++r)
      for (std::size_t c = 0; c < p.value.cols(); ++c) binio::put_f64(out, p.value(r, c));
  }
}

CrossEncoderScorer CrossEncoderScorer::load(const std::string& path,
                                            const text::SubwordVocab* vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open entity ranker checkpoint: " + path);
  binio::check_magic(in, kCrossMagic, "entity ranker checkpoint");
  if (binio::get_u64(in) != 1) throw std::runtime_error("unsupported ranker version");
  embed::EncoderConfig config;
  config.hidden_dim = static_cast<int>(binio::get_u64(in));
  config.num_layers = static_cast<int>(binio::get_u64(in));
  config.num_heads = static_cast<int>(binio::get_u64(in));
  config.max_len = static_cast<int>(binio::get_u64(in));
  config.dropout = binio::get_f64(in);
  config.mode = embed::EncoderMode::trainable_transformer;
  CrossEncoderScorer scorer(config, vocab, 0);
  std::uint64_t n = binio::get_u64(in);
  if (n != scorer.params_.count())
    throw std::runtime_error("ranker checkpoint tensor count mismatch");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = binio::get_string(in);
    std::size_t rows = binio::get_u64(in);
    std::size_t cols = binio::get_u64(in);
    ad::Parameter& p = scorer.params_.at(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw std::runtime_error("ranker checkpoint shape mismatch for " + name);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) p.value(r, c) = binio::get_f64(in);
  }
  return scorer;
}

std::string entity_display_name(const std::string& entity_id) {
  std::string name = entity_id;
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

double LogisticScorer::score(const std::array<double, kFeatureCount>& features) const {
  double z = bias;
  for (std::size_t i = 0; i < kFeatureCount; ++i) z += weights[i] * features[i];
  return 1.0 / (1.0 + std::exp(-z));
}

void LogisticScorer::train(const std::vector<std::array<double, kFeatureCount>>& features,
                           const std::vector<int>& labels, int steps, double lr) {
  if (features.size() != labels.size() || features.empty())
    throw std::invalid_argument("logistic scorer: bad training data");
  for (int label : labels)
    if (label != 0 && label != 1)
      throw std::invalid_argument("logistic scorer: label outside {0,1}");
  double inv_n = 1.0 / static_cast<double>(features.size());
  for (int step = 0; step < steps; ++step) {
    std::array<double, kFeatureCount> gw{};
    double gb = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      double err = score(features[i]) - static_cast<double>(labels[i]);
      for (std::size_t j = 0; j < kFeatureCount; ++j) gw[j] += err * features[i][j] * inv_n;
      gb += err * inv_n;
    }
    for (std::size_t j = 0; j < kFeatureCount; ++j) weights[j] -= lr * gw[j];
    bias -= lr * gb;
  }
}

void LogisticScorer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write logistic scorer: " + path);
  for (double w : weights) binio::put_f64(out, w);
  binio::put_f64(out, bias);
}

LogisticScorer LogisticScorer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open logistic scorer: " + path);
  LogisticScorer s;
  for (double& w : s.weights) w = binio::get_f64(in);
  s.bias = binio::get_f64(in);
  return s;
}

std::map<std::string, double> score_entities(EntityScorerKind kind, const QueryRecord& query,
                                             const std::set<std::string>& candidates,
                                             const ScorerResources& res) {
  std::map<std::string, double> out;
  switch (kind) {
    case EntityScorerKind::supervised_cross: {
      if (res.cross == nullptr)
        throw std::invalid_argument(
            "supervised_cross requires trained ranker weights; run train-entity-ranker first");
      for (const std::string& id : candidates)
        out[id] = res.cross->score(query.text, entity_display_name(id));
      break;
    }
    case EntityScorerKind::bm25_descriptions: {
      if (res.description_index == nullptr)
        throw std::invalid_argument("bm25_descriptions requires a description corpus index");
      out = description_bm25_scores(query, candidates, *res.description_index);
      break;
    }
    case EntityScorerKind::max_sim:
      out = max_sim_scores(query, candidates, res);
      break;
    case EntityScorerKind::centroid_sim:
      out = centroid_sim_scores(query, candidates, res);
      break;
    case EntityScorerKind::logistic_regression: {
      if (res.logreg == nullptr)
        throw std::invalid_argument(
            "logistic_regression requires trained weights; run train-entity-ranker first");
      if (res.description_index == nullptr || res.pool_frequency == nullptr ||
          res.pool_doc_count == 0)
        throw std::invalid_argument("logistic_regression requires description and pool stats");
      std::map<std::string, double> max_s, cen_s;
      bool have_query_entities = true;
      try {
        max_s = max_sim_scores(query, candidates, res);
        cen_s = centroid_sim_scores(query, candidates, res);
      } catch (const std::domain_error&) {
        have_query_entities = false;  // neutral similarity features below
      }
      std::map<std::string, double> desc = description_bm25_scores(query, candidates,
                                                                   *res.description_index);
      for (const std::string& id : candidates) {
        auto fit = res.pool_frequency->find(id);
        double freq = fit == res.pool_frequency->end()
                          ? 0.0
                          : static_cast<double>(fit->second) /
                                static_cast<double>(res.pool_doc_count);
        std::array<double, LogisticScorer::kFeatureCount> features = {
            have_query_entities ? max_s.at(id) : 0.5,
            have_query_entities ? cen_s.at(id) : 0.5, desc.at(id), freq};
        out[id] = res.logreg->score(features);
      }
      break;
    }
  }
  for (const auto& [id, s] : out)
    if (!(s >= 0.0 && s <= 1.0))
      throw std::logic_error("entity score out of [0,1] for " + id);
  return out;
}

ScoredEntitySet select_top_k(const std::map<std::string, double>& scores, std::size_t k,
                             const embed::EntityEmbeddingTable& table) {
  if (k < 1) throw std::invalid_argument("select_top_k: k must be >= 1");
  std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  ScoredEntitySet set;
  set.scaled_embeddings = Matrix(ranked.size(), table.dim);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    set.entity_ids.push_back(ranked[i].first);
    set.scores.push_back(ranked[i].second);
    const std::vector<double>& emb = table.at(ranked[i].first);
    for (std::size_t j = 0; j < table.dim; ++j)
      set.scaled_embeddings(i, j) = ranked[i].second * emb[j];
  }
  return set;
}

ScoredEntitySet document_entity_set(const std::string& doc_id, const EntityLinkFile& links,
                                    const ScoredEntitySet& query_set) {
  ScoredEntitySet out;
  const std::vector<std::string>* doc_entities = links.doc_links(doc_id);
  std::set<std::string> doc_set;
  if (doc_entities != nullptr) doc_set.insert(doc_entities->begin(), doc_entities->end());
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < query_set.entity_ids.size(); ++i)
    if (doc_set.count(query_set.entity_ids[i]) != 0) keep.push_back(i);
  out.scaled_embeddings = Matrix(keep.size(), query_set.scaled_embeddings.cols());
  for (std::size_t row = 0; row < keep.size(); ++row) {
    std::size_t i = keep[row];
    out.entity_ids.push_back(query_set.entity_ids[i]);
    out.scores.push_back(query_set.scores[i]);
    for (std::size_t j = 0; j < out.scaled_embeddings.cols(); ++j)
      out.scaled_embeddings(row, j) = query_set.scaled_embeddings(i, j);
  }
  return out;
}

QueryEntitySets build_query_entity_sets(const QueryRecord& query,
                                        const std::vector<lexical::ScoredDoc>& run,
                                        const EntityLinkFile& links,
                                        const embed::EntityEmbeddingTable& table,
                                        EntityScorerKind kind, const ScorerResources& resources,
                                        std::size_t depth, std::size_t top_k) {
  QueryEntitySets out;
  std::set<std::string> pool = candidate_pool(run, links, depth);
  if (!pool.empty()) {
    std::map<std::string, double> scores = score_entities(kind, query, pool, resources);
    out.query_relevant = select_top_k(scores, top_k, table);
  }
  const std::vector<std::string>* linked = links.query_links(query.query_id);
  if (linked != nullptr && !linked->empty()) {
    std::set<std::string> own(linked->begin(), linked->end());
    std::map<std::string, double> scores = score_entities(kind, query, own, resources);
    out.query_side = select_top_k(scores, own.size(), table);
  } else {
    // fall back to the strongest query-relevant entities
    std::map<std::string, double> top5;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, out.query_relevant.size()); ++i)
      top5[out.query_relevant.entity_ids[i]] = out.query_relevant.scores[i];
    if (!top5.empty()) out.query_side = select_top_k(top5, 5, table);
  }
  return out;
}

std::vector<RankerExample> build_ranker_examples(const eval::Qrels& qrels,
                                                 const eval::RankedRun& candidates,
                                                 const EntityLinkFile& links,
                                                 std::size_t depth) {
  std::vector<RankerExample> out;
  for (const auto& [qid, grades] : qrels.grades) {
    auto rit = candidates.queries.find(qid);
    if (rit == candidates.queries.end()) continue;
    std::set<std::string> positives;
    for (const auto& [doc, grade] : grades) {
      if (grade < 1) continue;
      const std::vector<std::string>* linked = links.doc_links(doc);
      if (linked != nullptr) positives.insert(linked->begin(), linked->end());
    }
    std::set<std::string> pool = candidate_pool(rit->second, links, depth);
    for (const std::string& e : positives) out.push_back({qid, e, 1});
    for (const std::string& e : pool)
      if (positives.count(e) == 0) out.push_back({qid, e, 0});
  }
  return out;
}

std::vector<CrossEncoderScorer> train_entity_ranker(
    const std::vector<RankerExample>& pairs, const train::FoldPlan& plan,
    const std::map<std::string, std::string>& query_texts, const embed::EncoderConfig& config,
    const text::SubwordVocab& vocab, const RankerTrainConfig& train_config) {
  plan.validate();
  for (const RankerExample& ex : pairs) {
    if (ex.label != 0 && ex.label != 1)
      throw std::invalid_argument("entity ranker: label outside {0,1} for query " +
                                  ex.query_id + " entity " + ex.entity_id);
    if (plan.assignments.count(ex.query_id) == 0)
      throw std::invalid_argument("entity ranker: query " + ex.query_id + " missing from folds");
    if (query_texts.count(ex.query_id) == 0)
      throw std::invalid_argument("entity ranker: no text for query " + ex.query_id);
  }
  std::vector<int> fold_positives(static_cast<std::size_t>(plan.fold_count), 0);
  for (const RankerExample& ex : pairs)
    if (ex.label == 1) ++fold_positives[static_cast<std::size_t>(plan.assignments.at(ex.query_id))];
  for (int f = 0; f < plan.fold_count; ++f)
    if (fold_positives[static_cast<std::size_t>(f)] == 0)
      throw std::invalid_argument("entity ranker: fold " + std::to_string(f) +
                                  " has no positive pairs");

  std::vector<CrossEncoderScorer> scorers;
  for (int fold = 0; fold < plan.fold_count; ++fold) {
    CrossEncoderScorer scorer(config, &vocab,
                              train_config.seed + 1000 + static_cast<std::uint64_t>(fold));
    std::vector<const RankerExample*> train_pairs;
    for (const RankerExample& ex : pairs)
      if (plan.assignments.at(ex.query_id) != fold) train_pairs.push_back(&ex);

    train::OptimizerState state = train::OptimizerState::init(
        scorer.params(), train_config.base_lr, train_config.warmup_steps,
        train_config.clip_norm);
    std::mt19937_64 shuffle_rng(train_config.seed * 7919 + static_cast<std::uint64_t>(fold));
    std::mt19937_64 dropout_rng(train_config.seed * 104729 + static_cast<std::uint64_t>(fold));
    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
      std::shuffle(train_pairs.begin(), train_pairs.end(), shuffle_rng);
      for (std::size_t start = 0; start < train_pairs.size();
           start += static_cast<std::size_t>(train_config.batch_size)) {
        std::size_t end = std::min(train_pairs.size(),
                                   start + static_cast<std::size_t>(train_config.batch_size));
        scorer.params().zero_grad();
        double inv_n = 1.0 / static_cast<double>(end - start);
        for (std::size_t i = start; i < end; ++i) {
          const RankerExample& ex = *train_pairs[i];
          ad::Tape tape(true);
          ad::Node* z = scorer.logit(tape, query_texts.at(ex.query_id),
                                     entity_display_name(ex.entity_id), true, &dropout_rng);
          ad::Node* loss = tape.bce_with_logits(z, static_cast<double>(ex.label));
          tape.backward(loss, inv_n);
        }
        train::clip_gradients(scorer.params(), state.clip_norm);
        state.step += 1;
        train::adam_update(scorer.params(), state, train::lr_schedule(state));
      }
    }
    scorers.push_back(std::move(scorer));
  }
  return scorers;
}

}  // namespace regent::entity
