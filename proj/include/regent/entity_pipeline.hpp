#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "regent/embedding_store.hpp"
#include "regent/entity_types.hpp"
#include "regent/evaluation.hpp"
#include "regent/lexical_index.hpp"
#include "regent/text_analysis.hpp"
#include "regent/training.hpp"

namespace regent::entity {

struct QueryRecord {
  std::string query_id;
  std::string text;
};

// Loads JSON-lines {"id": ..., "entities": [...]}. Ids present in
// `doc_ids` land in documents, ids in `query_ids` in queries. Entities
// missing from the embedding table are dropped and recorded as unresolvable.
EntityLinkFile load_links(const std::string& path, const std::set<std::string>& doc_ids,
                          const std::set<std::string>& query_ids,
                          const embed::EntityEmbeddingTable& table);

// entity -> number of top-`depth` documents linking it.
std::unordered_map<std::string, int> candidate_pool_frequency(
    const std::vector<lexical::ScoredDoc>& run, const EntityLinkFile& links, std::size_t depth);

// Union of entity lists over the top-`depth` documents of the run.
std::set<std::string> candidate_pool(const std::vector<lexical::ScoredDoc>& run,
                                     const EntityLinkFile& links, std::size_t depth);

// Trainable text-pair scorer: encodes "[CLS] query [SEP] entity name [SEP]"
// and applies a linear head to the sequence-start representation.
class CrossEncoderScorer {
 public:
  CrossEncoderScorer(embed::EncoderConfig config, const text::SubwordVocab* vocab,
                     std::uint64_t seed);

  double score(const std::string& query_text, const std::string& entity_name);  // in (0,1)
  ad::Node* logit(ad::Tape& tape, const std::string& query_text,
                  const std::string& entity_name, bool training = false,
                  std::mt19937_64* dropout_rng = nullptr);

  ad::ParamSet& params() { return params_; }
  const embed::EncoderConfig& config() const { return config_; }

  void save(const std::string& path) const;
  static CrossEncoderScorer load(const std::string& path, const text::SubwordVocab* vocab);

  text::AnalyzedDocument build_pair(const std::string& query_text,
                                    const std::string& entity_name) const;

 private:
  embed::EncoderConfig config_;
  const text::SubwordVocab* vocab_;
  ad::ParamSet params_;
};

// Entity id -> display name: underscores become spaces.
std::string entity_display_name(const std::string& entity_id);

// Four-feature logistic model over [max_sim, centroid_sim, desc_bm25, pool_freq].
class LogisticScorer {
 public:
  static constexpr std::size_t kFeatureCount = 4;

  double score(const std::array<double, kFeatureCount>& features) const;
  void train(const std::vector<std::array<double, kFeatureCount>>& features,
             const std::vector<int>& labels, int steps = 500, double lr = 0.5);

  void save(const std::string& path) const;
  static LogisticScorer load(const std::string& path);

  std::array<double, kFeatureCount> weights{};
  double bias = 0.0;
};

struct ScorerResources {
  const embed::EntityEmbeddingTable* embeddings = nullptr;
  const EntityLinkFile* links = nullptr;
  const lexical::InvertedIndex* description_index = nullptr;  // doc_id = entity_id
  CrossEncoderScorer* cross = nullptr;
  const LogisticScorer* logreg = nullptr;
  const std::unordered_map<std::string, int>* pool_frequency = nullptr;
  std::size_t pool_doc_count = 0;  // documents contributing to the pool
};

// Scores every candidate in [0,1] with the selected scorer. max_sim and
// centroid_sim require the query to have linked entities and throw
// domain_error otherwise (callers fall back per the pipeline rules).
std::map<std::string, double> score_entities(EntityScorerKind kind, const QueryRecord& query,
                                             const std::set<std::string>& candidates,
                                             const ScorerResources& resources);

// k highest-scoring entities (ties by ascending id) with score-scaled
// embeddings.
ScoredEntitySet select_top_k(const std::map<std::string, double>& scores, std::size_t k,
                             const embed::EntityEmbeddingTable& table);

// Intersection of the document's entities with the query-relevant set,
// keeping that set's scores and scaled embeddings.
ScoredEntitySet document_entity_set(const std::string& doc_id, const EntityLinkFile& links,
                                    const ScoredEntitySet& query_set);

struct QueryEntitySets {
  ScoredEntitySet query_relevant;  // top-k over the candidate pool (E_d source)
  ScoredEntitySet query_side;      // E_q: linked query entities, or top-5 fallback
};

QueryEntitySets build_query_entity_sets(const QueryRecord& query,
                                        const std::vector<lexical::ScoredDoc>& run,
                                        const EntityLinkFile& links,
                                        const embed::EntityEmbeddingTable& table,
                                        EntityScorerKind kind, const ScorerResources& resources,
                                        std::size_t depth = 1000, std::size_t top_k = 20);

// --- supervised entity-ranker training ---

struct RankerExample {
  std::string query_id;
  std::string entity_id;
  int label = 0;
};

// Positives: entities linked from qrels-relevant documents; negatives: all
// other pool candidates.
std::vector<RankerExample> build_ranker_examples(const eval::Qrels& qrels,
                                                 const eval::RankedRun& candidates,
                                                 const EntityLinkFile& links,
                                                 std::size_t depth);

struct RankerTrainConfig {
  int epochs = 3;
  int batch_size = 8;
  double base_lr = 1e-3;
  int warmup_steps = 50;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
};

// One scorer per fold, trained with BCE on the pairs whose query lies
// outside that fold; inference on a query uses its own fold's scorer.
std::vector<CrossEncoderScorer> train_entity_ranker(
    const std::vector<RankerExample>& pairs, const train::FoldPlan& plan,
    const std::map<std::string, std::string>& query_texts, const embed::EncoderConfig& config,
    const text::SubwordVocab& vocab, const RankerTrainConfig& train_config);

}  // namespace regent::entity
