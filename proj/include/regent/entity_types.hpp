#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "regent/matrix.hpp"

namespace regent::entity {

// Ingested links: document/query id -> linked entity ids.
struct EntityLinkFile {
  std::unordered_map<std::string, std::vector<std::string>> documents;
  std::unordered_map<std::string, std::vector<std::string>> queries;
  std::vector<std::string> unresolvable;  // ids absent from the embedding table at load

  const std::vector<std::string>* doc_links(const std::string& doc_id) const {
    auto it = documents.find(doc_id);
    return it == documents.end() ? nullptr : &it->second;
  }
  const std::vector<std::string>* query_links(const std::string& query_id) const {
    auto it = queries.find(query_id);
    return it == queries.end() ? nullptr : &it->second;
  }
};

// Entities with relevance scores in [0,1] and score-scaled embeddings,
// row j of scaled_embeddings = scores[j] * embedding(entity_ids[j]).
struct ScoredEntitySet {
  std::vector<std::string> entity_ids;
  std::vector<double> scores;
  Matrix scaled_embeddings;  // [n x d_e]

  std::size_t size() const { return entity_ids.size(); }
  bool empty() const { return entity_ids.empty(); }
};

enum class EntityScorerKind {
  supervised_cross,
  bm25_descriptions,
  max_sim,
  centroid_sim,
  logistic_regression,
};

std::string to_string(EntityScorerKind kind);
EntityScorerKind scorer_kind_from_string(const std::string& name);

}  // namespace regent::entity
