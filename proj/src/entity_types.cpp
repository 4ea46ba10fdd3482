#include "regent/entity_types.hpp"

#include <stdexcept>

namespace regent::entity {

std::string to_string(EntityScorerKind kind) {
  switch (kind) {
    case EntityScorerKind::supervised_cross: return "supervised_cross";
    case EntityScorerKind::bm25_descriptions: return "bm25_descriptions";
    case EntityScorerKind::max_sim: return "max_sim";
    case EntityScorerKind::centroid_sim: return "centroid_sim";
    case EntityScorerKind::logistic_regression: return "logistic_regression";
  }
  throw std::logic_error("unreachable scorer kind");
}

EntityScorerKind scorer_kind_from_string(const std::string& name) {
  for (EntityScorerKind k :
       {EntityScorerKind::supervised_cross, EntityScorerKind::bm25_descriptions,
        EntityScorerKind::max_sim, EntityScorerKind::centroid_sim,
        EntityScorerKind::logistic_regression})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown entity scorer kind: " + name);
}

}  // namespace regent::entity
