#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "regent/autodiff.hpp"
#include "regent/embedding_store.hpp"
#include "regent/entity_types.hpp"
#include "regent/lexical_index.hpp"
#include "regent/text_analysis.hpp"

namespace regent::model {

enum class FusionKind {
  learned_sigmoid,
  gated_gelu,
  additive,
  equal_weighting,
  learned_tanh,
  hard_switch,
  attention_based,
};

std::string to_string(FusionKind kind);
FusionKind fusion_from_string(const std::string& name);
const std::vector<FusionKind>& all_fusion_kinds();

struct AblationFlags {
  bool disable_entities = false;
  bool disable_token_bm25 = false;
  bool document_level_bm25 = false;  // implies disable_token_bm25

  void validate() const;
  std::string label() const;
};

struct RegentConfig {
  embed::EncoderConfig encoder;  // d, encoder layers/heads, max_len, mode
  int cross_layers = 2;
  int num_heads = 4;      // heads for cross, entity and fusion attention
  int entity_dim = 16;    // d_e
  int ffn_mult = 4;       // d_ff = ffn_mult * d
  int head_blocks = 2;    // scoring-head residual blocks
  double dropout = 0.0;
  FusionKind fusion = FusionKind::learned_sigmoid;
  AblationFlags flags;

  int hidden_dim() const { return encoder.hidden_dim; }
  int max_len() const { return encoder.max_len; }
  void validate() const;
};

struct ForwardInputs {
  const text::AnalyzedDocument* query = nullptr;
  const text::AnalyzedDocument* doc = nullptr;
  const lexical::TokenRelevanceVector* relevance = nullptr;
  const entity::ScoredEntitySet* query_entities = nullptr;  // null or empty = none
  const entity::ScoredEntitySet* doc_entities = nullptr;
  double doc_bm25 = 0.0;  // document-level score for the coarse-BM25 variant
};

// Per-layer, per-head softmax matrices captured during forward.
struct AttentionTrace {
  struct Layer {
    std::vector<Matrix> token;          // [n_q x n_d] per head
    std::vector<Matrix> entity_entity;  // [n_qe x n_de] per head
    std::vector<Matrix> entity_token;   // [n_q x n_qe] per head
  };
  std::vector<Layer> layers;
  bool entity_pathway_active = false;
};

// --- standalone operations (also used by the model forward) ---

// K' = K + alpha*R and V' = V + alpha*R with R the relevance vector
// broadcast across all dimensions.
struct EnhancedKv {
  ad::Node* k;
  ad::Node* v;
};
EnhancedKv enhance_kv(ad::Tape& tape, ad::Node* k, ad::Node* v,
                      const lexical::TokenRelevanceVector& relevance, ad::Node* alpha);

// Multi-head softmax(Q K'^T / sqrt(d_k)) V' followed by the output projection.
ad::Node* token_attention(ad::Tape& tape, ad::Node* q, ad::Node* k, ad::Node* v,
                          ad::Node* w_out, int num_heads,
                          const std::vector<std::uint8_t>& key_mask,
                          std::vector<Matrix>* head_weights = nullptr);

// Entity-entity attention (eq. pathway step 1). Either side empty (nullptr or
// zero rows) yields the empty-entity sentinel: nullptr.
ad::Node* entity_entity_attention(ad::Tape& tape, ad::Node* e_q, ad::Node* e_d, ad::Node* w_q,
                                  ad::Node* w_k, ad::Node* w_v, int num_heads,
                                  std::vector<Matrix>* head_weights = nullptr);

// Entity-token attention (pathway step 2); a null a_e yields an all-zero
// [n_q x d] output.
ad::Node* entity_token_attention(ad::Tape& tape, ad::Node* q, ad::Node* a_e, ad::Node* w_q,
                                 ad::Node* w_k, ad::Node* w_v, int num_heads,
                                 std::vector<Matrix>* head_weights = nullptr);

// Everything fuse() needs besides the two pathway outputs.
struct FusionContext {
  FusionKind kind = FusionKind::learned_sigmoid;
  ad::Node* w_f = nullptr;      // learned_sigmoid / learned_tanh
  ad::Node* ln_gain = nullptr;  // sigmoid / tanh / additive
  ad::Node* ln_bias = nullptr;
  ad::Node* gate_w1 = nullptr;  // gated_gelu
  ad::Node* gate_b1 = nullptr;
  ad::Node* gate_w2 = nullptr;
  ad::Node* gate_b2 = nullptr;
  ad::Node* attn_wq = nullptr;  // attention_based
  ad::Node* attn_wk = nullptr;
  ad::Node* attn_wv = nullptr;
  int attn_heads = 2;
  bool entity_active = false;  // hard_switch selector
  double dropout = 0.0;
  bool training = false;
  std::mt19937_64* dropout_rng = nullptr;
};

struct PathwayOutput {
  ad::Node* token_pathway = nullptr;
  ad::Node* entity_pathway = nullptr;
  ad::Node* gate = nullptr;  // null for kinds without an elementwise gate
  ad::Node* fused = nullptr;
};

PathwayOutput fuse(ad::Tape& tape, const FusionContext& ctx, ad::Node* a_t, ad::Node* a_et);

// --- the scoring network ---

class RegentModel {
 public:
  RegentModel(RegentConfig config, int vocab_size, std::uint64_t seed);

  const RegentConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  // Builds the scoring graph on the tape and returns the [1x1] score node.
  ad::Node* score(ad::Tape& tape, const ForwardInputs& in, bool training = false,
                  std::mt19937_64* dropout_rng = nullptr, AttentionTrace* trace = nullptr);

  // Value-only forward pass.
  double forward(const ForwardInputs& in, AttentionTrace* trace = nullptr);

  // Accumulates d(upstream * score)/d(theta) into params().grad.
  void backward(const ForwardInputs& in, double upstream = 1.0);

  void save(const std::string& path) const;
  static RegentModel load(const std::string& path);

 private:
  void register_params(std::uint64_t seed);
  void check_inputs(const ForwardInputs& in) const;
  FusionContext make_fusion_context(ad::Tape& tape, bool entity_active, bool training,
                                    std::mt19937_64* dropout_rng);

  RegentConfig config_;
  int vocab_size_ = 0;
  ad::ParamSet params_;
};

}  // namespace regent::model
