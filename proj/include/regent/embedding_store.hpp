#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "regent/autodiff.hpp"
#include "regent/matrix.hpp"
#include "regent/text_analysis.hpp"

namespace regent::embed {

enum class EncoderMode { frozen_lookup, trainable_transformer };

struct EncoderConfig {
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int max_len = 512;
  EncoderMode mode = EncoderMode::trainable_transformer;
  double dropout = 0.0;

  void validate() const;
};

// Splits pre-projected q/k/v into heads, applies scaled dot-product attention
// per head with optional key masking, concatenates heads. No output
// projection; the caller applies one where the architecture has it.
// When head_weights is non-null the per-head softmax matrices are copied out.
ad::Node* multi_head_attention(ad::Tape& tape, ad::Node* q, ad::Node* k, ad::Node* v,
                               int num_heads,
                               const std::vector<std::uint8_t>* key_mask = nullptr,
                               std::vector<Matrix>* head_weights = nullptr);

// Registers encoder parameters under `prefix` (tok_emb, pos_emb, per-layer
// attention/ffn/layer-norm tensors). Layer-norm gains start at 1, biases at
// 0; everything else uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void add_encoder_params(ad::ParamSet& params, const EncoderConfig& config, int vocab_size,
                        std::mt19937_64& rng, const std::string& prefix = "encoder.");

// Contextual (or lookup) embedding of every position, [max_len x d].
// Padding rows carry their raw embedding and are bypassed by the layer stack.
ad::Node* encode(ad::Tape& tape, const EncoderConfig& config, ad::ParamSet& params,
                 const text::AnalyzedDocument& doc, bool training = false,
                 std::mt19937_64* dropout_rng = nullptr,
                 const std::string& prefix = "encoder.");

struct EntityEmbeddingTable {
  std::unordered_map<std::string, std::vector<double>> entries;
  std::size_t dim = 0;

  bool contains(const std::string& entity_id) const { return entries.count(entity_id) != 0; }
  const std::vector<double>& at(const std::string& entity_id) const;
};

// word2vec text format: header "count dim", then "entity_id v1 ... v_dim".
EntityEmbeddingTable load_embeddings(const std::string& path);

// Raw embedding rows for ids; throws listing every missing id.
Matrix gather_entities(const EntityEmbeddingTable& table, const std::vector<std::string>& ids);

// row j = table[ids_j] * w_p, [n x d].
Matrix project_entities(const EntityEmbeddingTable& table, const std::vector<std::string>& ids,
                        const Matrix& w_p);

}  // namespace regent::embed
