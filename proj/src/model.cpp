#include "regent/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "regent/binio.hpp"

namespace regent::model {

namespace {
constexpr char kMagic[4] = {'R', 'G', 'T', 'C'};
}

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::learned_sigmoid: return "learned_sigmoid";
    case FusionKind::gated_gelu: return "gated_gelu";
    case FusionKind::additive: return "additive";
    case FusionKind::equal_weighting: return "equal_weighting";
    case FusionKind::learned_tanh: return "learned_tanh";
    case FusionKind::hard_switch: return "hard_switch";
    case FusionKind::attention_based: return "attention_based";
  }
  throw std::logic_error("unreachable fusion kind");
}

FusionKind fusion_from_string(const std::string& name) {
  for (FusionKind k : all_fusion_kinds())
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown fusion kind: " + name);
}

const std::vector<FusionKind>& all_fusion_kinds() {
  static const std::vector<FusionKind> kKinds = {
      FusionKind::learned_sigmoid, FusionKind::gated_gelu,   FusionKind::additive,
      FusionKind::equal_weighting, FusionKind::learned_tanh, FusionKind::hard_switch,
      FusionKind::attention_based,
  };
  return kKinds;
}

void AblationFlags::validate() const {
  if (document_level_bm25 && !disable_token_bm25)
    throw std::invalid_argument("document_level_bm25 requires disable_token_bm25");
}

std::string AblationFlags::label() const {
  if (document_level_bm25) return "document_level_bm25";
  if (disable_entities && disable_token_bm25) return "no_entities_no_bm25";
  if (disable_entities) return "no_entities";
  if (disable_token_bm25) return "no_bm25";
  return "full";
}

void RegentConfig::validate() const {
  encoder.validate();
  flags.validate();
  if (cross_layers < 1) throw std::invalid_argument("cross_layers must be >= 1");
  if (num_heads <= 0 || encoder.hidden_dim % num_heads != 0)
    throw std::invalid_argument("hidden_dim must be divisible by num_heads");
  if (entity_dim <= 0) throw std::invalid_argument("entity_dim must be positive");
  if (ffn_mult < 1 || head_blocks < 0) throw std::invalid_argument("bad ffn/head config");
  if (fusion == FusionKind::attention_based && encoder.hidden_dim % 2 != 0)
    throw std::invalid_argument("attention_based fusion needs an even hidden_dim");
}

EnhancedKv enhance_kv(ad::Tape& tape, ad::Node* k, ad::Node* v,
                      const lexical::TokenRelevanceVector& relevance, ad::Node* alpha) {
  if (relevance.scores.size() != k->rows())
    throw std::invalid_argument("enhance_kv: relevance length does not match sequence length");
  Matrix r_broadcast(k->rows(), k->cols());
  for (std::size_t i = 0; i < r_broadcast.rows(); ++i)
    for (std::size_t j = 0; j < r_broadcast.cols(); ++j)
      r_broadcast(i, j) = relevance.scores[i];
  ad::Node* scaled = tape.mul_scalar(tape.constant(std::move(r_broadcast)), alpha);
  return {tape.add(k, scaled), tape.add(v, scaled)};
}

ad::Node* token_attention(ad::Tape& tape, ad::Node* q, ad::Node* k, ad::Node* v,
                          ad::Node* w_out, int num_heads,
                          const std::vector<std::uint8_t>& key_mask,
                          std::vector<Matrix>* head_weights) {
  ad::Node* ctx = embed::multi_head_attention(tape, q, k, v, num_heads, &key_mask, head_weights);
  return tape.matmul(ctx, w_out);
}

ad::Node* entity_entity_attention(ad::Tape& tape, ad::Node* e_q, ad::Node* e_d, ad::Node* w_q,
                                  ad::Node* w_k, ad::Node* w_v, int num_heads,
                                  std::vector<Matrix>* head_weights) {
  if (e_q == nullptr || e_d == nullptr || e_q->rows() == 0 || e_d->rows() == 0) return nullptr;
  ad::Node* q = tape.matmul(e_q, w_q);
  ad::Node* k = tape.matmul(e_d, w_k);
  ad::Node* v = tape.matmul(e_d, w_v);
  return embed::multi_head_attention(tape, q, k, v, num_heads, nullptr, head_weights);
}

ad::Node* entity_token_attention(ad::Tape& tape, ad::Node* q, ad::Node* a_e, ad::Node* w_q,
                                 ad::Node* w_k, ad::Node* w_v, int num_heads,
                                 std::vector<Matrix>* head_weights) {
  if (a_e == nullptr || a_e->rows() == 0)
    return tape.constant(Matrix::zeros(q->rows(), q->cols()));
  ad::Node* qp = tape.matmul(q, w_q);
  ad::Node* k = tape.matmul(a_e, w_k);
  ad::Node* v = tape.matmul(a_e, w_v);
  return embed::multi_head_attention(tape, qp, k, v, num_heads, nullptr, head_weights);
}

namespace {

// O = g (.) A_t + (1 - g) (.) A_et
ad::Node* gated_mix(ad::Tape& tape, ad::Node* gate, ad::Node* a_t, ad::Node* a_et) {
  ad::Node* ones = tape.constant(Matrix(gate->rows(), gate->cols(), 1.0));
  return tape.add(tape.mul(gate, a_t), tape.mul(tape.sub(ones, gate), a_et));
}

ad::Node* attention_based_fuse(ad::Tape& tape, const FusionContext& ctx, ad::Node* a_t,
                               ad::Node* a_et) {
  std::size_t d = a_t->cols();
  int heads = ctx.attn_heads;
  if (d % static_cast<std::size_t>(heads) != 0)
    throw std::invalid_argument("attention_based fusion: dim not divisible by heads");
  std::size_t dk = d / static_cast<std::size_t>(heads);
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  ad::Node* q = tape.matmul(a_t, ctx.attn_wq);
  ad::Node* k_tok = tape.matmul(a_t, ctx.attn_wk);
  ad::Node* k_ent = tape.matmul(a_et, ctx.attn_wk);
  ad::Node* v_tok = tape.matmul(a_t, ctx.attn_wv);
  ad::Node* v_ent = tape.matmul(a_et, ctx.attn_wv);
  ad::Node* out = nullptr;
  for (int h = 0; h < heads; ++h) {
    std::size_t first = static_cast<std::size_t>(h) * dk;
    ad::Node* qh = tape.slice_cols(q, first, dk);
    ad::Node* lt = tape.scale(tape.row_sum(tape.mul(qh, tape.slice_cols(k_tok, first, dk))),
                              inv_sqrt_dk);
    ad::Node* le = tape.scale(tape.row_sum(tape.mul(qh, tape.slice_cols(k_ent, first, dk))),
                              inv_sqrt_dk);
    ad::Node* weights = tape.softmax_rows(tape.concat_cols(lt, le));
    ad::Node* w_tok = tape.slice_cols(weights, 0, 1);
    ad::Node* w_ent = tape.slice_cols(weights, 1, 1);
    ad::Node* mixed = tape.add(tape.mul_colvec(tape.slice_cols(v_tok, first, dk), w_tok),
                               tape.mul_colvec(tape.slice_cols(v_ent, first, dk), w_ent));
    out = (out == nullptr) ? mixed : tape.concat_cols(out, mixed);
  }
  return out;
}

}  // namespace

PathwayOutput fuse(ad::Tape& tape, const FusionContext& ctx, ad::Node* a_t, ad::Node* a_et) {
  if (!a_t->value.same_shape(a_et->value))
    throw std::invalid_argument("fuse: pathway shape mismatch");
  PathwayOutput out;
  out.token_pathway = a_t;
  out.entity_pathway = a_et;
  switch (ctx.kind) {
    case FusionKind::learned_sigmoid: {
      ad::Node* z = tape.matmul(tape.concat_cols(a_t, a_et), ctx.w_f);
      out.gate = tape.sigmoid(tape.layer_norm_rows(z, ctx.ln_gain, ctx.ln_bias));
      out.fused = gated_mix(tape, out.gate, a_t, a_et);
      break;
    }
    case FusionKind::learned_tanh: {
      ad::Node* z = tape.matmul(tape.concat_cols(a_t, a_et), ctx.w_f);
      ad::Node* t = tape.tanh_act(tape.layer_norm_rows(z, ctx.ln_gain, ctx.ln_bias));
      ad::Node* ones = tape.constant(Matrix(t->rows(), t->cols(), 1.0));
      out.gate = tape.scale(tape.add(t, ones), 0.5);
      out.fused = gated_mix(tape, out.gate, a_t, a_et);
      break;
    }
    case FusionKind::gated_gelu: {
      ad::Node* h = tape.gelu(tape.add_rowvec(
          tape.matmul(tape.concat_cols(a_t, a_et), ctx.gate_w1), ctx.gate_b1));
      if (ctx.training && ctx.dropout > 0.0 && ctx.dropout_rng != nullptr)
        h = tape.dropout(h, ctx.dropout, *ctx.dropout_rng);
      out.gate = tape.sigmoid(tape.add_rowvec(tape.matmul(h, ctx.gate_w2), ctx.gate_b2));
      out.fused = gated_mix(tape, out.gate, a_t, a_et);
      break;
    }
    case FusionKind::additive:
      out.fused = tape.layer_norm_rows(tape.add(a_t, a_et), ctx.ln_gain, ctx.ln_bias);
      break;
    case FusionKind::equal_weighting:
      out.gate = tape.constant(Matrix(a_t->rows(), a_t->cols(), 0.5));
      out.fused = tape.scale(tape.add(a_t, a_et), 0.5);
      break;
    case FusionKind::hard_switch:
      out.gate = tape.constant(Matrix(a_t->rows(), a_t->cols(), ctx.entity_active ? 0.0 : 1.0));
      out.fused = ctx.entity_active ? a_et : a_t;
      break;
    case FusionKind::attention_based:
      out.fused = attention_based_fuse(tape, ctx, a_t, a_et);
      break;
  }
  return out;
}

RegentModel::RegentModel(RegentConfig config, int vocab_size, std::uint64_t seed)
    : config_(std::move(config)), vocab_size_(vocab_size) {
  config_.validate();
  register_params(seed);
}

void RegentModel::register_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t d = static_cast<std::size_t>(config_.hidden_dim());
  std::size_t d_e = static_cast<std::size_t>(config_.entity_dim);
  std::size_t d_ff = d * static_cast<std::size_t>(config_.ffn_mult);

  embed::add_encoder_params(params_, config_.encoder, vocab_size_, rng);
  params_.add("bm25_scale", Matrix(1, 1, 0.1));
  params_.add("entity_projection", Matrix::uniform_init(d_e, d, d_e, rng));
  for (int l = 0; l < config_.cross_layers; ++l) {
    std::string lp = "cross" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"})
      params_.add(lp + w, Matrix::uniform_init(d, d, d, rng));
  }
  for (const char* w : {"wq", "wk", "wv"})
    params_.add(std::string("entity_entity.") + w, Matrix::uniform_init(d, d, d, rng));
  for (const char* w : {"wq", "wk", "wv"})
    params_.add(std::string("entity_token.") + w, Matrix::uniform_init(d, d, d, rng));

  switch (config_.fusion) {
    case FusionKind::learned_sigmoid:
    case FusionKind::learned_tanh:
      params_.add("fusion.wf", Matrix::uniform_init(2 * d, d, 2 * d, rng));
      params_.add("fusion.ln_g", Matrix(1, d, 1.0));
      params_.add("fusion.ln_b", Matrix(1, d, 0.0));
      break;
    case FusionKind::additive:
      params_.add("fusion.ln_g", Matrix(1, d, 1.0));
      params_.add("fusion.ln_b", Matrix(1, d, 0.0));
      break;
    case FusionKind::gated_gelu:
      params_.add("fusion.gate_w1", Matrix::uniform_init(2 * d, d, 2 * d, rng));
      params_.add("fusion.gate_b1", Matrix(1, d, 0.0));
      params_.add("fusion.gate_w2", Matrix::uniform_init(d, d, d, rng));
      params_.add("fusion.gate_b2", Matrix(1, d, 0.0));
      break;
    case FusionKind::attention_based:
      params_.add("fusion.attn_wq", Matrix::uniform_init(d, d, d, rng));
      params_.add("fusion.attn_wk", Matrix::uniform_init(d, d, d, rng));
      params_.add("fusion.attn_wv", Matrix::uniform_init(d, d, d, rng));
      break;
    case FusionKind::equal_weighting:
    case FusionKind::hard_switch:
      break;
  }

  params_.add("ffn.w1", Matrix::uniform_init(d, d_ff, d, rng));
  params_.add("ffn.b1", Matrix(1, d_ff, 0.0));
  params_.add("ffn.w2", Matrix::uniform_init(d_ff, d, d_ff, rng));
  params_.add("ffn.b2", Matrix(1, d, 0.0));
  params_.add("ffn.ln_g", Matrix(1, d, 1.0));
  params_.add("ffn.ln_b", Matrix(1, d, 0.0));
  for (int b = 0; b < config_.head_blocks; ++b) {
    std::string bp = "head.b" + std::to_string(b) + ".";
    params_.add(bp + "w", Matrix::uniform_init(d, d, d, rng));
    params_.add(bp + "b", Matrix(1, d, 0.0));
    params_.add(bp + "ln_g", Matrix(1, d, 1.0));
    params_.add(bp + "ln_b", Matrix(1, d, 0.0));
  }
  params_.add("head.out_w", Matrix::uniform_init(d, 1, d, rng));
  params_.add("head.out_b", Matrix(1, 1, 0.0));
  if (config_.flags.document_level_bm25)
    params_.add("score_mix.w", Matrix::uniform_init(1, 2, 2, rng));
}

void RegentModel::check_inputs(const ForwardInputs& in) const {
  std::size_t max_len = static_cast<std::size_t>(config_.max_len());
  if (in.query == nullptr || in.doc == nullptr)
    throw std::invalid_argument("forward: query and doc are required");
  if (in.query->subwords.size() != max_len || in.doc->subwords.size() != max_len)
    throw std::invalid_argument("forward: sequence length does not match model max_len");
  if (!config_.flags.disable_token_bm25) {
    if (in.relevance == nullptr)
      throw std::invalid_argument("forward: relevance vector required unless BM25 is disabled");
    if (in.relevance->scores.size() != max_len)
      throw std::invalid_argument("forward: relevance length does not match max_len");
  }
  for (const entity::ScoredEntitySet* set : {in.query_entities, in.doc_entities}) {
    if (set == nullptr || set->empty()) continue;
    if (set->scaled_embeddings.rows() != set->entity_ids.size() ||
        set->entity_ids.size() != set->scores.size())
      throw std::invalid_argument("forward: inconsistent entity set");
    if (set->scaled_embeddings.cols() != static_cast<std::size_t>(config_.entity_dim))
      throw std::invalid_argument("forward: entity embedding dim does not match model");
  }
}

FusionContext RegentModel::make_fusion_context(ad::Tape& tape, bool entity_active, bool training,
                                               std::mt19937_64* dropout_rng) {
  FusionContext ctx;
  ctx.kind = config_.fusion;
  ctx.entity_active = entity_active;
  ctx.dropout = config_.dropout;
  ctx.training = training;
  ctx.dropout_rng = dropout_rng;
  ctx.attn_heads = 2;
  switch (config_.fusion) {
    case FusionKind::learned_sigmoid:
    case FusionKind::learned_tanh:
      ctx.w_f = tape.param(params_.at("fusion.wf"));
      ctx.ln_gain = tape.param(params_.at("fusion.ln_g"));
      ctx.ln_bias = tape.param(params_.at("fusion.ln_b"));
      break;
    case FusionKind::additive:
      ctx.ln_gain = tape.param(params_.at("fusion.ln_g"));
      ctx.ln_bias = tape.param(params_.at("fusion.ln_b"));
      break;
    case FusionKind::gated_gelu:
      ctx.gate_w1 = tape.param(params_.at("fusion.gate_w1"));
      ctx.gate_b1 = tape.param(params_.at("fusion.gate_b1"));
      ctx.gate_w2 = tape.param(params_.at("fusion.gate_w2"));
      ctx.gate_b2 = tape.param(params_.at("fusion.gate_b2"));
      break;
    case FusionKind::attention_based:
      ctx.attn_wq = tape.param(params_.at("fusion.attn_wq"));
      ctx.attn_wk = tape.param(params_.at("fusion.attn_wk"));
      ctx.attn_wv = tape.param(params_.at("fusion.attn_wv"));
      break;
    default:
      break;
  }
  return ctx;
}

ad::Node* RegentModel::score(ad::Tape& tape, const ForwardInputs& in, bool training,
                             std::mt19937_64* dropout_rng, AttentionTrace* trace) {
  check_inputs(in);
  bool drop = training && config_.dropout > 0.0 && dropout_rng != nullptr;

  ad::Node* h = embed::encode(tape, config_.encoder, params_, *in.query, training, dropout_rng);
  ad::Node* h_doc =
      embed::encode(tape, config_.encoder, params_, *in.doc, training, dropout_rng);
  std::vector<std::uint8_t> doc_mask = in.doc->padding_mask();
  std::vector<std::uint8_t> query_mask = in.query->padding_mask();

  bool entity_active = !config_.flags.disable_entities && in.query_entities != nullptr &&
                       in.doc_entities != nullptr && !in.query_entities->empty() &&
                       !in.doc_entities->empty();
  if (trace != nullptr) trace->entity_pathway_active = entity_active;

  ad::Node* a_e = nullptr;
  std::vector<Matrix> ee_weights;
  if (entity_active) {
    ad::Node* w_p = tape.param(params_.at("entity_projection"));
    ad::Node* e_q = tape.matmul(tape.constant(in.query_entities->scaled_embeddings), w_p);
    ad::Node* e_d = tape.matmul(tape.constant(in.doc_entities->scaled_embeddings), w_p);
    a_e = entity_entity_attention(tape, e_q, e_d, tape.param(params_.at("entity_entity.wq")),
                                  tape.param(params_.at("entity_entity.wk")),
                                  tape.param(params_.at("entity_entity.wv")), config_.num_heads,
                                  trace != nullptr ? &ee_weights : nullptr);
  }

  ad::Node* alpha = tape.param(params_.at("bm25_scale"));
  ad::Node* ffn_w1 = tape.param(params_.at("ffn.w1"));
  ad::Node* ffn_b1 = tape.param(params_.at("ffn.b1"));
  ad::Node* ffn_w2 = tape.param(params_.at("ffn.w2"));
  ad::Node* ffn_b2 = tape.param(params_.at("ffn.b2"));
  ad::Node* ffn_ln_g = tape.param(params_.at("ffn.ln_g"));
  ad::Node* ffn_ln_b = tape.param(params_.at("ffn.ln_b"));
  ad::Node* et_wq = tape.param(params_.at("entity_token.wq"));
  ad::Node* et_wk = tape.param(params_.at("entity_token.wk"));
  ad::Node* et_wv = tape.param(params_.at("entity_token.wv"));
  FusionContext fusion_ctx = make_fusion_context(tape, entity_active, training, dropout_rng);

  for (int l = 0; l < config_.cross_layers; ++l) {
    std::string lp = "cross" + std::to_string(l) + ".";
    ad::Node* q_t = tape.matmul(h, tape.param(params_.at(lp + "wq")));
    ad::Node* k = tape.matmul(h_doc, tape.param(params_.at(lp + "wk")));
    ad::Node* v = tape.matmul(h_doc, tape.param(params_.at(lp + "wv")));
    if (!config_.flags.disable_token_bm25) {
      EnhancedKv enhanced = enhance_kv(tape, k, v, *in.relevance, alpha);
      k = enhanced.k;
      v = enhanced.v;
    }
    std::vector<Matrix> tok_weights, et_weights;
    ad::Node* a_t =
        token_attention(tape, q_t, k, v, tape.param(params_.at(lp + "wo")), config_.num_heads,
                        doc_mask, trace != nullptr ? &tok_weights : nullptr);
    if (drop) a_t = tape.dropout(a_t, config_.dropout, *dropout_rng);

    ad::Node* a_et = entity_token_attention(tape, h, a_e, et_wq, et_wk, et_wv, config_.num_heads,
                                            trace != nullptr ? &et_weights : nullptr);
    if (drop && entity_active) a_et = tape.dropout(a_et, config_.dropout, *dropout_rng);

    PathwayOutput fused = fuse(tape, fusion_ctx, a_t, a_et);
    ad::Node* f = tape.add_rowvec(tape.matmul(fused.fused, ffn_w1), ffn_b1);
    f = tape.gelu(f);
    f = tape.add_rowvec(tape.matmul(f, ffn_w2), ffn_b2);
    if (drop) f = tape.dropout(f, config_.dropout, *dropout_rng);
    h = tape.layer_norm_rows(tape.add(fused.fused, f), ffn_ln_g, ffn_ln_b);

    if (trace != nullptr) {
      AttentionTrace::Layer layer;
      layer.token = std::move(tok_weights);
      layer.entity_entity = ee_weights;  // shared across layers
      layer.entity_token = std::move(et_weights);
      trace->layers.push_back(std::move(layer));
    }
  }

  ad::Node* x = tape.mean_rows(h, query_mask);
  for (int b = 0; b < config_.head_blocks; ++b) {
    std::string bp = "head.b" + std::to_string(b) + ".";
    ad::Node* z = tape.gelu(tape.add_rowvec(tape.matmul(x, tape.param(params_.at(bp + "w"))),
                                            tape.param(params_.at(bp + "b"))));
    x = tape.layer_norm_rows(tape.add(x, z), tape.param(params_.at(bp + "ln_g")),
                             tape.param(params_.at(bp + "ln_b")));
  }
  ad::Node* s = tape.add_rowvec(tape.matmul(x, tape.param(params_.at("head.out_w"))),
                                tape.param(params_.at("head.out_b")));
  if (config_.flags.document_level_bm25) {
    ad::Node* pair = tape.concat_cols(s, tape.constant(Matrix(1, 1, in.doc_bm25)));
    s = tape.row_sum(tape.mul(pair, tape.param(params_.at("score_mix.w"))));
  }
  return s;
}

double RegentModel::forward(const ForwardInputs& in, AttentionTrace* trace) {
  ad::Tape tape(false);
  return score(tape, in, false, nullptr, trace)->value(0, 0);
}

void RegentModel::backward(const ForwardInputs& in, double upstream) {
  ad::Tape tape(true);
  ad::Node* s = score(tape, in);
  tape.backward(s, upstream);
}

void RegentModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  binio::put_magic(out, kMagic);
  binio::put_u64(out, 1);
  std::map<std::string, std::string> meta;
  meta["hidden_dim"] = std::to_string(config_.encoder.hidden_dim);
  meta["enc_layers"] = std::to_string(config_.encoder.num_layers);
  meta["enc_heads"] = std::to_string(config_.encoder.num_heads);
  meta["max_len"] = std::to_string(config_.encoder.max_len);
  meta["enc_mode"] =
      config_.encoder.mode == embed::EncoderMode::frozen_lookup ? "frozen_lookup"
                                                                : "trainable_transformer";
  meta["cross_layers"] = std::to_string(config_.cross_layers);
  meta["num_heads"] = std::to_string(config_.num_heads);
  meta["entity_dim"] = std::to_string(config_.entity_dim);
  meta["ffn_mult"] = std::to_string(config_.ffn_mult);
  meta["head_blocks"] = std::to_string(config_.head_blocks);
  meta["dropout"] = std::to_string(config_.dropout);
  meta["fusion"] = to_string(config_.fusion);
  meta["disable_entities"] = config_.flags.disable_entities ? "1" : "0";
  meta["disable_token_bm25"] = config_.flags.disable_token_bm25 ? "1" : "0";
  meta["document_level_bm25"] = config_.flags.document_level_bm25 ? "1" : "0";
  meta["vocab_size"] = std::to_string(vocab_size_);
  binio::put_u64(out, meta.size());
  for (const auto& [k, v] : meta) {
    binio::put_string(out, k);
    binio::put_string(out, v);
  }
  binio::put_u64(out, params_.count());
  for (std::size_t i = 0; i < params_.count(); ++i) {
    const ad::Parameter& p = params_[i];
    binio::put_string(out, p.name);
    binio::put_u64(out, p.value.rows());
    binio::put_u64(out, p.value.cols());
    for (std::size_t r = 0; r < p.value.rows(); ++r)
      for (std::size_t c = 0; c < p.value.cols(); ++c) binio::put_f64(out, p.value(r, c));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

RegentModel RegentModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  binio::check_magic(in, kMagic, "checkpoint");
  if (binio::get_u64(in) != 1) throw std::runtime_error("unsupported checkpoint version");
  std::map<std::string, std::string> meta;
  std::uint64_t n_meta = binio::get_u64(in);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = binio::get_string(in);
    meta[k] = binio::get_string(in);
  }
  auto req = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("checkpoint missing meta key: " + key);
    return it->second;
  };
  RegentConfig config;
  config.encoder.hidden_dim = std::stoi(req("hidden_dim"));
  config.encoder.num_layers = std::stoi(req("enc_layers"));
  config.encoder.num_heads = std::stoi(req("enc_heads"));
  config.encoder.max_len = std::stoi(req("max_len"));
  config.encoder.mode = req("enc_mode") == "frozen_lookup"
                            ? embed::EncoderMode::frozen_lookup
                            : embed::EncoderMode::trainable_transformer;
  config.cross_layers = std::stoi(req("cross_layers"));
  config.num_heads = std::stoi(req("num_heads"));
  config.entity_dim = std::stoi(req("entity_dim"));
  config.ffn_mult = std::stoi(req("ffn_mult"));
  config.head_blocks = std::stoi(req("head_blocks"));
  config.dropout = std::stod(req("dropout"));
  config.fusion = fusion_from_string(req("fusion"));
  config.flags.disable_entities = req("disable_entities") == "1";
  config.flags.disable_token_bm25 = req("disable_token_bm25") == "1";
  config.flags.document_level_bm25 = req("document_level_bm25") == "1";
  int vocab_size = std::stoi(req("vocab_size"));

  RegentModel model(config, vocab_size, 0);
  std::uint64_t n_tensors = binio::get_u64(in);
  if (n_tensors != model.params_.count())
    throw std::runtime_error("checkpoint tensor count does not match configuration");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = binio::get_string(in);
    std::size_t rows = binio::get_u64(in);
    std::size_t cols = binio::get_u64(in);
    ad::Parameter& p = model.params_.at(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) p.value(r, c) = binio::get_f64(in);
  }
  return model;
}

}  // namespace regent::model
