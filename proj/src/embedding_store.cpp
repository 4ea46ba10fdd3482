#include "regent/embedding_store.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace regent::embed {

void EncoderConfig::validate() const {
  if (hidden_dim <= 0 || max_len < 2 || num_layers < 0 || num_heads <= 0)
    throw std::invalid_argument("encoder config: non-positive dimension");
  if (hidden_dim % num_heads != 0)
    throw std::invalid_argument("encoder config: hidden_dim must be divisible by num_heads");
}

ad::Node* multi_head_attention(ad::Tape& tape, ad::Node* q, ad::Node* k, ad::Node* v,
                               int num_heads, const std::vector<std::uint8_t>* key_mask,
                               std::vector<Matrix>* head_weights) {
  if (q->cols() != k->cols() || k->cols() != v->cols() || k->rows() != v->rows())
    throw std::invalid_argument("multi_head_attention: inconsistent shapes");
  std::size_t d = q->cols();
  if (d % static_cast<std::size_t>(num_heads) != 0)
    throw std::invalid_argument("multi_head_attention: dim not divisible by heads");
  std::size_t dk = d / static_cast<std::size_t>(num_heads);
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  ad::Node* out = nullptr;
  for (int h = 0; h < num_heads; ++h) {
    std::size_t first = static_cast<std::size_t>(h) * dk;
    ad::Node* qh = tape.slice_cols(q, first, dk);
    ad::Node* kh = tape.slice_cols(k, first, dk);
    ad::Node* vh = tape.slice_cols(v, first, dk);
    ad::Node* logits = tape.scale(tape.matmul(qh, kh, false, true), inv_sqrt_dk);
    ad::Node* weights = tape.softmax_rows(logits, key_mask);
    if (head_weights != nullptr) head_weights->push_back(weights->value);
    ad::Node* ctx = tape.matmul(weights, vh);
    out = (out == nullptr) ? ctx : tape.concat_cols(out, ctx);
  }
  return out;
}

void add_encoder_params(ad::ParamSet& params, const EncoderConfig& config, int vocab_size,
                        std::mt19937_64& rng, const std::string& prefix) {
  config.validate();
  if (vocab_size <= 0) throw std::invalid_argument("add_encoder_params: empty vocab");
  std::size_t d = static_cast<std::size_t>(config.hidden_dim);
  bool trainable = config.mode == EncoderMode::trainable_transformer;
  params.add(prefix + "tok_emb",
             Matrix::uniform_init(static_cast<std::size_t>(vocab_size), d, d, rng), trainable);
  if (config.mode == EncoderMode::frozen_lookup) return;
  params.add(prefix + "pos_emb",
             Matrix::uniform_init(static_cast<std::size_t>(config.max_len), d, d, rng));
  std::size_t d_ff = 4 * d;
  for (int l = 0; l < config.num_layers; ++l) {
    std::string lp = prefix + "l" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"})
      params.add(lp + w, Matrix::uniform_init(d, d, d, rng));
    params.add(lp + "ln1_g", Matrix(1, d, 1.0));
    params.add(lp + "ln1_b", Matrix(1, d, 0.0));
    params.add(lp + "ffn_w1", Matrix::uniform_init(d, d_ff, d, rng));
    params.add(lp + "ffn_b1", Matrix(1, d_ff, 0.0));
    params.add(lp + "ffn_w2", Matrix::uniform_init(d_ff, d, d_ff, rng));
    params.add(lp + "ffn_b2", Matrix(1, d, 0.0));
    params.add(lp + "ln2_g", Matrix(1, d, 1.0));
    params.add(lp + "ln2_b", Matrix(1, d, 0.0));
  }
}

ad::Node* encode(ad::Tape& tape, const EncoderConfig& config, ad::ParamSet& params,
                 const text::AnalyzedDocument& doc, bool training,
                 std::mt19937_64* dropout_rng, const std::string& prefix) {
  config.validate();
  if (doc.subwords.size() != static_cast<std::size_t>(config.max_len))
    throw std::invalid_argument("encode: document length does not match encoder max_len");
  ad::Node* tok_emb = tape.param(params.at(prefix + "tok_emb"));
  for (int id : doc.subwords)
    if (id < 0 || static_cast<std::size_t>(id) >= tok_emb->rows())
      throw std::out_of_range("encode: token id outside vocabulary");
  ad::Node* x = tape.gather_rows(tok_emb, doc.subwords);
  if (config.mode == EncoderMode::frozen_lookup) return x;

  ad::Node* x0 = tape.add(x, tape.param(params.at(prefix + "pos_emb")));
  std::vector<std::uint8_t> mask = doc.padding_mask();
  bool drop = training && config.dropout > 0.0 && dropout_rng != nullptr;

  ad::Node* h = x0;
  for (int l = 0; l < config.num_layers; ++l) {
    std::string lp = prefix + "l" + std::to_string(l) + ".";
    ad::Node* q = tape.matmul(h, tape.param(params.at(lp + "wq")));
    ad::Node* k = tape.matmul(h, tape.param(params.at(lp + "wk")));
    ad::Node* v = tape.matmul(h, tape.param(params.at(lp + "wv")));
    ad::Node* attn = multi_head_attention(tape, q, k, v, config.num_heads, &mask);
    attn = tape.matmul(attn, tape.param(params.at(lp + "wo")));
    if (drop) attn = tape.dropout(attn, config.dropout, *dropout_rng);
    h = tape.layer_norm_rows(tape.add(h, attn), tape.param(params.at(lp + "ln1_g")),
                             tape.param(params.at(lp + "ln1_b")));
    ad::Node* f = tape.add_rowvec(tape.matmul(h, tape.param(params.at(lp + "ffn_w1"))),
                                  tape.param(params.at(lp + "ffn_b1")));
    f = tape.gelu(f);
    f = tape.add_rowvec(tape.matmul(f, tape.param(params.at(lp + "ffn_w2"))),
                        tape.param(params.at(lp + "ffn_b2")));
    if (drop) f = tape.dropout(f, config.dropout, *dropout_rng);
    h = tape.layer_norm_rows(tape.add(h, f), tape.param(params.at(lp + "ln2_g")),
                             tape.param(params.at(lp + "ln2_b")));
  }
  if (config.num_layers == 0) return x0;
  return tape.where_rows(mask, h, x0);
}

const std::vector<double>& EntityEmbeddingTable::at(const std::string& entity_id) const {
  auto it = entries.find(entity_id);
  if (it == entries.end()) throw std::out_of_range("unknown entity id: " + entity_id);
  return it->second;
}

EntityEmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty embedding file");
  std::istringstream header(line);
  long long count = -1, dim = -1;
  if (!(header >> count >> dim) || count < 0 || dim <= 0)
    throw std::runtime_error(path + ":1: malformed header, expected \"count dim\"");
  EntityEmbeddingTable table;
  table.dim = static_cast<std::size_t>(dim);
  long long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id;
    row >> id;
    std::vector<double> vec;
    vec.reserve(table.dim);
    double v;
    while (row >> v) vec.push_back(v);
    if (vec.size() != table.dim)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " values, got " +
                               std::to_string(vec.size()));
    table.entries.emplace(std::move(id), std::move(vec));
  }
  if (static_cast<long long>(table.entries.size()) != count)
    throw std::runtime_error(path + ": header count " + std::to_string(count) +
                             " does not match " + std::to_string(table.entries.size()) +
                             " entries");
  return table;
}

Matrix gather_entities(const EntityEmbeddingTable& table, const std::vector<std::string>& ids) {
  std::string missing;
  for (const std::string& id : ids)
    if (!table.contains(id)) missing += (missing.empty() ? "" : ", ") + id;
  if (!missing.empty()) throw std::out_of_range("missing entity embeddings: " + missing);
  Matrix m(ids.size(), table.dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::vector<double>& vec = table.at(ids[i]);
    for (std::size_t j = 0; j < table.dim; ++j) m(i, j) = vec[j];
  }
  return m;
}

Matrix project_entities(const EntityEmbeddingTable& table, const std::vector<std::string>& ids,
                        const Matrix& w_p) {
  if (w_p.rows() != table.dim)
    throw std::invalid_argument("project_entities: projection rows must equal embedding dim");
  return matmul(gather_entities(table, ids), w_p);
}

}  // namespace regent::embed
