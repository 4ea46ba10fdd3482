#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <cstdio>
#include <random>

#include "fd_check.hpp"
#include "regent/model.hpp"
#include "tiny_fixture.hpp"

using namespace regent;
using namespace regent::model;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

// Straight-line single-matrix attention oracle (one head slice).
Matrix attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v,
                        const std::vector<std::uint8_t>* mask) {
  std::size_t n = q.rows(), m = k.rows(), d = q.cols();
  double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix out(n, v.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(m, -1e300);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask != nullptr && !(*mask)[j]) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      logits[j] = dot * scale;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    std::vector<double> w(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (mask != nullptr && !(*mask)[j]) continue;
      w[j] = std::exp(logits[j] - mx);
      denom += w[j];
    }
    for (std::size_t j = 0; j < m; ++j) w[j] /= denom;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += w[j] * v(j, c);
  }
  return out;
}

}  // namespace

TEST_CASE("enhance_kv arithmetic") {
  ad::Tape tape(false);
  lexical::TokenRelevanceVector r;

  SUBCASE("alpha zero and zero relevance are both identities") {
    Matrix k = random_matrix(3, 4, 1), v = random_matrix(3, 4, 2);
    r.scores = {0.5, 0.0, 2.0};
    ad::Node* kn = tape.constant(k);
    ad::Node* vn = tape.constant(v);
    auto zero_alpha = enhance_kv(tape, kn, vn, r, tape.constant(Matrix(1, 1, 0.0)));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(zero_alpha.k->value(i, j) == k(i, j));
        CHECK(zero_alpha.v->value(i, j) == v(i, j));
      }
    lexical::TokenRelevanceVector zero_r;
    zero_r.scores = {0.0, 0.0, 0.0};
    auto zr = enhance_kv(tape, kn, vn, zero_r, tape.constant(Matrix(1, 1, 0.7)));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(zr.k->value(i, j) == k(i, j));
  }

  SUBCASE("single element example") {
    r.scores = {0.5};
    auto out = enhance_kv(tape, tape.constant(Matrix(1, 1, 1.0)), tape.constant(Matrix(1, 1, 2.0)),
                          r, tape.constant(Matrix(1, 1, 1.0)));
    CHECK(out.k->value(0, 0) == doctest::Approx(1.5));
    CHECK(out.v->value(0, 0) == doctest::Approx(2.5));
  }

  SUBCASE("length mismatch is an error") {
    r.scores = {1.0, 2.0};
    ad::Node* kn = tape.constant(Matrix(3, 2, 0.0));
    CHECK_THROWS_AS(enhance_kv(tape, kn, kn, r, tape.constant(Matrix(1, 1, 1.0))),
                    std::invalid_argument);
  }
}

TEST_CASE("token attention: single unmasked key gets weight one") {
  ad::Tape tape(false);
  Matrix q = random_matrix(3, 4, 3), k = random_matrix(2, 4, 4), v = random_matrix(2, 4, 5);
  Matrix identity(4, 4);
  for (std::size_t i = 0; i < 4; ++i) identity(i, i) = 1.0;
  std::vector<std::uint8_t> mask = {0, 1};
  std::vector<Matrix> weights;
  ad::Node* out = token_attention(tape, tape.constant(q), tape.constant(k), tape.constant(v),
                                  tape.constant(identity), 2, mask, &weights);
  for (const Matrix& w : weights)
    for (std::size_t i = 0; i < w.rows(); ++i) {
      CHECK(w(i, 0) == 0.0);
      CHECK(w(i, 1) == doctest::Approx(1.0));
    }
  // with identity output projection, each row equals the surviving value row
  for (std::size_t i = 0; i < out->rows(); ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(out->value(i, j) == doctest::Approx(v(1, j)).epsilon(1e-12));
}

TEST_CASE("token attention: two identical keys split the weight evenly") {
  ad::Tape tape(false);
  Matrix q = random_matrix(2, 4, 6);
  Matrix k(2, 4), v(2, 4);
  Matrix base_k = random_matrix(1, 4, 7), base_v = random_matrix(1, 4, 8);
  for (std::size_t j = 0; j < 4; ++j) {
    k(0, j) = k(1, j) = base_k(0, j);
    v(0, j) = base_v(0, j);
    v(1, j) = base_v(0, j) + 1.0;
  }
  Matrix identity(4, 4);
  for (std::size_t i = 0; i < 4; ++i) identity(i, i) = 1.0;
  std::vector<std::uint8_t> mask = {1, 1};
  std::vector<Matrix> weights;
  token_attention(tape, tape.constant(q), tape.constant(k), tape.constant(v),
                  tape.constant(identity), 2, mask, &weights);
  for (const Matrix& w : weights)
    for (std::size_t i = 0; i < w.rows(); ++i) {
      CHECK(w(i, 0) == doctest::Approx(0.5));
      CHECK(w(i, 1) == doctest::Approx(0.5));
    }
}

TEST_CASE("single-head attention matches the brute-force oracle to 1e-10") {
  ad::Tape tape(false);
  Matrix q = random_matrix(3, 4, 9, 2.0), k = random_matrix(5, 4, 10, 2.0),
         v = random_matrix(5, 4, 11, 2.0);
  std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1};
  ad::Node* got = embed::multi_head_attention(tape, tape.constant(q), tape.constant(k),
                                              tape.constant(v), 1, &mask);
  Matrix want = attention_oracle(q, k, v, &mask);
  for (std::size_t i = 0; i < want.rows(); ++i)
    for (std::size_t j = 0; j < want.cols(); ++j)
      CHECK(std::fabs(got->value(i, j) - want(i, j)) < 1e-10);
}

TEST_CASE("multi-head attention equals per-slice oracles concatenated") {
  ad::Tape tape(false);
  Matrix q = random_matrix(3, 8, 12), k = random_matrix(4, 8, 13), v = random_matrix(4, 8, 14);
  ad::Node* got = embed::multi_head_attention(tape, tape.constant(q), tape.constant(k),
                                              tape.constant(v), 2, nullptr);
  for (int h = 0; h < 2; ++h) {
    std::size_t off = static_cast<std::size_t>(h) * 4;
    Matrix qh(3, 4), kh(4, 4), vh(4, 4);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) qh(i, j) = q(i, off + j);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        kh(i, j) = k(i, off + j);
        vh(i, j) = v(i, off + j);
      }
    Matrix want = attention_oracle(qh, kh, vh, nullptr);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::fabs(got->value(i, off + j) - want(i, j)) < 1e-10);
  }
}

TEST_CASE("entity attention handles empty sets via the sentinel") {
  ad::Tape tape(false);
  Matrix w = random_matrix(4, 4, 15);
  ad::Node* wq = tape.constant(w);
  CHECK(entity_entity_attention(tape, nullptr, nullptr, wq, wq, wq, 2) == nullptr);
  ad::Node* eq = tape.constant(random_matrix(2, 4, 16));
  ad::Node* empty = tape.constant(Matrix(0, 4));
  CHECK(entity_entity_attention(tape, eq, empty, wq, wq, wq, 2) == nullptr);
  CHECK(entity_entity_attention(tape, empty, eq, wq, wq, wq, 2) == nullptr);

  ad::Node* q = tape.constant(random_matrix(3, 4, 17));
  ad::Node* a_et = entity_token_attention(tape, q, nullptr, wq, wq, wq, 2);
  REQUIRE(a_et->rows() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(a_et->value(i, j) == 0.0);
}

TEST_CASE("entity-entity attention with one document entity attends fully to it") {
  ad::Tape tape(false);
  Matrix w = random_matrix(4, 4, 18);
  ad::Node* wq = tape.constant(random_matrix(4, 4, 19));
  ad::Node* wk = tape.constant(random_matrix(4, 4, 20));
  ad::Node* wv = tape.constant(w);
  ad::Node* eq = tape.constant(random_matrix(3, 4, 21));
  Matrix ed_m = random_matrix(1, 4, 22);
  ad::Node* ed = tape.constant(ed_m);
  std::vector<Matrix> weights;
  ad::Node* a_e = entity_entity_attention(tape, eq, ed, wq, wk, wv, 2, &weights);
  for (const Matrix& wm : weights)
    for (std::size_t i = 0; i < wm.rows(); ++i) CHECK(wm(i, 0) == doctest::Approx(1.0));
  Matrix projected = regent::matmul(ed_m, w);
  for (std::size_t i = 0; i < a_e->rows(); ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(a_e->value(i, j) == doctest::Approx(projected(0, j)).epsilon(1e-12));
}

TEST_CASE("entity-token attention with a single entity row broadcasts its projection") {
  ad::Tape tape(false);
  ad::Node* q = tape.constant(random_matrix(5, 4, 23));
  Matrix ae_m = random_matrix(1, 4, 24);
  Matrix wv_m = random_matrix(4, 4, 25);
  ad::Node* a_et = entity_token_attention(tape, q, tape.constant(ae_m),
                                          tape.constant(random_matrix(4, 4, 26)),
                                          tape.constant(random_matrix(4, 4, 27)),
                                          tape.constant(wv_m), 2);
  Matrix projected = regent::matmul(ae_m, wv_m);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(a_et->value(i, j) == doctest::Approx(projected(0, j)).epsilon(1e-12));
}

namespace {

FusionContext make_ctx(ad::Tape& tape, FusionKind kind, std::size_t d, bool entity_active) {
  FusionContext ctx;
  ctx.kind = kind;
  ctx.entity_active = entity_active;
  ctx.w_f = tape.constant(random_matrix(2 * d, d, 31, 0.5));
  ctx.ln_gain = tape.constant(Matrix(1, d, 1.0));
  ctx.ln_bias = tape.constant(Matrix(1, d, 0.0));
  ctx.gate_w1 = tape.constant(random_matrix(2 * d, d, 32, 0.5));
  ctx.gate_b1 = tape.constant(Matrix(1, d, 0.1));
  ctx.gate_w2 = tape.constant(random_matrix(d, d, 33, 0.5));
  ctx.gate_b2 = tape.constant(Matrix(1, d, -0.1));
  ctx.attn_wq = tape.constant(random_matrix(d, d, 34, 0.5));
  ctx.attn_wk = tape.constant(random_matrix(d, d, 35, 0.5));
  ctx.attn_wv = tape.constant(random_matrix(d, d, 36, 0.5));
  return ctx;
}

}  // namespace

TEST_CASE("fuse: equal pathways collapse to the shared value for gated kinds") {
  ad::Tape tape(false);
  Matrix x = random_matrix(3, 8, 30);
  for (FusionKind kind : {FusionKind::learned_sigmoid, FusionKind::learned_tanh,
                          FusionKind::gated_gelu, FusionKind::equal_weighting,
                          FusionKind::hard_switch}) {
    CAPTURE(to_string(kind));
    FusionContext ctx = make_ctx(tape, kind, 8, true);
    PathwayOutput out = fuse(tape, ctx, tape.constant(x), tape.constant(x));
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        CHECK(out.fused->value(i, j) == doctest::Approx(x(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("fuse: equal weighting averages, 2x vs x gives 1.5x") {
  ad::Tape tape(false);
  Matrix x = random_matrix(3, 8, 37);
  Matrix doubled = x;
  doubled.scale_inplace(2.0);
  FusionContext ctx = make_ctx(tape, FusionKind::equal_weighting, 8, true);
  PathwayOutput out = fuse(tape, ctx, tape.constant(doubled), tape.constant(x));
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      CHECK(out.fused->value(i, j) == doctest::Approx(1.5 * x(i, j)).epsilon(1e-12));
}

TEST_CASE("fuse: hard switch picks the entity pathway iff entities are present") {
  ad::Tape tape(false);
  Matrix a = random_matrix(2, 8, 38), b = random_matrix(2, 8, 39);
  FusionContext with = make_ctx(tape, FusionKind::hard_switch, 8, true);
  FusionContext without = make_ctx(tape, FusionKind::hard_switch, 8, false);
  CHECK(fuse(tape, with, tape.constant(a), tape.constant(b)).fused->value(0, 0) ==
        doctest::Approx(b(0, 0)));
  CHECK(fuse(tape, without, tape.constant(a), tape.constant(b)).fused->value(0, 0) ==
        doctest::Approx(a(0, 0)));
}

TEST_CASE("fuse: sigmoid gate lies strictly inside (0,1) over 1000 random draws") {
  ad::Tape tape(false);
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  FusionContext ctx = make_ctx(tape, FusionKind::learned_sigmoid, 8, true);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix a(2, 8), b(2, 8);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        a(i, j) = dist(rng);
        b(i, j) = dist(rng);
      }
    PathwayOutput out = fuse(tape, ctx, tape.constant(a), tape.constant(b));
    REQUIRE(out.gate != nullptr);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(out.gate->value(i, j) > 0.0);
        CHECK(out.gate->value(i, j) < 1.0);
      }
  }
}

TEST_CASE("fuse: gate identity fused == g*At + (1-g)*Aet for gated kinds") {
  ad::Tape tape(false);
  Matrix a = random_matrix(3, 8, 41), b = random_matrix(3, 8, 42);
  for (FusionKind kind :
       {FusionKind::learned_sigmoid, FusionKind::learned_tanh, FusionKind::gated_gelu,
        FusionKind::equal_weighting, FusionKind::hard_switch}) {
    CAPTURE(to_string(kind));
    FusionContext ctx = make_ctx(tape, kind, 8, true);
    PathwayOutput out = fuse(tape, ctx, tape.constant(a), tape.constant(b));
    REQUIRE(out.gate != nullptr);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        double g = out.gate->value(i, j);
        double expect = g * a(i, j) + (1.0 - g) * b(i, j);
        CHECK(out.fused->value(i, j) == doctest::Approx(expect).epsilon(1e-12));
      }
  }
}

TEST_CASE("forward is deterministic with dropout disabled") {
  auto fixture = tiny::make(FusionKind::learned_sigmoid);
  RegentModel model(fixture.config, fixture.vocab_size, 77);
  double s1 = model.forward(fixture.inputs());
  double s2 = model.forward(fixture.inputs());
  CHECK(s1 == s2);  // bitwise
}

TEST_CASE("ablation isolation: disabled pathways ignore their inputs") {
  AblationFlags flags;
  flags.disable_entities = true;
  flags.disable_token_bm25 = true;
  auto fixture = tiny::make(FusionKind::learned_sigmoid, flags);
  RegentModel model(fixture.config, fixture.vocab_size, 78);
  double base = model.forward(fixture.inputs());

  auto perturbed = fixture;
  perturbed.relevance.scores.assign(perturbed.relevance.scores.size(), 9.9);
  perturbed.query_entities = tiny::fixed_entities({"other"}, {1.0}, 4, 99);
  perturbed.doc_entities = tiny::fixed_entities({"other2", "other3"}, {0.2, 0.4}, 4, 100);
  CHECK(model.forward(perturbed.inputs()) == base);

  // with entities enabled the entity inputs do matter
  auto sensitive = tiny::make(FusionKind::learned_sigmoid);
  RegentModel live(sensitive.config, sensitive.vocab_size, 78);
  double live_base = live.forward(sensitive.inputs());
  auto changed = sensitive;
  changed.doc_entities = tiny::fixed_entities({"zz", "yy"}, {0.8, 0.1}, 4, 101);
  CHECK(live.forward(changed.inputs()) != live_base);
}

TEST_CASE("forward accepts every empty/non-empty entity combination") {
  auto fixture = tiny::make(FusionKind::learned_sigmoid);
  RegentModel model(fixture.config, fixture.vocab_size, 79);
  entity::ScoredEntitySet empty;
  for (const entity::ScoredEntitySet* qe : {&fixture.query_entities, &empty})
    for (const entity::ScoredEntitySet* de : {&fixture.doc_entities, &empty}) {
      model::ForwardInputs in = fixture.inputs();
      in.query_entities = qe;
      in.doc_entities = de;
      CHECK(std::isfinite(model.forward(in)));
    }
  model::ForwardInputs null_in = fixture.inputs();
  null_in.query_entities = nullptr;
  null_in.doc_entities = nullptr;
  CHECK(std::isfinite(model.forward(null_in)));
}

TEST_CASE("alpha gradient is exactly zero when token BM25 is disabled") {
  AblationFlags flags;
  flags.disable_token_bm25 = true;
  auto fixture = tiny::make(FusionKind::learned_sigmoid, flags);
  RegentModel model(fixture.config, fixture.vocab_size, 80);
  model.params().zero_grad();
  model.backward(fixture.inputs());
  const Matrix& g = model.params().at("bm25_scale").grad;
  CHECK(g(0, 0) == 0.0);
}

TEST_CASE("all gradients are finite on the tiny fixture") {
  auto fixture = tiny::make(FusionKind::gated_gelu);
  RegentModel model(fixture.config, fixture.vocab_size, 81);
  model.params().zero_grad();
  model.backward(fixture.inputs());
  for (std::size_t p = 0; p < model.params().count(); ++p) {
    const ad::Parameter& param = model.params()[p];
    for (std::size_t i = 0; i < param.grad.size(); ++i)
      CHECK(std::isfinite(param.grad.data()[i]));
  }
}

TEST_CASE("quick finite-difference spot check on the default fusion") {
  auto fixture = tiny::make(FusionKind::learned_sigmoid);
  RegentModel model(fixture.config, fixture.vocab_size, 82);
  auto inputs = fixture.inputs();
  auto build = [&](ad::Tape& tape) { return model.score(tape, inputs); };
  auto report = fdcheck::check_gradients(model.params(), build);
  CAPTURE(report.worst_param);
  CAPTURE(report.max_rel_err);
  CHECK(report.ok);
  CHECK(report.checked == model.params().scalar_count());
}

TEST_CASE("bm25 scale raises the high-relevance key's logit along positive directions") {
  // Single layer, single head: logit_j = q . (k_j + alpha * r_j * 1) / sqrt(d).
  // d(logit_hi - logit_lo)/d(alpha) = (r_hi - r_lo) * sum(q) / sqrt(d) > 0
  // whenever sum(q) > 0 and r_hi > r_lo.
  ad::Tape tape(false);
  std::size_t d = 4;
  Matrix q(1, d);
  for (std::size_t j = 0; j < d; ++j) q(0, j) = 0.3 + 0.1 * static_cast<double>(j);  // sum > 0
  Matrix k = random_matrix(2, d, 50);
  lexical::TokenRelevanceVector r;
  r.scores = {2.0, 0.0};  // key 0 carries relevance, key 1 none
  double prev_margin = -1e300;
  for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
    auto enhanced = enhance_kv(tape, tape.constant(k), tape.constant(k), r,
                               tape.constant(Matrix(1, 1, alpha)));
    ad::Node* logits = tape.scale(tape.matmul(tape.constant(q), enhanced.k, false, true),
                                  1.0 / std::sqrt(static_cast<double>(d)));
    double margin = logits->value(0, 0) - logits->value(0, 1);
    CHECK(margin > prev_margin);
    prev_margin = margin;
  }
}

TEST_CASE("checkpoint round-trips configuration and weights") {
  auto fixture = tiny::make(FusionKind::learned_tanh);
  RegentModel model(fixture.config, fixture.vocab_size, 83);
  double before = model.forward(fixture.inputs());
  std::string path = "test_model_ckpt.bin";
  model.save(path);
  RegentModel loaded = RegentModel::load(path);
  std::remove(path.c_str());
  CHECK(loaded.config().fusion == FusionKind::learned_tanh);
  CHECK(loaded.forward(fixture.inputs()) == before);
}

TEST_CASE("forward validates configuration before computing") {
  auto fixture = tiny::make(FusionKind::learned_sigmoid);
  RegentModel model(fixture.config, fixture.vocab_size, 84);
  auto bad = fixture.inputs();
  lexical::TokenRelevanceVector short_r;
  short_r.scores = {1.0, 2.0};
  bad.relevance = &short_r;
  CHECK_THROWS_AS(model.forward(bad), std::invalid_argument);

  auto bad_entities = fixture.inputs();
  entity::ScoredEntitySet wrong_dim = tiny::fixed_entities({"e"}, {1.0}, 7, 1);
  bad_entities.doc_entities = &wrong_dim;
  CHECK_THROWS_AS(model.forward(bad_entities), std::invalid_argument);
}

TEST_CASE("document-level flag requires the bm25-disable flag") {
  AblationFlags flags;
  flags.document_level_bm25 = true;
  CHECK_THROWS_AS(flags.validate(), std::invalid_argument);
  flags.disable_token_bm25 = true;
  CHECK_NOTHROW(flags.validate());
}

TEST_CASE("document-level variant mixes the neural score with the document score") {
  AblationFlags flags;
  flags.disable_token_bm25 = true;
  flags.document_level_bm25 = true;
  auto fixture = tiny::make(FusionKind::learned_sigmoid, flags);
  RegentModel model(fixture.config, fixture.vocab_size, 85);
  auto in = fixture.inputs();
  double s1 = model.forward(in);
  in.doc_bm25 = fixture.doc_bm25 + 1.0;
  double s2 = model.forward(in);
  const Matrix& w = model.params().at("score_mix.w").value;
  CHECK(s2 - s1 == doctest::Approx(w(0, 1)).epsilon(1e-9));
}
