#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "regent/training.hpp"
#include "tiny_fixture.hpp"

using namespace regent;
using namespace regent::train;

namespace {

eval::Qrels toy_qrels(int positives, const std::string& qid = "q1") {
  eval::Qrels qrels;
  for (int i = 0; i < positives; ++i) qrels.grades[qid]["pos" + std::to_string(i)] = 1;
  qrels.grades[qid]["judged0"] = 0;
  return qrels;
}

eval::RankedRun toy_candidates(int count, const std::string& qid = "q1") {
  eval::RankedRun run;
  for (int i = 0; i < count; ++i)
    run.queries[qid].push_back({"cand" + std::to_string(i), 100.0 - i});
  return run;
}

}  // namespace

TEST_CASE("build_examples balances negatives against positives") {
  eval::Qrels qrels = toy_qrels(3);
  eval::RankedRun candidates = toy_candidates(100);
  auto built = build_examples(qrels, candidates, 7);
  int pos = 0, neg = 0;
  for (const auto& ex : built.examples) {
    if (ex.label == 1) {
      ++pos;
      CHECK(ex.source == ExampleSource::qrels_positive);
    } else {
      ++neg;
      CHECK(ex.source == ExampleSource::bm25_negative);
    }
  }
  CHECK(pos == 3);
  CHECK(neg == 3);
  CHECK(built.warnings.empty());
}

TEST_CASE("build_examples takes all negatives and warns on shortfall") {
  eval::Qrels qrels = toy_qrels(3);
  eval::RankedRun candidates = toy_candidates(2);
  auto built = build_examples(qrels, candidates, 7);
  int neg = 0;
  for (const auto& ex : built.examples) neg += (ex.label == 0);
  CHECK(neg == 2);
  REQUIRE(built.warnings.size() == 1);
  CHECK(built.warnings[0].find("only 2 negatives") != std::string::npos);
}

TEST_CASE("build_examples excludes zero-positive queries with a warning") {
  eval::Qrels qrels;
  qrels.grades["q1"]["d"] = 0;  // judged non-relevant only
  qrels.grades["q2"]["p"] = 1;
  eval::RankedRun candidates = toy_candidates(10, "q2");
  auto built = build_examples(qrels, candidates, 7);
  for (const auto& ex : built.examples) CHECK(ex.query_id == "q2");
  REQUIRE(built.warnings.size() == 1);
  CHECK(built.warnings[0].find("q1") != std::string::npos);
}

TEST_CASE("build_examples never samples judged-relevant docs as negatives") {
  eval::Qrels qrels = toy_qrels(2);
  eval::RankedRun candidates;
  candidates.queries["q1"].push_back({"pos0", 10.0});  // relevant doc in candidates
  candidates.queries["q1"].push_back({"n1", 9.0});
  candidates.queries["q1"].push_back({"n2", 8.0});
  auto built = build_examples(qrels, candidates, 7);
  for (const auto& ex : built.examples)
    if (ex.label == 0) CHECK(ex.doc_id.front() == 'n');
}

TEST_CASE("build_examples is deterministic per seed") {
  eval::Qrels qrels = toy_qrels(5);
  eval::RankedRun candidates = toy_candidates(50);
  auto a = build_examples(qrels, candidates, 1234);
  auto b = build_examples(qrels, candidates, 1234);
  REQUIRE(a.examples.size() == b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i)
    CHECK(a.examples[i].doc_id == b.examples[i].doc_id);
  auto c = build_examples(qrels, candidates, 4321);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.examples.size(); ++i)
    if (a.examples[i].doc_id != c.examples[i].doc_id) any_difference = true;
  CHECK(any_difference);
}

TEST_CASE("lr schedule: linear warmup then constant") {
  OptimizerState state;
  state.base_lr = 2e-5;
  state.warmup_steps = 1000;
  state.step = 500;
  CHECK(lr_schedule(state) == doctest::Approx(1e-5));
  state.step = 1000;
  CHECK(lr_schedule(state) == doctest::Approx(2e-5));
  state.step = 5000;
  CHECK(lr_schedule(state) == doctest::Approx(2e-5));
  state.step = 1;
  CHECK(lr_schedule(state) == doctest::Approx(2e-8));
}

TEST_CASE("gradient clipping caps the global norm") {
  ad::ParamSet params;
  params.add("a", Matrix(2, 2, 0.0));
  params.add("b", Matrix(1, 3, 0.0));
  for (std::size_t i = 0; i < 4; ++i) params.at("a").grad.data()[i] = 3.0;
  for (std::size_t i = 0; i < 3; ++i) params.at("b").grad.data()[i] = -4.0;
  double pre = clip_gradients(params, 1.0);
  CHECK(pre == doctest::Approx(std::sqrt(4 * 9.0 + 3 * 16.0)));
  double post_sq = 0.0;
  for (std::size_t p = 0; p < params.count(); ++p)
    for (std::size_t i = 0; i < params[p].grad.size(); ++i)
      post_sq += params[p].grad.data()[i] * params[p].grad.data()[i];
  CHECK(std::sqrt(post_sq) <= 1.0 + 1e-6);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  ad::ParamSet params;
  params.add("w", Matrix(2, 2, 1.5));
  OptimizerState state = OptimizerState::init(params, 1e-3, 1, 1.0);
  state.step = 1;
  adam_update(params, state, 1e-3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(params.at("w").value.data()[i] == 1.5);
}

TEST_CASE("fold plan partitions queries into non-empty folds") {
  std::vector<std::string> qids;
  for (int i = 0; i < 10; ++i) qids.push_back("q" + std::to_string(i));
  FoldPlan plan = FoldPlan::query_level(qids, 5, 3);
  plan.validate();
  std::set<std::string> seen;
  for (int f = 0; f < 5; ++f) {
    auto fold_queries = plan.queries_in_fold(f);
    CHECK(fold_queries.size() == 2);
    for (const auto& q : fold_queries) CHECK(seen.insert(q).second);
  }
  CHECK(seen.size() == 10);
  CHECK_THROWS_AS(FoldPlan::query_level({"a", "b"}, 5, 3), std::invalid_argument);
}

TEST_CASE("early stopper follows the spec sequence") {
  // [0.2, 0.3, 0.3, 0.25] with patience 2: stop after epoch 4, keep epoch 2
  EarlyStopper stopper{2};
  CHECK(stopper.observe(1, 0.2));
  CHECK(stopper.observe(2, 0.3));
  CHECK(stopper.observe(3, 0.3));        // no strict improvement
  CHECK_FALSE(stopper.observe(4, 0.25));  // patience exhausted
  CHECK(stopper.best_epoch == 2);
  CHECK(stopper.best == doctest::Approx(0.3));
}

namespace {

// Provider over the tiny fixture: "pos*" docs carry relevance mass and a
// doc-entity overlap, "neg*" docs carry neither.
struct ToyProvider : PairProvider {
  tiny::Fixture base = tiny::make(model::FusionKind::learned_sigmoid);
  lexical::TokenRelevanceVector zero;
  entity::ScoredEntitySet no_entities;

  ToyProvider() { zero.scores.assign(base.relevance.scores.size(), 0.0); }

  model::ForwardInputs inputs(const std::string& query_id, const std::string& doc_id) override {
    model::ForwardInputs in = base.inputs();
    if (doc_id.rfind("neg", 0) == 0) {
      in.relevance = &zero;
      in.doc_entities = &no_entities;
    }
    return in;
  }
};

}  // namespace

TEST_CASE("train_step: zeroed head gives the ln 2 loss on label 1") {
  auto fixture = tiny::make(model::FusionKind::learned_sigmoid);
  model::RegentModel model(fixture.config, fixture.vocab_size, 11);
  model.params().at("head.out_w").value.fill(0.0);
  model.params().at("head.out_b").value.fill(0.0);
  ToyProvider provider;
  OptimizerState state = OptimizerState::init(model.params(), 1e-3, 10, 1.0);
  std::mt19937_64 rng(1);
  StepResult result = train_step(model, provider, {{"q1", "pos0", 1}}, state, rng);
  CHECK(result.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(state.step == 1);
}

TEST_CASE("train_step rejects labels outside {0,1}") {
  auto fixture = tiny::make(model::FusionKind::learned_sigmoid);
  model::RegentModel model(fixture.config, fixture.vocab_size, 12);
  ToyProvider provider;
  OptimizerState state = OptimizerState::init(model.params(), 1e-3, 10, 1.0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(train_step(model, provider, {{"q1", "pos0", 2}}, state, rng),
                  std::invalid_argument);
}

TEST_CASE("repeated single example: loss decreases over 50 steps") {
  auto fixture = tiny::make(model::FusionKind::learned_sigmoid);
  model::RegentModel model(fixture.config, fixture.vocab_size, 13);
  ToyProvider provider;
  OptimizerState state = OptimizerState::init(model.params(), 5e-3, 10, 1.0);
  std::mt19937_64 rng(1);
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step)
    losses.push_back(train_step(model, provider, {{"q1", "pos0", 1}}, state, rng).loss);
  CHECK(losses.back() < losses.front());
  CHECK(losses[49] < losses[25]);
  CHECK(losses[25] < losses[0]);
}

TEST_CASE("cross_validate: fold composition, leakage freedom, full coverage") {
  // 10 queries, 5 folds: test 2, validation 2, gradient-training 6 per fold
  eval::Qrels qrels;
  eval::RankedRun candidates;
  std::vector<std::string> qids;
  for (int i = 0; i < 10; ++i) {
    std::string qid = "q" + std::to_string(i);
    qids.push_back(qid);
    qrels.grades[qid]["pos0"] = 1;
    candidates.queries[qid] = {{"pos0", 2.0}, {"neg0", 1.0}};
  }
  FoldPlan plan = FoldPlan::query_level(qids, 5, 9);
  auto data = build_examples(qrels, candidates, 9);
  ToyProvider provider;
  auto fixture = tiny::make(model::FusionKind::learned_sigmoid);
  CrossValConfig config;
  config.epochs = 1;
  config.batch_size = 4;
  config.base_lr = 1e-3;
  config.warmup_steps = 5;
  config.seed = 42;
  auto factory = [&](std::uint64_t seed) {
    return model::RegentModel(fixture.config, fixture.vocab_size, seed);
  };
  CrossValResult result = cross_validate(factory, data, plan, provider, qrels, candidates,
                                         config);
  REQUIRE(result.folds.size() == 5);
  std::set<std::string> covered;
  for (const auto& fold : result.folds) {
    CHECK(fold.test_queries.size() == 2);
    CHECK(fold.val_queries.size() == 2);
    CHECK(fold.train_queries.size() == 6);
    std::set<std::string> train_set(fold.train_queries.begin(), fold.train_queries.end());
    std::set<std::string> val_set(fold.val_queries.begin(), fold.val_queries.end());
    for (const auto& q : fold.test_queries) {
      CHECK(train_set.count(q) == 0);  // leakage freedom
      CHECK(val_set.count(q) == 0);
      CHECK(covered.insert(q).second);  // each query scored exactly once
    }
    CHECK(fold.best_epoch >= 1);
  }
  CHECK(covered.size() == 10);
  CHECK(result.out_of_fold.queries.size() == 10);
  for (const auto& [qid, entries] : result.out_of_fold.queries)
    CHECK(entries.size() == 2);  // candidate set preserved, reordering only
  CHECK_FALSE(result.log.empty());
}

TEST_CASE("training log records monotonically increasing steps and warmup lrs") {
  auto fixture = tiny::make(model::FusionKind::learned_sigmoid);
  model::RegentModel model(fixture.config, fixture.vocab_size, 14);
  ToyProvider provider;
  OptimizerState state = OptimizerState::init(model.params(), 2e-5, 1000, 1.0);
  std::mt19937_64 rng(1);
  StepResult first = train_step(model, provider, {{"q1", "pos0", 1}}, state, rng);
  StepResult second = train_step(model, provider, {{"q1", "neg0", 0}}, state, rng);
  CHECK(first.lr == doctest::Approx(2e-8));
  CHECK(second.lr == doctest::Approx(4e-8));
  CHECK(first.grad_norm >= 0.0);
}
