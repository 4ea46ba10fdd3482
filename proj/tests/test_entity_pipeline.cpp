#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "regent/entity_pipeline.hpp"

using namespace regent;
using namespace regent::entity;

namespace {

embed::EntityEmbeddingTable toy_table() {
  embed::EntityEmbeddingTable table;
  table.dim = 3;
  table.entries["A"] = {1.0, 0.0, 0.0};
  table.entries["B"] = {0.0, 1.0, 0.0};
  table.entries["C"] = {0.0, 0.0, 1.0};
  table.entries["D"] = {1.0, 1.0, 0.0};
  table.entries["Qe"] = {1.0, 0.0, 0.0};  // identical to A
  return table;
}

EntityLinkFile toy_links() {
  EntityLinkFile links;
  links.documents["d1"] = {"A", "B"};
  links.documents["d2"] = {"B", "C"};
  links.documents["d3"] = {"D"};
  links.queries["q1"] = {"Qe"};
  return links;
}

std::vector<lexical::ScoredDoc> toy_run() {
  return {{"d1", 3.0}, {"d2", 2.0}, {"d3", 1.0}};
}

text::SubwordVocab toy_vocab() {
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (char c = 'a'; c <= 'z'; ++c) tokens.push_back(std::string(1, c));
  for (char c = 'a'; c <= 'z'; ++c) tokens.push_back("##" + std::string(1, c));
  return text::SubwordVocab::from_tokens(tokens);
}

}  // namespace

TEST_CASE("candidate pool is the union over the top-depth documents") {
  EntityLinkFile links = toy_links();
  auto run = toy_run();
  CHECK(candidate_pool(run, links, 2) == std::set<std::string>{"A", "B", "C"});
  CHECK(candidate_pool(run, links, 1) == std::set<std::string>{"A", "B"});
  CHECK(candidate_pool(run, links, 1000) == std::set<std::string>{"A", "B", "C", "D"});
  CHECK(candidate_pool({}, links, 10).empty());
  auto freq = candidate_pool_frequency(run, links, 3);
  CHECK(freq.at("B") == 2);
  CHECK(freq.at("A") == 1);
}

TEST_CASE("load_links routes ids, drops unresolvable entities, flags them") {
  std::string path = "test_links.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id": "d1", "entities": ["A", "Missing_One"]})" << "\n";
    out << R"({"id": "q1", "entities": ["Qe"]})" << "\n";
  }
  auto table = toy_table();
  auto links = load_links(path, {"d1"}, {"q1"}, table);
  std::remove(path.c_str());
  REQUIRE(links.doc_links("d1") != nullptr);
  CHECK(*links.doc_links("d1") == std::vector<std::string>{"A"});
  REQUIRE(links.query_links("q1") != nullptr);
  CHECK(links.unresolvable == std::vector<std::string>{"Missing_One"});
}

TEST_CASE("max_sim: identical embedding scores 1, orthogonal centroid scores 0.5") {
  auto table = toy_table();
  auto links = toy_links();
  ScorerResources res;
  res.embeddings = &table;
  res.links = &links;
  QueryRecord query{"q1", "anything"};

  auto max_scores = score_entities(EntityScorerKind::max_sim, query, {"A", "B"}, res);
  CHECK(max_scores.at("A") == doctest::Approx(1.0));  // cosine 1 maps to 1
  CHECK(max_scores.at("B") == doctest::Approx(0.5));  // orthogonal

  auto cen_scores = score_entities(EntityScorerKind::centroid_sim, query, {"A", "B", "D"}, res);
  CHECK(cen_scores.at("A") == doctest::Approx(1.0));
  CHECK(cen_scores.at("B") == doctest::Approx(0.5));  // orthogonal to centroid
  CHECK(cen_scores.at("D") == doctest::Approx((1.0 + 1.0 / std::sqrt(2.0)) / 2.0));
}

TEST_CASE("max_sim and centroid_sim error without query entities") {
  auto table = toy_table();
  EntityLinkFile links = toy_links();
  links.queries.clear();
  ScorerResources res;
  res.embeddings = &table;
  res.links = &links;
  QueryRecord query{"q1", "anything"};
  CHECK_THROWS_AS(score_entities(EntityScorerKind::max_sim, query, {"A"}, res),
                  std::domain_error);
  CHECK_THROWS_AS(score_entities(EntityScorerKind::centroid_sim, query, {"A"}, res),
                  std::domain_error);
}

TEST_CASE("bm25_descriptions normalizes hand-computed scores to [0,1]") {
  // description corpus: doc_id = entity_id
  auto index = lexical::InvertedIndex::build(
      {{"A", "nasdaq market crash index"},
       {"B", "river delta wildlife"},
       {"C", "stock market news"}},
      text::default_stopwords());
  ScorerResources res;
  res.description_index = &index;
  QueryRecord query{"q1", "stock market crash"};
  auto scores = score_entities(EntityScorerKind::bm25_descriptions, query, {"A", "B", "C"}, res);
  // hand-derived ordering: A matches market+crash, C matches stock+market, B nothing
  double raw_a = index.bm25_term_score("market", "A") + index.bm25_term_score("crash", "A");
  double raw_c = index.bm25_term_score("stock", "C") + index.bm25_term_score("market", "C");
  REQUIRE(raw_a > 0.0);
  REQUIRE(raw_c > 0.0);
  CHECK(scores.at("B") == doctest::Approx(0.0));  // min-max floor
  if (raw_a > raw_c) {
    CHECK(scores.at("A") == doctest::Approx(1.0));
    CHECK(scores.at("C") == doctest::Approx(raw_c / raw_a));  // (raw_c - 0)/(raw_a - 0)
  } else {
    CHECK(scores.at("C") == doctest::Approx(1.0));
  }
}

TEST_CASE("select_top_k caps, orders and breaks ties lexicographically") {
  embed::EntityEmbeddingTable table;
  table.dim = 2;
  std::map<std::string, double> scores;
  for (int i = 0; i < 25; ++i) {
    std::string id = "e" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    table.entries[id] = {1.0, 2.0};
    scores[id] = 0.5 + 0.01 * i;
  }
  auto top20 = select_top_k(scores, 20, table);
  CHECK(top20.size() == 20);
  CHECK(top20.entity_ids.front() == "e24");
  table.entries["x"] = {1.0, 2.0};
  table.entries["y"] = {1.0, 2.0};
  auto fewer = select_top_k({{"x", 0.5}, {"y", 0.6}}, 20, table);  // fewer than k
  CHECK(fewer.size() == 2);

  std::map<std::string, double> tied = {{"bb", 0.7}, {"aa", 0.7}, {"cc", 0.9}};
  table.entries["aa"] = {1, 1};
  table.entries["bb"] = {1, 1};
  table.entries["cc"] = {1, 1};
  auto picked = select_top_k(tied, 2, table);
  CHECK(picked.entity_ids[0] == "cc");
  CHECK(picked.entity_ids[1] == "aa");  // lexicographically smaller id wins the tie
}

TEST_CASE("scaling law: every scaled row equals score times the raw embedding") {
  auto table = toy_table();
  std::map<std::string, double> scores = {{"A", 0.25}, {"B", 0.75}, {"D", 1.0}};
  auto set = select_top_k(scores, 20, table);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& raw = table.at(set.entity_ids[i]);
    for (std::size_t j = 0; j < table.dim; ++j)
      CHECK(set.scaled_embeddings(i, j) == set.scores[i] * raw[j]);  // exact
  }
}

TEST_CASE("document entity set is the intersection with preserved scores") {
  auto table = toy_table();
  auto links = toy_links();
  std::map<std::string, double> scores = {{"A", 0.9}, {"B", 0.6}, {"C", 0.3}};
  auto query_set = select_top_k(scores, 20, table);

  auto d1 = document_entity_set("d1", links, query_set);  // docs {A,B}
  CHECK(d1.entity_ids == std::vector<std::string>{"A", "B"});
  CHECK(d1.scores == std::vector<double>{0.9, 0.6});

  auto d3 = document_entity_set("d3", links, query_set);  // doc {D}: disjoint
  CHECK(d3.empty());

  EntityLinkFile superset_links;
  superset_links.documents["big"] = {"A", "B", "C", "D"};
  auto big = document_entity_set("big", superset_links, query_set);
  CHECK(big.entity_ids == query_set.entity_ids);  // doc superset -> E_d = query set

  // subset law
  for (const auto& id : d1.entity_ids) {
    bool found = false;
    for (const auto& qid : query_set.entity_ids) found |= (qid == id);
    CHECK(found);
  }
}

TEST_CASE("build_query_entity_sets uses linked query entities, or falls back to top-5") {
  auto table = toy_table();
  auto links = toy_links();
  ScorerResources res;
  res.embeddings = &table;
  res.links = &links;
  QueryRecord query{"q1", "anything"};
  auto sets = build_query_entity_sets(query, toy_run(), links, table,
                                      EntityScorerKind::max_sim, res, 1000, 20);
  CHECK(sets.query_side.entity_ids == std::vector<std::string>{"Qe"});
  CHECK(sets.query_relevant.size() == 4);
  CHECK(sets.query_relevant.size() <= 20);

  // no linked entities: supervised kinds fall back to the top of the pool
  EntityLinkFile bare = toy_links();
  bare.queries.clear();
  res.links = &bare;
  auto index = lexical::InvertedIndex::build({{"A", "alpha"}, {"B", "beta"}, {"C", "gamma"},
                                              {"D", "delta"}},
                                             text::default_stopwords());
  res.description_index = &index;
  QueryRecord q2{"q2", "alpha beta"};
  auto fallback = build_query_entity_sets(q2, toy_run(), bare, table,
                                          EntityScorerKind::bm25_descriptions, res, 1000, 20);
  CHECK(fallback.query_side.size() <= 5);
  CHECK(fallback.query_side.size() > 0);
  for (const auto& id : fallback.query_side.entity_ids) {
    bool in_relevant = false;
    for (const auto& rid : fallback.query_relevant.entity_ids) in_relevant |= (rid == id);
    CHECK(in_relevant);
  }
}

TEST_CASE("cross encoder scorer: range, determinism, pair layout, round trip") {
  auto vocab = toy_vocab();
  embed::EncoderConfig config;
  config.hidden_dim = 16;
  config.num_layers = 1;
  config.num_heads = 2;
  config.max_len = 24;
  CrossEncoderScorer scorer(config, &vocab, 5);

  auto pair = scorer.build_pair("stock marke", "Dot com bubble");
  CHECK(pair.subwords[0] == vocab.cls_id());
  int seps = 0;
  for (int id : pair.subwords) seps += (id == vocab.sep_id());
  CHECK(seps == 2);
  CHECK(pair.subwords.size() == 24);

  double s1 = scorer.score("stock crash", "Nasdaq");
  double s2 = scorer.score("stock crash", "Nasdaq");
  CHECK(s1 == s2);
  CHECK(s1 > 0.0);
  CHECK(s1 < 1.0);

  std::string path = "test_cross.bin";
  scorer.save(path);
  auto loaded = CrossEncoderScorer::load(path, &vocab);
  std::remove(path.c_str());
  CHECK(loaded.score("stock crash", "Nasdaq") == s1);
}

TEST_CASE("entity display name replaces underscores") {
  CHECK(entity_display_name("Dot-com_bubble") == "Dot-com bubble");
  CHECK(entity_display_name("plain") == "plain");
}

TEST_CASE("logistic scorer learns a separable toy problem") {
  LogisticScorer scorer;
  std::vector<std::array<double, 4>> x = {
      {0.9, 0.8, 0.9, 0.5}, {0.95, 0.9, 0.8, 0.6}, {0.1, 0.2, 0.1, 0.1}, {0.2, 0.1, 0.0, 0.2}};
  std::vector<int> y = {1, 1, 0, 0};
  scorer.train(x, y, 500, 1.0);
  CHECK(scorer.score(x[0]) > 0.5);
  CHECK(scorer.score(x[2]) < 0.5);
  CHECK_THROWS_AS(scorer.train(x, {1, 1, 0, 2}, 10, 0.1), std::invalid_argument);
}

TEST_CASE("supervised cross ranker overfits a separable two-entity toy set") {
  auto vocab = toy_vocab();
  embed::EncoderConfig config;
  config.hidden_dim = 16;
  config.num_layers = 1;
  config.num_heads = 2;
  config.max_len = 16;

  std::vector<RankerExample> pairs;
  for (const char* qid : {"qa", "qb"}) {
    pairs.push_back({qid, "good", 1});
    pairs.push_back({qid, "bad", 0});
  }
  train::FoldPlan plan;
  plan.fold_count = 2;
  plan.assignments = {{"qa", 0}, {"qb", 1}};
  std::map<std::string, std::string> texts = {{"qa", "alpha query"}, {"qb", "beta query"}};
  RankerTrainConfig train_config;
  train_config.epochs = 50;  // 50 epochs x 2 pairs / batch 8 -> 50 steps per fold
  train_config.base_lr = 5e-3;
  train_config.warmup_steps = 5;
  auto scorers = train_entity_ranker(pairs, plan, texts, config, vocab, train_config);
  REQUIRE(scorers.size() == 2);
  // training accuracy 1.0: fold 0's scorer was trained on qb's pairs
  CHECK(scorers[0].score(texts["qb"], "good") > 0.5);
  CHECK(scorers[0].score(texts["qb"], "bad") < 0.5);
  CHECK(scorers[1].score(texts["qa"], "good") > 0.5);
  CHECK(scorers[1].score(texts["qa"], "bad") < 0.5);
}

TEST_CASE("entity ranker training rejects bad labels and positive-free folds") {
  auto vocab = toy_vocab();
  embed::EncoderConfig config;
  config.hidden_dim = 8;
  config.num_layers = 0;
  config.num_heads = 2;
  config.max_len = 8;
  train::FoldPlan plan;
  plan.fold_count = 2;
  plan.assignments = {{"qa", 0}, {"qb", 1}};
  std::map<std::string, std::string> texts = {{"qa", "a"}, {"qb", "b"}};
  RankerTrainConfig tc;
  tc.epochs = 1;

  CHECK_THROWS_AS(train_entity_ranker({{"qa", "e", 3}}, plan, texts, config, vocab, tc),
                  std::invalid_argument);
  // fold 1 (qb) has no positive pairs
  CHECK_THROWS_WITH_AS(
      train_entity_ranker({{"qa", "e", 1}, {"qb", "e", 0}}, plan, texts, config, vocab, tc),
      "entity ranker: fold 1 has no positive pairs", std::invalid_argument);
}

TEST_CASE("build_ranker_examples labels relevant-doc entities positive") {
  eval::Qrels qrels;
  qrels.grades["q1"]["d1"] = 1;  // relevant: entities A, B
  qrels.grades["q1"]["d2"] = 0;
  eval::RankedRun candidates;
  candidates.queries["q1"] = toy_run();
  auto links = toy_links();
  auto pairs = build_ranker_examples(qrels, candidates, links, 1000);
  std::map<std::string, int> label_of;
  for (const auto& p : pairs) label_of[p.entity_id] = p.label;
  CHECK(label_of.at("A") == 1);
  CHECK(label_of.at("B") == 1);
  CHECK(label_of.at("C") == 0);
  CHECK(label_of.at("D") == 0);
}

TEST_CASE("every scorer kind stays within [0,1] on a random fixture") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  embed::EntityEmbeddingTable table;
  table.dim = 4;
  std::set<std::string> candidates;
  std::vector<std::pair<std::string, std::string>> descriptions;
  for (int i = 0; i < 12; ++i) {
    std::string id = "ent" + std::to_string(i);
    std::vector<double> v(4);
    for (double& x : v) x = dist(rng);
    table.entries[id] = v;
    candidates.insert(id);
    descriptions.emplace_back(id, i % 2 == 0 ? "stock market words" : "river forest words");
  }
  EntityLinkFile links;
  links.queries["q"] = {"ent0", "ent1"};
  auto desc_index = lexical::InvertedIndex::build(descriptions, text::default_stopwords());
  auto pool_freq = std::unordered_map<std::string, int>{};
  for (const auto& id : candidates) pool_freq[id] = 1 + static_cast<int>(rng() % 5);

  auto vocab = toy_vocab();
  embed::EncoderConfig config;
  config.hidden_dim = 8;
  config.num_layers = 0;
  config.num_heads = 2;
  config.max_len = 12;
  CrossEncoderScorer cross(config, &vocab, 3);
  LogisticScorer logreg;
  logreg.weights = {0.5, -0.25, 1.0, 2.0};
  logreg.bias = -0.5;

  ScorerResources res;
  res.embeddings = &table;
  res.links = &links;
  res.description_index = &desc_index;
  res.cross = &cross;
  res.logreg = &logreg;
  res.pool_frequency = &pool_freq;
  res.pool_doc_count = 5;

  QueryRecord query{"q", "stock market"};
  for (EntityScorerKind kind :
       {EntityScorerKind::supervised_cross, EntityScorerKind::bm25_descriptions,
        EntityScorerKind::max_sim, EntityScorerKind::centroid_sim,
        EntityScorerKind::logistic_regression}) {
    CAPTURE(to_string(kind));
    auto scores = score_entities(kind, query, candidates, res);
    CHECK(scores.size() == candidates.size());
    for (const auto& [id, s] : scores) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
}
