#include "regent/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace regent::train {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ExampleBuild build_examples(const eval::Qrels& qrels, const eval::RankedRun& candidates,
                            std::uint64_t seed) {
  ExampleBuild out;
  for (const auto& [qid, grades] : qrels.grades) {
    std::vector<std::string> positives;
    for (const auto& [doc, g] : grades)
      if (g >= 1) positives.push_back(doc);
    if (positives.empty()) {
      out.warnings.push_back("query " + qid + " has no positives; excluded");
      continue;
    }
    std::sort(positives.begin(), positives.end());

    std::vector<std::string> eligible;
    auto rit = candidates.queries.find(qid);
    if (rit != candidates.queries.end())
      for (const auto& entry : rit->second)
        if (qrels.grade(qid, entry.doc_id) < 1) eligible.push_back(entry.doc_id);

    std::vector<std::string> negatives;
    std::mt19937_64 rng(mix_seed(seed, "negatives/" + qid));
    std::sample(eligible.begin(), eligible.end(), std::back_inserter(negatives),
                positives.size(), rng);
    if (negatives.size() < positives.size())
      out.warnings.push_back("query " + qid + ": only " + std::to_string(negatives.size()) +
                             " negatives available for " + std::to_string(positives.size()) +
                             " positives");

    for (const std::string& doc : positives)
      out.examples.push_back({qid, doc, 1, ExampleSource::qrels_positive});
    for (const std::string& doc : negatives)
      out.examples.push_back({qid, doc, 0, ExampleSource::bm25_negative});
  }
  return out;
}

void FoldPlan::validate() const {
  if (fold_count < 2) throw std::invalid_argument("fold plan: need at least 2 folds");
  std::vector<int> sizes(static_cast<std::size_t>(fold_count), 0);
  for (const auto& [qid, fold] : assignments) {
    if (fold < 0 || fold >= fold_count)
      throw std::invalid_argument("fold plan: assignment out of range for query " + qid);
    ++sizes[static_cast<std::size_t>(fold)];
  }
  for (int f = 0; f < fold_count; ++f)
    if (sizes[static_cast<std::size_t>(f)] == 0)
      throw std::invalid_argument("fold plan: fold " + std::to_string(f) + " is empty");
}

std::vector<std::string> FoldPlan::queries_in_fold(int fold) const {
  std::vector<std::string> out;
  for (const auto& [qid, f] : assignments)
    if (f == fold) out.push_back(qid);
  return out;
}

FoldPlan FoldPlan::query_level(std::vector<std::string> query_ids, int fold_count,
                               std::uint64_t seed) {
  if (static_cast<int>(query_ids.size()) < fold_count)
    throw std::invalid_argument("fold plan: fewer queries than folds");
  std::sort(query_ids.begin(), query_ids.end());
  std::mt19937_64 rng(mix_seed(seed, "fold_plan"));
  std::shuffle(query_ids.begin(), query_ids.end(), rng);
  FoldPlan plan;
  plan.fold_count = fold_count;
  for (std::size_t i = 0; i < query_ids.size(); ++i)
    plan.assignments[query_ids[i]] = static_cast<int>(i % static_cast<std::size_t>(fold_count));
  plan.validate();
  return plan;
}

OptimizerState OptimizerState::init(const ad::ParamSet& params, double base_lr,
                                    int warmup_steps, double clip_norm) {
  OptimizerState state;
  state.base_lr = base_lr;
  state.warmup_steps = warmup_steps;
  state.clip_norm = clip_norm;
  for (std::size_t i = 0; i < params.count(); ++i) {
    state.m.emplace_back(params[i].value.rows(), params[i].value.cols());
    state.v.emplace_back(params[i].value.rows(), params[i].value.cols());
  }
  return state;
}

double lr_schedule(const OptimizerState& state) {
  if (state.step < 1) throw std::logic_error("lr_schedule: step must be >= 1");
  double warm = state.warmup_steps <= 0
                    ? 1.0
                    : std::min(1.0, static_cast<double>(state.step) /
                                        static_cast<double>(state.warmup_steps));
  return state.base_lr * warm;
}

double clip_gradients(ad::ParamSet& params, double clip_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (!params[i].trainable) continue;
    const Matrix& g = params[i].grad;
    for (std::size_t j = 0; j < g.size(); ++j) sq += g.data()[j] * g.data()[j];
  }
  double norm = std::sqrt(sq);
  if (norm > clip_norm && norm > 0.0) {
    double scale = clip_norm / norm;
    for (std::size_t i = 0; i < params.count(); ++i) {
      if (!params[i].trainable) continue;
      params[i].grad.scale_inplace(scale);
    }
  }
  return norm;
}

void adam_update(ad::ParamSet& params, OptimizerState& state, double lr) {
  if (state.m.size() != params.count())
    throw std::invalid_argument("adam_update: state does not match parameter set");
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.count(); ++i) {
    ad::Parameter& p = params[i];
    if (!p.trainable) continue;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      double g = p.grad.data()[j];
      m.data()[j] = state.beta1 * m.data()[j] + (1.0 - state.beta1) * g;
      v.data()[j] = state.beta2 * v.data()[j] + (1.0 - state.beta2) * g * g;
      double m_hat = m.data()[j] / bc1;
      double v_hat = v.data()[j] / bc2;
      p.value.data()[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

StepResult train_step(model::RegentModel& model, PairProvider& provider,
                      const std::vector<TrainingExample>& batch, OptimizerState& state,
                      std::mt19937_64& dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  model.params().zero_grad();
  double total_loss = 0.0;
  double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const TrainingExample& ex : batch) {
    if (ex.label != 0 && ex.label != 1)
      throw std::invalid_argument("train_step: label outside {0,1} for " + ex.query_id + "/" +
                                  ex.doc_id);
    ad::Tape tape(true);
    ad::Node* score = model.score(tape, provider.inputs(ex.query_id, ex.doc_id), true,
                                  &dropout_rng);
    ad::Node* loss = tape.bce_with_logits(score, static_cast<double>(ex.label));
    double value = loss->value(0, 0);
    if (!std::isfinite(value)) {
      std::ostringstream diag;
      diag << "train_step: non-finite loss " << value << " on example query=" << ex.query_id
           << " doc=" << ex.doc_id << " label=" << ex.label << " score=" << score->value(0, 0);
      throw std::runtime_error(diag.str());
    }
    total_loss += value * inv_n;
    tape.backward(loss, inv_n);
  }
  StepResult result;
  result.loss = total_loss;
  result.grad_norm = clip_gradients(model.params(), state.clip_norm);
  state.step += 1;
  result.lr = lr_schedule(state);
  adam_update(model.params(), state, result.lr);
  return result;
}

eval::RankedRun rerank_queries(model::RegentModel& model, PairProvider& provider,
                               const std::vector<std::string>& query_ids,
                               const eval::RankedRun& candidates, const std::string& tag) {
  eval::RankedRun out;
  out.tag = tag;
  for (const std::string& qid : query_ids) {
    auto cit = candidates.queries.find(qid);
    if (cit == candidates.queries.end()) continue;
    std::vector<lexical::ScoredDoc> scored;
    scored.reserve(cit->second.size());
    for (const auto& entry : cit->second)
      scored.push_back({entry.doc_id, model.forward(provider.inputs(qid, entry.doc_id))});
    eval::sort_run_entries(scored);
    out.queries[qid] = std::move(scored);
  }
  return out;
}

CrossValResult cross_validate(const ModelFactory& factory, const ExampleBuild& data,
                              const FoldPlan& plan, PairProvider& provider,
                              const eval::Qrels& qrels, const eval::RankedRun& candidates,
                              const CrossValConfig& config) {
  plan.validate();
  CrossValResult result;
  result.out_of_fold.tag = "regent-oof";

  for (int fold = 0; fold < plan.fold_count; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    int val_fold = (fold + 1) % plan.fold_count;
    fr.test_queries = plan.queries_in_fold(fold);
    fr.val_queries = plan.queries_in_fold(val_fold);
    for (const auto& [qid, f] : plan.assignments)
      if (f != fold && f != val_fold) fr.train_queries.push_back(qid);
    if (fr.val_queries.empty() || fr.train_queries.empty())
      throw std::invalid_argument("cross_validate: fold " + std::to_string(fold) +
                                  " leaves no training or validation queries");

    std::set<std::string> train_set(fr.train_queries.begin(), fr.train_queries.end());
    std::vector<TrainingExample> fold_examples;
    for (const TrainingExample& ex : data.examples)
      if (train_set.count(ex.query_id) != 0) fold_examples.push_back(ex);
    if (fold_examples.empty())
      throw std::invalid_argument("cross_validate: no training examples for fold " +
                                  std::to_string(fold));

    model::RegentModel model = factory(config.seed + static_cast<std::uint64_t>(fold));
    OptimizerState state = OptimizerState::init(model.params(), config.base_lr,
                                                config.warmup_steps, config.clip_norm);
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, "shuffle/" + std::to_string(fold)));
    std::mt19937_64 dropout_rng(mix_seed(config.seed, "dropout/" + std::to_string(fold)));

    EarlyStopper stopper{config.patience};
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      std::shuffle(fold_examples.begin(), fold_examples.end(), shuffle_rng);
      for (std::size_t start = 0; start < fold_examples.size();
           start += static_cast<std::size_t>(config.batch_size)) {
        std::size_t end = std::min(fold_examples.size(),
                                   start + static_cast<std::size_t>(config.batch_size));
        std::vector<TrainingExample> batch(fold_examples.begin() + static_cast<long>(start),
                                           fold_examples.begin() + static_cast<long>(end));
        StepResult step = train_step(model, provider, batch, state, dropout_rng);
        result.log.push_back({fold, epoch, state.step, step.lr, step.loss, step.grad_norm});
      }
      eval::RankedRun val_run =
          rerank_queries(model, provider, fr.val_queries, candidates, "val");
      double val_map = 0.0;
      int val_judged = 0;
      for (const std::string& qid : fr.val_queries) {
        if (qrels.relevant_count(qid) == 0) continue;
        auto rit = val_run.queries.find(qid);
        static const std::vector<lexical::ScoredDoc> kEmpty;
        val_map += eval::average_precision(
            rit == val_run.queries.end() ? kEmpty : rit->second, qrels.grades.at(qid));
        ++val_judged;
      }
      if (val_judged > 0) val_map /= static_cast<double>(val_judged);
      fr.epochs_run = epoch;
      bool improved = val_map > stopper.best;
      bool keep_going = stopper.observe(epoch, val_map);
      if (improved) {
        fr.best_val_map = val_map;
        fr.best_epoch = epoch;
        fr.best_weights = model.params().snapshot_values();
      }
      if (!keep_going) break;
    }
    if (!fr.best_weights.empty()) model.params().restore_values(fr.best_weights);

    eval::RankedRun test_run =
        rerank_queries(model, provider, fr.test_queries, candidates, "regent-oof");
    for (auto& [qid, entries] : test_run.queries)
      result.out_of_fold.queries[qid] = std::move(entries);
    result.folds.push_back(std::move(fr));
  }
  return result;
}

}  // namespace regent::train
