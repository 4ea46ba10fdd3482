#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "regent/autodiff.hpp"
#include "regent/evaluation.hpp"
#include "regent/model.hpp"

namespace regent::train {

enum class ExampleSource { qrels_positive, bm25_negative };

struct TrainingExample {
  std::string query_id;
  std::string doc_id;
  int label = 0;  // 1 = relevant
  ExampleSource source = ExampleSource::bm25_negative;
};

struct ExampleBuild {
  std::vector<TrainingExample> examples;
  std::vector<std::string> warnings;
};

// Per query: every qrels positive (grade >= 1), plus negatives sampled
// uniformly without replacement from the query's BM25 candidates (judged
// non-relevant or unjudged) to exactly the positive count.
ExampleBuild build_examples(const eval::Qrels& qrels, const eval::RankedRun& candidates,
                            std::uint64_t seed);

// Query-level partition into `fold_count` non-empty folds.
struct FoldPlan {
  std::map<std::string, int> assignments;
  int fold_count = 5;

  void validate() const;
  std::vector<std::string> queries_in_fold(int fold) const;
  static FoldPlan query_level(std::vector<std::string> query_ids, int fold_count,
                              std::uint64_t seed);
};

struct OptimizerState {
  long long step = 0;
  double base_lr = 2e-5;
  int warmup_steps = 1000;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Matrix> m;  // first moments, ParamSet order
  std::vector<Matrix> v;  // second moments

  static OptimizerState init(const ad::ParamSet& params, double base_lr = 2e-5,
                             int warmup_steps = 1000, double clip_norm = 1.0);
};

// base_lr * min(1, step / warmup_steps); constant afterwards. step >= 1.
double lr_schedule(const OptimizerState& state);

// Scales all trainable gradients so the global norm is at most clip_norm;
// returns the pre-clip norm.
double clip_gradients(ad::ParamSet& params, double clip_norm);

// Bias-corrected Adam step over trainable parameters at learning rate lr.
void adam_update(ad::ParamSet& params, OptimizerState& state, double lr);

// Supplies model inputs for a (query, doc) pair. Implementations own the
// backing storage; returned pointers stay valid for the provider's lifetime.
class PairProvider {
 public:
  virtual ~PairProvider() = default;
  virtual model::ForwardInputs inputs(const std::string& query_id, const std::string& doc_id) = 0;
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

// One optimizer step on a batch: mean BCE over sigmoid(score), reverse-mode
// gradients, global clipping, Adam update. Aborts on a non-finite loss with
// a diagnostic naming the offending example.
StepResult train_step(model::RegentModel& model, PairProvider& provider,
                      const std::vector<TrainingExample>& batch, OptimizerState& state,
                      std::mt19937_64& dropout_rng);

// Scores each query's candidate list with the model (reordering only).
eval::RankedRun rerank_queries(model::RegentModel& model, PairProvider& provider,
                               const std::vector<std::string>& query_ids,
                               const eval::RankedRun& candidates, const std::string& tag);

struct TrainLogEntry {
  int fold = 0;
  int epoch = 0;
  long long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

// Keeps the best-epoch checkpoint; stops after `patience` epochs without a
// strict improvement.
struct EarlyStopper {
  int patience = 3;
  double best = -1.0;
  int best_epoch = 0;
  int since_improvement = 0;

  // Returns false when training should stop (after recording this epoch).
  bool observe(int epoch, double metric) {
    if (metric > best) {
      best = metric;
      best_epoch = epoch;
      since_improvement = 0;
      return true;
    }
    ++since_improvement;
    return since_improvement < patience;
  }
};

struct CrossValConfig {
  int epochs = 10;
  int patience = 3;
  int batch_size = 8;
  double base_lr = 2e-5;
  int warmup_steps = 1000;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
};

struct FoldResult {
  int fold = 0;
  int best_epoch = 0;           // 1-based; 0 = never improved
  double best_val_map = -1.0;
  int epochs_run = 0;
  std::vector<std::string> train_queries;  // gradient queries
  std::vector<std::string> val_queries;    // early-stopping queries
  std::vector<std::string> test_queries;   // held-out fold
  std::vector<Matrix> best_weights;
};

struct CrossValResult {
  std::vector<FoldResult> folds;
  eval::RankedRun out_of_fold;  // every query scored by the model that never saw it
  std::vector<TrainLogEntry> log;
};

using ModelFactory = std::function<model::RegentModel(std::uint64_t seed)>;

// Per fold f: the held-out fold is the test set, one of the remaining folds
// is the early-stopping validation set, the rest provide gradient examples.
// The retained checkpoint is the epoch with the highest validation MAP;
// training stops early after `patience` epochs without improvement.
CrossValResult cross_validate(const ModelFactory& factory, const ExampleBuild& data,
                              const FoldPlan& plan, PairProvider& provider,
                              const eval::Qrels& qrels, const eval::RankedRun& candidates,
                              const CrossValConfig& config);

}  // namespace regent::train
