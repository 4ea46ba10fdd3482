#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "regent/entity_types.hpp"
#include "regent/model.hpp"

namespace regent::cli {

// Raised for bad user input (config, paths, malformed files); the CLI maps
// it to its own exit code, distinct from internal errors.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat "key = value" tree with '#' comments; later keys override earlier
// ones, command-line overrides win over the file.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct ExperimentConfig {
  // paths
  std::string corpus;
  std::string queries;
  std::string qrels;
  std::string entity_links;
  std::string entity_embeddings;
  std::string entity_descriptions;
  std::string vocab;
  std::string stopwords;  // empty = built-in default list
  std::string output_dir;

  // model
  int hidden_dim = 64;
  int num_heads = 4;
  int enc_layers = 2;
  int cross_layers = 2;
  int max_len = 512;
  int ffn_mult = 4;
  int head_blocks = 2;
  double dropout = 0.1;
  model::FusionKind fusion = model::FusionKind::learned_sigmoid;
  model::AblationFlags flags;

  // pipeline
  int candidate_depth = 1000;
  int top_k_entities = 20;
  entity::EntityScorerKind scorer = entity::EntityScorerKind::supervised_cross;

  // entity ranker
  int ranker_hidden = 32;
  int ranker_layers = 1;
  int ranker_heads = 2;
  int ranker_max_len = 64;
  int ranker_epochs = 3;
  double ranker_lr = 1e-3;

  // training
  double lr = 2e-5;
  int warmup_steps = 1000;
  int batch_size = 8;
  int epochs = 10;
  int patience = 3;
  double clip_norm = 1.0;
  int folds = 5;
  std::uint64_t seed = 0;
  bool seed_set = false;

  // evaluation / ablation
  std::string eval_run;  // run file to evaluate; default <output>/rerank.run
  int rank_dist_grade = 2;
  std::vector<std::string> ablate_variants = {"full", "no_entities", "no_bm25",
                                              "document_level_bm25"};
  std::vector<model::FusionKind> ablate_fusions = {model::FusionKind::learned_sigmoid};
  std::vector<entity::EntityScorerKind> ablate_scorers;

  std::map<std::string, std::string> raw;  // canonical key/value view

  static ExperimentConfig load(const std::string& path,
                               const std::vector<std::string>& overrides);
  // Ensures the named path keys exist as files; seed is always required.
  void require_paths(const std::vector<std::string>& keys) const;
  std::string config_hash() const;

  model::RegentConfig model_config(int entity_dim) const;
  embed::EncoderConfig ranker_config() const;
};

// FNV-1a/64 over a file's bytes, hex-encoded.
std::string file_digest(const std::string& path);

// Records inputs and artifacts of a command run; persisted as JSON.
class Manifest {
 public:
  Manifest(std::string output_dir, std::string config_hash);

  void add_input(const std::string& path);
  void add_artifact(const std::string& name, const std::string& path);
  void save() const;

 private:
  std::string path_;
  std::string config_hash_;
  std::map<std::string, std::string> inputs_;     // path -> digest
  std::map<std::string, std::pair<std::string, std::string>> artifacts_;
};

// Exclusive lock on the output directory; released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::string& output_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string path_;
};

}  // namespace regent::cli
