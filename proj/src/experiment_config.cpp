#include "regent/experiment_config.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace regent::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw UserError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw UserError(path + ":" + std::to_string(line_no) + ": empty key");
    out[key] = value;
  }
  return out;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> kv =
      path.empty() ? std::map<std::string, std::string>{} : parse_kv_file(path);
  for (const std::string& item : overrides) {
    std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw UserError("override must be key=value: " + item);
    kv[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }

  ExperimentConfig config;
  config.raw = kv;
  std::map<std::string, bool> used;
  auto take = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    used[key] = true;
    return &it->second;
  };
  auto str = [&](const std::string& key, std::string& field) {
    if (const std::string* v = take(key)) field = *v;
  };
  auto integer = [&](const std::string& key, int& field) {
    if (const std::string* v = take(key)) {
      try {
        field = std::stoi(*v);
      } catch (const std::exception&) {
        throw UserError("config key " + key + ": expected integer, got \"" + *v + "\"");
      }
    }
  };
  auto real = [&](const std::string& key, double& field) {
    if (const std::string* v = take(key)) {
      try {
        field = std::stod(*v);
      } catch (const std::exception&) {
        throw UserError("config key " + key + ": expected number, got \"" + *v + "\"");
      }
    }
  };
  auto boolean = [&](const std::string& key, bool& field) {
    if (const std::string* v = take(key)) {
      if (*v == "true" || *v == "1") field = true;
      else if (*v == "false" || *v == "0") field = false;
      else throw UserError("config key " + key + ": expected true/false");
    }
  };

  str("paths.corpus", config.corpus);
  str("paths.queries", config.queries);
  str("paths.qrels", config.qrels);
  str("paths.entity_links", config.entity_links);
  str("paths.entity_embeddings", config.entity_embeddings);
  str("paths.entity_descriptions", config.entity_descriptions);
  str("paths.vocab", config.vocab);
  str("paths.stopwords", config.stopwords);
  str("paths.output_dir", config.output_dir);

  integer("model.hidden_dim", config.hidden_dim);
  integer("model.num_heads", config.num_heads);
  integer("model.encoder_layers", config.enc_layers);
  integer("model.cross_layers", config.cross_layers);
  integer("model.max_len", config.max_len);
  integer("model.ffn_mult", config.ffn_mult);
  integer("model.head_blocks", config.head_blocks);
  real("model.dropout", config.dropout);
  if (const std::string* v = take("model.fusion")) config.fusion = model::fusion_from_string(*v);
  boolean("model.disable_entities", config.flags.disable_entities);
  boolean("model.disable_token_bm25", config.flags.disable_token_bm25);
  boolean("model.document_level_bm25", config.flags.document_level_bm25);

  integer("pipeline.candidate_depth", config.candidate_depth);
  integer("pipeline.top_k_entities", config.top_k_entities);
  if (const std::string* v = take("pipeline.entity_scorer"))
    config.scorer = entity::scorer_kind_from_string(*v);

  integer("ranker.hidden_dim", config.ranker_hidden);
  integer("ranker.encoder_layers", config.ranker_layers);
  integer("ranker.num_heads", config.ranker_heads);
  integer("ranker.max_len", config.ranker_max_len);
  integer("ranker.epochs", config.ranker_epochs);
  real("ranker.lr", config.ranker_lr);

  real("training.lr", config.lr);
  integer("training.warmup_steps", config.warmup_steps);
  integer("training.batch_size", config.batch_size);
  integer("training.epochs", config.epochs);
  integer("training.patience", config.patience);
  real("training.clip_norm", config.clip_norm);
  integer("training.folds", config.folds);
  if (const std::string* v = take("training.seed")) {
    try {
      config.seed = std::stoull(*v);
      config.seed_set = true;
    } catch (const std::exception&) {
      throw UserError("config key training.seed: expected integer, got \"" + *v + "\"");
    }
  }

  str("eval.run", config.eval_run);
  integer("eval.rank_dist_grade", config.rank_dist_grade);
  if (const std::string* v = take("ablate.variants")) config.ablate_variants = split_list(*v);
  if (const std::string* v = take("ablate.fusions")) {
    config.ablate_fusions.clear();
    for (const std::string& name : split_list(*v))
      config.ablate_fusions.push_back(model::fusion_from_string(name));
  }
  if (const std::string* v = take("ablate.scorers")) {
    config.ablate_scorers.clear();
    for (const std::string& name : split_list(*v))
      config.ablate_scorers.push_back(entity::scorer_kind_from_string(name));
  }

  for (const auto& [key, value] : kv)
    if (used.count(key) == 0) throw UserError("unknown config key: " + key);

  if (const char* env = std::getenv("REGENT_OUTPUT_DIR"); env != nullptr && *env != '\0')
    config.output_dir = env;
  if (!config.seed_set) throw UserError("training.seed is mandatory");
  if (config.output_dir.empty()) throw UserError("paths.output_dir is required");
  return config;
}

void ExperimentConfig::require_paths(const std::vector<std::string>& keys) const {
  auto check = [&](const std::string& key, const std::string& value) {
    if (value.empty()) throw UserError("config key " + key + " is required for this command");
    if (!std::filesystem::exists(value))
      throw UserError("config key " + key + ": path does not exist: " + value);
  };
  for (const std::string& key : keys) {
    if (key == "paths.corpus") check(key, corpus);
    else if (key == "paths.queries") check(key, queries);
    else if (key == "paths.qrels") check(key, qrels);
    else if (key == "paths.entity_links") check(key, entity_links);
    else if (key == "paths.entity_embeddings") check(key, entity_embeddings);
    else if (key == "paths.entity_descriptions") check(key, entity_descriptions);
    else if (key == "paths.vocab") check(key, vocab);
    else if (key == "paths.stopwords") check(key, stopwords);
    else throw std::logic_error("unknown required path key: " + key);
  }
}

std::string ExperimentConfig::config_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [key, value] : raw) {
    h = fnv1a(key.data(), key.size(), h);
    h = fnv1a("=", 1, h);
    h = fnv1a(value.data(), value.size(), h);
    h = fnv1a("\n", 1, h);
  }
  return hex64(h);
}

model::RegentConfig ExperimentConfig::model_config(int entity_dim) const {
  model::RegentConfig mc;
  mc.encoder.hidden_dim = hidden_dim;
  mc.encoder.num_layers = enc_layers;
  mc.encoder.num_heads = num_heads;
  mc.encoder.max_len = max_len;
  mc.encoder.mode = embed::EncoderMode::trainable_transformer;
  mc.encoder.dropout = dropout;
  mc.cross_layers = cross_layers;
  mc.num_heads = num_heads;
  mc.entity_dim = entity_dim;
  mc.ffn_mult = ffn_mult;
  mc.head_blocks = head_blocks;
  mc.dropout = dropout;
  mc.fusion = fusion;
  mc.flags = flags;
  mc.validate();
  return mc;
}

embed::EncoderConfig ExperimentConfig::ranker_config() const {
  embed::EncoderConfig rc;
  rc.hidden_dim = ranker_hidden;
  rc.num_layers = ranker_layers;
  rc.num_heads = ranker_heads;
  rc.max_len = ranker_max_len;
  rc.mode = embed::EncoderMode::trainable_transformer;
  rc.dropout = dropout;
  rc.validate();
  return rc;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open file for digest: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buffer[8192];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0)
    h = fnv1a(buffer, static_cast<std::size_t>(in.gcount()), h);
  return hex64(h);
}

Manifest::Manifest(std::string output_dir, std::string config_hash)
    : path_(std::move(output_dir) + "/manifest.json"), config_hash_(std::move(config_hash)) {
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_);
    nlohmann::json j;
    in >> j;
    if (j.contains("inputs"))
      for (const auto& [k, v] : j["inputs"].items()) inputs_[k] = v.get<std::string>();
    if (j.contains("artifacts"))
      for (const auto& [k, v] : j["artifacts"].items())
        artifacts_[k] = {v["path"].get<std::string>(), v["digest"].get<std::string>()};
  }
}

void Manifest::add_input(const std::string& path) { inputs_[path] = file_digest(path); }

void Manifest::add_artifact(const std::string& name, const std::string& path) {
  artifacts_[name] = {path, file_digest(path)};
}

void Manifest::save() const {
  nlohmann::json j;
  j["config_hash"] = config_hash_;
  j["written_at_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
  j["inputs"] = nlohmann::json::object();
  for (const auto& [path, digest] : inputs_) j["inputs"][path] = digest;
  j["artifacts"] = nlohmann::json::object();
  for (const auto& [name, pd] : artifacts_)
    j["artifacts"][name] = {{"path", pd.first}, {"digest", pd.second}};
  std::ofstream out(path_);
  if (!out) throw std::runtime_error("cannot write manifest: " + path_);
  out << j.dump(1) << '\n';
}

OutputLock::OutputLock(const std::string& output_dir) : path_(output_dir + "/.lock") {
  std::filesystem::create_directories(output_dir);
  if (std::filesystem::exists(path_))
    throw UserError("output directory is locked by another run: " + path_ +
                    " (remove the stale lock if no run is active)");
  std::ofstream out(path_);
  out << "locked\n";
}

OutputLock::~OutputLock() { std::filesystem::remove(path_); }

}  // namespace regent::cli
