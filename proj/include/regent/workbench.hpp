#pragma once

#include <string>

#include "regent/experiment_config.hpp"

namespace regent::cli {

// Pipeline commands. All artifacts land in config.output_dir and are
// recorded in its manifest. UserError signals bad input; anything else is an
// internal failure.
void cmd_index(const ExperimentConfig& config);
void cmd_entity_sets(const ExperimentConfig& config);
void cmd_train_entity_ranker(const ExperimentConfig& config);
void cmd_train(const ExperimentConfig& config);
void cmd_rerank(const ExperimentConfig& config);
void cmd_evaluate(const ExperimentConfig& config);
void cmd_ablate(const ExperimentConfig& config);
void cmd_attention_dump(const ExperimentConfig& config, const std::string& query_id,
                        const std::string& doc_id);

// Parses arguments, dispatches, maps exceptions to exit codes
// (0 ok, 2 user/config error, 3 internal error).
int run_cli(int argc, char** argv);

}  // namespace regent::cli
