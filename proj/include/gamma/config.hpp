#pragma once

// Run configuration: a sectioned `key = value` text file.
//
//   [model]   dim att_dim relation_layers entity_layers branches fusion_mode
//             kappa lambda attn_dropout score_real_part_only oracle_mode
//             layer_norm residual
//   [train]   learning_rate epochs batch_size num_negatives adv_temperature
//             grad_accum aux_weight beta weight_decay seed steps_per_epoch
//             remove_query_edges max_valid_queries
//   [data]    train eval task_mode        (comma-separated dataset dirs)
//   [output]  dir checkpoint metrics
//   [synth]   seed entities relations holdout out
//   [ablate]  modes branch_pairs train_steps
//   [gradcheck] dim entities coords seed
//   [patterns] min_support min_confidence
//
// '#' starts a comment. Later assignments win.

#include "gamma/model.hpp"
#include "gamma/patterns.hpp"
#include "gamma/synthkg.hpp"
#include "gamma/train.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gammakg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::vector<std::string> train;
  std::vector<std::string> eval;
  std::optional<TaskMode> task_mode;
};

struct OutputConfig {
  std::string dir = "run";
  std::string checkpoint;  // defaults to <dir>/best.ckpt
  std::string metrics;     // defaults to <dir>/metrics.jsonl
};

struct SynthConfig {
  SynthSpec spec;
  std::string out = "data/synth";
};

struct AblateConfig {
  std::vector<FusionMode> modes{FusionMode::Full,     FusionMode::NoAttention,         FusionMode::NoQuery,
                                FusionMode::NoKey,    FusionMode::SumInsteadOfConcat, FusionMode::EarlyFusion};
  std::vector<std::pair<BranchKind, BranchKind>> branch_pairs = all_branch_pairs();
  /// Optimizer steps per epoch in each cell (0 = train.steps_per_epoch).
  int train_steps = 0;

  static std::vector<std::pair<BranchKind, BranchKind>> all_branch_pairs();
};

struct GradcheckConfig {
  int dim = 8;
  int entities = 5;
  int coords = 32;
  std::uint64_t seed = 7;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  OutputConfig output;
  SynthConfig synth;
  AblateConfig ablate;
  GradcheckConfig gradcheck;
  PatternThresholds patterns;
  std::size_t max_valid_queries = 0;

  /// Assigns one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& section, const std::string& key, const std::string& value);
  /// Effective configuration in the same text format.
  std::string to_text() const;
  void validate() const;

  std::filesystem::path checkpoint_path() const;
  std::filesystem::path metrics_path() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// `section.key=value`.
void apply_override(RunConfig& config, const std::string& assignment);

/// Applies GAMMA_SEED (train and synth seeds) when set.
void apply_seed_env(RunConfig& config);

}  // namespace gammakg
