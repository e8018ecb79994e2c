#pragma once

// Command implementations shared by the `gamma` tool and the tests.

#include "gamma/config.hpp"
#include "gamma/eval.hpp"
#include "gamma/train.hpp"

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gammakg {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitCheckpointMismatch = 4,
  kExitData = 5,
  kExitTraining = 6,
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "build-relgraph", "train",    "eval",
                                              "ablate", "detect-patterns", "gradcheck", "params"};
  return names;
}

/// Loads a dataset directory, applying the configured task-mode override.
DatasetSplit load_split(const std::string& dir, const RunConfig& config);

struct DatasetMetrics {
  std::string dataset;
  Metrics metrics;
};

struct AblationRow {
  std::string cell;
  FusionMode mode = FusionMode::Full;
  std::vector<BranchKind> branches;
  std::string checkpoint;
  DatasetMetrics result;
};

/// Test-query metrics of `model` on every split.
std::vector<DatasetMetrics> evaluate_model(GammaModel& model, std::span<const DatasetSplit> splits);

void run_synth(const RunConfig& config, std::ostream& out);
void run_build_relgraph(const RunConfig& config, std::ostream& out);
PretrainResult run_train(const RunConfig& config, std::ostream& out);
std::vector<DatasetMetrics> run_eval(const RunConfig& config, std::ostream& out);
std::vector<AblationRow> run_ablate(const RunConfig& config, std::ostream& out);
void run_detect_patterns(const RunConfig& config, std::ostream& out);
ad::GradCheckReport run_gradcheck(const RunConfig& config, std::ostream& out);
std::size_t run_params(const RunConfig& config, std::ostream& out);

/// End-to-end gradient check of the training loss on a small fixed graph
/// (dropout off, uniform negative weights).
ad::GradCheckReport gradcheck_fixture(const ModelConfig& model, const GradcheckConfig& settings);

/// Dispatches `command`; maps failures to exit codes with a message on `err`.
int run_command(const std::string& command, const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace gammakg
