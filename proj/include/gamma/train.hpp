#pragma once

// Multi-graph pretraining: graph sampling, negative corruption,
// self-adversarially weighted cross-entropy with the entropy term, AdamW,
// gradient accumulation, and validation-guided checkpoint selection.

#include "gamma/model.hpp"
#include "gamma/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gammakg {

struct DatasetSplit;

struct TrainConfig {
  double learning_rate = 5e-4;
  int epochs = 10;
  int batch_size = 64;
  int num_negatives = 128;
  double adv_temperature = 1.0;
  int grad_accum = 1;
  double aux_weight = 1.0;
  double beta = 0.01;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int steps_per_epoch = 100;
  /// Hide each positive triple (and its inverse) from its own propagation.
  bool remove_query_edges = true;

  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// AdamW with bias-corrected moments and decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<ad::Parameter*> params, double lr, double weight_decay = 0.0, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();
  long steps() const noexcept { return step_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<ad::Tensor> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  long step_ = 0;
};

/// Index drawn with probability proportional to `sizes[i]`.
std::size_t sample_training_graph(std::span<const std::size_t> sizes, Rng& rng);
std::size_t sample_training_graph(std::span<const KnowledgeGraph* const> graphs, Rng& rng);

struct Batch {
  /// rows[i][0] is the positive; rows[i][1..] are its corruptions.
  std::vector<std::vector<Triple>> rows;
  /// head_corrupted[i][j] for j >= 1; entry 0 is unused.
  std::vector<std::vector<char>> head_corrupted;

  std::size_t size() const noexcept { return rows.size(); }
};

Batch build_batch(const KnowledgeGraph& kg, Rng& rng, int batch_size, int num_negatives);

/// Column 0 gets weight 1; the rest softmax(score / tau), or uniform when
/// tau == 0. Values only, no gradient.
ad::Tensor self_adversarial_weights(const ad::Tensor& scores, double tau);

double weighted_bce_loss(const ad::Tensor& scores, const ad::Tensor& targets, const ad::Tensor& weights);

/// L_main - aux_weight * beta * L_ent.
double total_loss(double main_loss, double entropy, double beta, double aux_weight);

struct StepStats {
  double main_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Total loss of one batch, built on `tape`.
ad::Var batch_loss(ad::Tape& tape, GammaModel& model, const GraphContext& ctx, const Batch& batch,
                   const TrainConfig& cfg, Rng& rng, StepStats* stats = nullptr);

/// Forward + backward for one batch; gradients are added to the model's
/// parameters, scaled by `loss_scale`.
StepStats accumulate_batch_gradients(GammaModel& model, const GraphContext& ctx, const Batch& batch,
                                     const TrainConfig& cfg, Rng& rng, double loss_scale = 1.0);

struct CheckpointMeta {
  int epoch = 0;
  std::string path;
  std::vector<std::pair<std::string, double>> valid_mrr;
  double mean_valid_mrr = 0.0;
};

struct PretrainOptions {
  /// Directory for per-epoch checkpoint files; empty keeps them in memory.
  std::string checkpoint_dir;
  /// Line-delimited JSON training log, one record per optimizer step.
  std::ostream* log = nullptr;
  /// Validation queries per dataset (0 = all).
  std::size_t max_valid_queries = 0;
};

struct PretrainResult {
  CheckpointMeta best;
  std::vector<CheckpointMeta> history;
  double final_loss = 0.0;
  /// Model weights of the best checkpoint, as stored.
  std::string best_checkpoint;
};

/// Trains on the (augmented) training graphs, checkpoints every epoch, and
/// loads the checkpoint with the best mean validation MRR into `model`.
PretrainResult pretrain(GammaModel& model, std::span<const KnowledgeGraph* const> graphs,
                        std::span<const DatasetSplit* const> validation, const TrainConfig& cfg,
                        const PretrainOptions& options = {});

}  // namespace gammakg
