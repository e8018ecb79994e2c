#pragma once

// Query-conditioned attention over branch outputs, fused scoring, and the
// attention-entropy regulariser, including the ablation variants.

#include "gamma/autodiff.hpp"
#include "gamma/entnet.hpp"
#include "gamma/layers.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace gammakg {

enum class FusionMode { Full, NoAttention, NoQuery, NoKey, SumInsteadOfConcat, EarlyFusion };

std::string_view to_string(FusionMode mode) noexcept;
FusionMode parse_fusion_mode(std::string_view text);

struct FusionConfig {
  double kappa = 0.5;
  double lambda_mix = 0.2;
  double attn_dropout = 0.1;
  int att_dim = 0;  // 0 means "same as the branch width"
  bool score_real_part_only = false;

  bool operator==(const FusionConfig&) const = default;
};

struct FusionParams {
  FusionMode mode = FusionMode::Full;
  FusionConfig config;
  std::vector<BranchKind> kinds;
  int dim = 0;

  Linear ctx;  // W_ctx
  Linear key;  // W_key, shared by all branches
  ad::Parameter const_context;  // NoQuery only, 1 x att_dim
  ad::Parameter const_keys;     // NoKey only, K x att_dim
  Linear psi_hidden;
  Linear psi_out;

  static FusionParams init(FusionMode mode, const FusionConfig& config, std::vector<BranchKind> kinds,
                           int dim, Rng& rng);
  void collect(std::vector<ad::Parameter*>& out);

  int num_branches() const { return static_cast<int>(kinds.size()); }
  int att_dim() const { return config.att_dim > 0 ? config.att_dim : dim; }
  bool concatenates() const { return mode != FusionMode::SumInsteadOfConcat && mode != FusionMode::EarlyFusion; }
  /// Width of the fused feature that feeds psi.
  int psi_input_width() const;
};

struct AttentionVars {
  ad::Var weights;  // N x K, rows sum to one
  ad::Var entropy;  // 1 x 1, mean row entropy of the pre-dropout weights
};

/// `dropout_rng` is only consulted when `training` is set and dropout > 0.
AttentionVars compute_attention(ad::Tape& tape, std::span<const ad::Var> branch_states,
                                const ad::Var& query_embedding, FusionParams& params, bool training,
                                Rng* dropout_rng);

/// Weighted branch features: concatenation (width K*d) or sum (width d).
ad::Var fuse(const ad::Var& weights, std::span<const ad::Var> branch_states, const FusionParams& params);

/// psi applied to fused features (real halves only when configured); N x 1.
ad::Var score(ad::Tape& tape, const ad::Var& fused, FusionParams& params);

ad::Var fuse_and_score(ad::Tape& tape, const ad::Var& weights, std::span<const ad::Var> branch_states,
                       FusionParams& params);

struct AttentionOutput {
  ad::Tensor weights;
  ad::Tensor fused;
  double entropy = 0.0;
};

AttentionOutput compute_attention(std::span<const EntityStates> branch_states, const ad::Tensor& query_embedding,
                                  FusionParams& params, bool training = false, Rng* dropout_rng = nullptr);

/// Scores every row from precomputed attention.
ad::Tensor fuse_and_score(const AttentionOutput& attention, std::span<const EntityStates> branch_states,
                          FusionParams& params);

/// -(1/N) sum_e sum_k w log w over rows that must each sum to one.
double entropy_regularizer(const ad::Tensor& weights);

}  // namespace gammakg
