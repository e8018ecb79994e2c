#pragma once

// The full multi-branch model: relation encoder, K entity branches, and the
// fusion/scoring head, plus the per-graph context it runs on.

#include "gamma/entnet.hpp"
#include "gamma/fusion.hpp"
#include "gamma/kgstore.hpp"
#include "gamma/relnet.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gammakg {

struct ModelConfig {
  int dim = 64;
  int relation_layers = 6;
  int entity_layers = 6;
  std::vector<BranchKind> branches{BranchKind::Complex, BranchKind::SplitComplex};
  FusionMode fusion_mode = FusionMode::Full;
  FusionConfig fusion;
  bool oracle_mode = false;
  /// Row standardisation inside every node update (relation and entity).
  bool layer_norm = true;
  /// Adds each layer's input to its output (relation and entity).
  bool residual = true;

  void validate() const;
  /// key = value lines; part of every checkpoint.
  std::string to_text() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Everything the model needs from one (inverse-augmented) graph.
struct GraphContext {
  const KnowledgeGraph* graph = nullptr;
  RelationGraph relation_graph;
  EdgeIndex edges;

  static GraphContext build(const KnowledgeGraph& augmented);
  int num_entities() const { return graph->num_entities(); }
};

struct QueryOutput {
  ad::Var scores;   // M x 1, one per candidate
  ad::Var weights;  // attention over branches for the scored rows
  ad::Var entropy;  // mean row entropy for this query
  ad::Index entropy_rows = 0;
};

class GammaModel {
 public:
  GammaModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  /// Stable-ordered list of every trainable tensor.
  std::vector<ad::Parameter*> parameters();
  std::size_t num_parameters();
  /// Parameter counts grouped by module (relnet, branch names, fusion).
  std::vector<std::pair<std::string, std::size_t>> parameter_breakdown();

  /// Relation embeddings for a query relation; memoised per tape by callers.
  ad::Var relation_embeddings(ad::Tape& tape, const GraphContext& ctx, int query_relation);

  /// Scores `candidates` as tails of (query.head, query.relation, ?).
  /// `edges` defaults to ctx.edges.
  QueryOutput forward(ad::Tape& tape, const GraphContext& ctx, Query query, std::span<const int> candidates,
                      bool training, Rng* rng, const ad::Var* rel_embs = nullptr,
                      const EdgeIndex* edges = nullptr);

  /// Evaluation-time scores over all entities of the context graph.
  std::vector<double> score_all(const GraphContext& ctx, Query query);

  RelationEncoderParams& relation_encoder() noexcept { return relnet_; }
  BranchParams& branch(std::size_t k) { return branches_.at(k); }
  FusionParams& fusion() noexcept { return fusion_; }

 private:
  ModelConfig config_;
  RelationEncoderParams relnet_;
  std::vector<BranchParams> branches_;
  FusionParams fusion_;
};

}  // namespace gammakg
