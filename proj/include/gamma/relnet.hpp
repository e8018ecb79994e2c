#pragma once

// Query-conditioned relation encoder: message passing over the relation
// graph starting from an all-ones indicator at the query relation.

#include "gamma/autodiff.hpp"
#include "gamma/kgstore.hpp"
#include "gamma/layers.hpp"

#include <vector>

namespace gammakg {

struct RelationEncoderParams {
  int dim = 0;
  int layers = 0;
  /// Skips the per-layer affine + relu update (hand-checkable propagation).
  bool oracle_mode = false;
  /// Standardises each row between the affine map and the relu.
  bool layer_norm = true;
  bool residual = false;
  ad::Parameter edge_type_embeddings;  // kNumEdgeTypes x dim
  std::vector<Linear> updates;

  static RelationEncoderParams init(int dim, int layers, Rng& rng);
  void collect(std::vector<ad::Parameter*>& out);
};

struct RelationEmbeddings {
  ad::Tensor matrix;  // num_rel_nodes x dim
  int query_relation = 0;
};

ad::Var encode_relations(ad::Tape& tape, const RelationGraph& graph, int query_relation,
                         RelationEncoderParams& params);

RelationEmbeddings encode_relations(const RelationGraph& graph, int query_relation,
                                    RelationEncoderParams& params);

}  // namespace gammakg
