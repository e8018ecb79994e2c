#pragma once

// Conditional Bellman-Ford propagation over the entity graph, one stack of
// layers per algebraic branch.

#include "gamma/autodiff.hpp"
#include "gamma/kgstore.hpp"
#include "gamma/layers.hpp"
#include "gamma/relnet.hpp"

#include <span>
#include <vector>

namespace gammakg {

struct Query {
  int head = 0;
  int relation = 0;
};

struct BranchParams {
  BranchKind kind = BranchKind::Real;
  int dim = 0;
  int layers = 0;
  bool oracle_mode = false;
  bool layer_norm = true;
  bool residual = false;
  std::vector<Linear> relation_proj;
  std::vector<Linear> updates;

  static BranchParams init(BranchKind kind, int dim, int layers, const std::string& name, Rng& rng);
  void collect(std::vector<ad::Parameter*>& out);
};

/// Flattened message-passing edges (src --rel--> dst).
struct EdgeIndex {
  int num_entities = 0;
  std::vector<int> src, rel, dst;

  static EdgeIndex from_graph(const KnowledgeGraph& kg);
  /// Same edges minus every triple in `removed` (and nothing else).
  EdgeIndex without(std::span<const Triple> removed) const;
  std::size_t size() const noexcept { return src.size(); }
};

struct EntityStates {
  ad::Tensor matrix;  // |E| x dim
  BranchKind branch = BranchKind::Real;
  Query query;
};

/// Row `query.head` holds rel_embs[query.relation]; every other row is zero.
ad::Var query_boundary(const ad::Var& rel_embs, Query query, int num_entities);

/// One propagation layer: project relations, send relmul messages along
/// every edge, sum at the destination, re-add the boundary, update.
ad::Var branch_layer(ad::Tape& tape, const EdgeIndex& edges, const ad::Var& rel_embs,
                     const ad::Var& boundary, const ad::Var& state, BranchParams& params, int layer);

ad::Var propagate_branch(ad::Tape& tape, const EdgeIndex& edges, const ad::Var& rel_embs, Query query,
                         BranchParams& params);

EntityStates propagate_branch(const KnowledgeGraph& kg, const RelationEmbeddings& rel_embs, Query query,
                              BranchParams& params);

}  // namespace gammakg
