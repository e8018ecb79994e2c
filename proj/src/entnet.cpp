#include "gamma/entnet.hpp"

#include <algorithm>
#include <string>

namespace gammakg {

BranchParams BranchParams::init(BranchKind kind, int dim, int layers, const std::string& name, Rng& rng) {
  check_width(kind, dim);
  if (layers < 1) throw InvalidInput("branch needs at least one layer");
  BranchParams p;
  p.kind = kind;
  p.dim = dim;
  p.layers = layers;
  for (int l = 0; l < layers; ++l) {
    p.relation_proj.emplace_back(name + ".rel_proj" + std::to_string(l), dim, dim, rng);
    p.updates.emplace_back(name + ".layer" + std::to_string(l), dim, dim, rng);
  }
  return p;
}

void BranchParams::collect(std::vector<ad::Parameter*>& out) {
  for (int l = 0; l < layers; ++l) {
    relation_proj[static_cast<std::size_t>(l)].collect(out);
    updates[static_cast<std::size_t>(l)].collect(out);
  }
}

EdgeIndex EdgeIndex::from_graph(const KnowledgeGraph& kg) {
  EdgeIndex e;
  e.num_entities = kg.num_entities();
  e.src.reserve(kg.size());
  e.rel.reserve(kg.size());
  e.dst.reserve(kg.size());
  for (const Triple& t : kg.triples()) {
    e.src.push_back(t.head);
    e.rel.push_back(t.rel);
    e.dst.push_back(t.tail);
  }
  return e;
}

EdgeIndex EdgeIndex::without(std::span<const Triple> removed) const {
  EdgeIndex e;
  e.num_entities = num_entities;
  e.src.reserve(src.size());
  e.rel.reserve(src.size());
  e.dst.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Triple t{src[i], rel[i], dst[i]};
    if (std::find(removed.begin(), removed.end(), t) != removed.end()) continue;
    e.src.push_back(src[i]);
    e.rel.push_back(rel[i]);
    e.dst.push_back(dst[i]);
  }
  return e;
}

ad::Var query_boundary(const ad::Var& rel_embs, Query query, int num_entities) {
  if (query.head < 0 || query.head >= num_entities) {
    throw InvalidInput("query head " + std::to_string(query.head) + " out of range");
  }
  if (query.relation < 0 || query.relation >= rel_embs.rows()) {
    throw InvalidInput("query relation " + std::to_string(query.relation) + " out of range");
  }
  const int rel_row[] = {query.relation};
  const int head_row[] = {query.head};
  return ad::scatter_sum(ad::gather_rows(rel_embs, rel_row), head_row, num_entities);
}

ad::Var branch_layer(ad::Tape& tape, const EdgeIndex& edges, const ad::Var& rel_embs,
                     const ad::Var& boundary, const ad::Var& state, BranchParams& params, int layer) {
  const auto l = static_cast<std::size_t>(layer);
  ad::Var agg = boundary;
  if (edges.size() > 0) {
    const ad::Var rel = params.oracle_mode ? rel_embs : params.relation_proj[l](tape, rel_embs);
    const ad::Var msg = ad::relmul_scatter(params.kind, state, rel, edges.src, edges.rel, edges.dst, edges.num_entities);
    agg = ad::add(msg, boundary);
  }
  if (params.oracle_mode) return agg;
  ad::Var pre = params.updates[l](tape, agg);
  if (params.layer_norm) pre = ad::layer_norm_rows(pre);
  return params.residual ? ad::add(ad::relu(pre), state) : ad::relu(pre);
}

ad::Var propagate_branch(ad::Tape& tape, const EdgeIndex& edges, const ad::Var& rel_embs, Query query,
                         BranchParams& params) {
  if (rel_embs.cols() != params.dim) {
    throw InvalidInput("relation embedding width " + std::to_string(rel_embs.cols()) +
                       " does not match branch width " + std::to_string(params.dim));
  }
  const ad::Var boundary = query_boundary(rel_embs, query, edges.num_entities);
  ad::Var z = boundary;
  for (int l = 0; l < params.layers; ++l) z = branch_layer(tape, edges, rel_embs, boundary, z, params, l);
  return z;
}

EntityStates propagate_branch(const KnowledgeGraph& kg, const RelationEmbeddings& rel_embs, Query query,
                              BranchParams& params) {
  if (rel_embs.matrix.rows() != kg.num_relations()) {
    throw InvalidInput("relation embeddings do not cover the graph's relations");
  }
  ad::Tape tape;
  const EdgeIndex edges = EdgeIndex::from_graph(kg);
  const ad::Var z = propagate_branch(tape, edges, tape.constant(rel_embs.matrix), query, params);
  return {z.value(), params.kind, query};
}

}  // namespace gammakg
