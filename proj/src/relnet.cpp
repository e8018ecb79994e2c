#include "gamma/relnet.hpp"

#include <string>

namespace gammakg {

RelationEncoderParams RelationEncoderParams::init(int dim, int layers, Rng& rng) {
  if (dim < 2) throw InvalidInput("relation encoder width must be at least 2");
  if (layers < 1) throw InvalidInput("relation encoder needs at least one layer");
  RelationEncoderParams p;
  p.dim = dim;
  p.layers = layers;
  ad::Tensor emb(kNumEdgeTypes, dim);
  for (ad::Index i = 0; i < emb.size(); ++i) emb.data()[i] = rng.uniform(-1.0, 1.0);
  p.edge_type_embeddings = ad::Parameter("relnet.edge_type", std::move(emb));
  for (int l = 0; l < layers; ++l) {
    p.updates.emplace_back("relnet.layer" + std::to_string(l), dim, dim, rng);
  }
  return p;
}

void RelationEncoderParams::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&edge_type_embeddings);
  for (Linear& l : updates) l.collect(out);
}

ad::Var encode_relations(ad::Tape& tape, const RelationGraph& graph, int query_relation,
                         RelationEncoderParams& params) {
  if (query_relation < 0 || query_relation >= graph.num_rel_nodes) {
    throw InvalidInput("query relation " + std::to_string(query_relation) + " out of range");
  }
  const ad::Index n = graph.num_rel_nodes;
  std::vector<int> src, type, dst;
  src.reserve(graph.edges.size());
  type.reserve(graph.edges.size());
  dst.reserve(graph.edges.size());
  for (const RelationEdge& e : graph.edges) {
    src.push_back(e.src);
    type.push_back(static_cast<int>(e.type));
    dst.push_back(e.dst);
  }

  ad::Tensor indicator = ad::Tensor::Zero(n, params.dim);
  indicator.row(query_relation).setOnes();
  const ad::Var boundary = tape.constant(std::move(indicator));
  const ad::Var edge_emb = tape.parameter(params.edge_type_embeddings);

  ad::Var h = boundary;
  for (int l = 0; l < params.layers; ++l) {
    ad::Var agg = boundary;
    if (!src.empty()) {
      // DistMult message h_src * e_type, summed at dst
      agg = ad::add(ad::relmul_scatter(BranchKind::Real, h, edge_emb, src, type, dst, n), boundary);
    }
    if (params.oracle_mode) {
      h = agg;
      continue;
    }
    ad::Var pre = params.updates[static_cast<std::size_t>(l)](tape, agg);
    if (params.layer_norm) pre = ad::layer_norm_rows(pre);
    h = params.residual ? ad::add(ad::relu(pre), h) : ad::relu(pre);
  }
  return h;
}

RelationEmbeddings encode_relations(const RelationGraph& graph, int query_relation,
                                    RelationEncoderParams& params) {
  ad::Tape tape;
  const ad::Var h = encode_relations(tape, graph, query_relation, params);
  return {h.value(), query_relation};
}

}  // namespace gammakg
