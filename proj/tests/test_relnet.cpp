#include "gamma/relnet.hpp"
#include "gamma/rng.hpp"

#include <gtest/gtest.h>

#include <queue>
#include <vector>

using namespace gammakg;

namespace {

RelationEncoderParams oracle_params(int dim, int layers, std::uint64_t seed = 1) {
  Rng rng(seed);
  RelationEncoderParams p = RelationEncoderParams::init(dim, layers, rng);
  p.oracle_mode = true;
  return p;
}

RelationGraph graph_of(int nodes, std::vector<RelationEdge> edges) {
  RelationGraph g;
  g.num_rel_nodes = nodes;
  g.edges = std::move(edges);
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

// Relation nodes within `hops` directed typed hops of `start`.
std::vector<bool> reachable(const RelationGraph& g, int start, int hops) {
  std::vector<int> depth(static_cast<std::size_t>(g.num_rel_nodes), -1);
  std::queue<int> frontier;
  depth[static_cast<std::size_t>(start)] = 0;
  frontier.push(start);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    if (depth[static_cast<std::size_t>(u)] == hops) continue;
    for (const auto& e : g.edges) {
      if (e.src == u && depth[static_cast<std::size_t>(e.dst)] < 0) {
        depth[static_cast<std::size_t>(e.dst)] = depth[static_cast<std::size_t>(u)] + 1;
        frontier.push(e.dst);
      }
    }
  }
  std::vector<bool> out;
  for (int d : depth) out.push_back(d >= 0);
  return out;
}

KnowledgeGraph random_kg(Rng& rng) {
  const int n = 3 + static_cast<int>(rng.index(8));
  const int r = 2 + static_cast<int>(rng.index(4));
  std::vector<Triple> triples;
  const int m = 1 + static_cast<int>(rng.index(10));
  for (int i = 0; i < m; ++i) {
    triples.push_back({static_cast<int>(rng.index(n)), static_cast<int>(rng.index(r)), static_cast<int>(rng.index(n))});
  }
  return KnowledgeGraph(n, r, triples);
}

}  // namespace

TEST(EncodeRelations, BoundaryOnlyWithoutEdges) {
  auto params = oracle_params(3, 2);
  const RelationEmbeddings out = encode_relations(graph_of(1, {}), 0, params);
  ASSERT_EQ(out.matrix.rows(), 1);
  EXPECT_EQ(out.matrix, ad::Tensor::Ones(1, 3));
  EXPECT_EQ(out.query_relation, 0);
}

TEST(EncodeRelations, OneEdgeHandPropagation) {
  auto params = oracle_params(2, 1);
  params.edge_type_embeddings.value.row(int(EdgeType::H2T)).setConstant(2.0);
  const RelationGraph g = graph_of(2, {{0, EdgeType::H2T, 1}});
  const RelationEmbeddings out = encode_relations(g, 0, params);
  EXPECT_EQ(out.matrix.row(1), ad::Tensor::Constant(1, 2, 2.0));
  EXPECT_EQ(out.matrix.row(0), ad::Tensor::Ones(1, 2));
}

TEST(EncodeRelations, UnreachableRowsAreZero) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const KnowledgeGraph kg = augment_inverses(random_kg(rng));
    const RelationGraph g = build_relation_graph(kg);
    const int layers = 1 + static_cast<int>(rng.index(3));
    auto params = oracle_params(4, layers, seed);
    const int query = static_cast<int>(rng.index(static_cast<std::uint64_t>(g.num_rel_nodes)));
    const RelationEmbeddings out = encode_relations(g, query, params);
    const auto reach = reachable(g, query, layers);
    for (int r = 0; r < g.num_rel_nodes; ++r) {
      if (!reach[static_cast<std::size_t>(r)]) {
        EXPECT_EQ(out.matrix.row(r).cwiseAbs().sum(), 0.0) << "seed " << seed << " relation " << r;
      }
    }
  }
}

TEST(EncodeRelations, ZeroEdgeEmbeddingsLeaveOnlyQueryRow) {
  Rng rng(5);
  const KnowledgeGraph kg = augment_inverses(KnowledgeGraph(4, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}}));
  const RelationGraph g = build_relation_graph(kg);
  RelationEncoderParams params = RelationEncoderParams::init(6, 3, rng);
  params.edge_type_embeddings.value.setZero();
  for (auto& layer : params.updates) layer.bias.value.setZero();
  const RelationEmbeddings out = encode_relations(g, 1, params);
  for (int r = 0; r < g.num_rel_nodes; ++r) {
    if (r != 1) {
      EXPECT_EQ(out.matrix.row(r).cwiseAbs().sum(), 0.0);
    }
  }
  EXPECT_GT(out.matrix.row(1).cwiseAbs().sum(), 0.0);
}

TEST(EncodeRelations, PermutationEquivariant) {
  Rng rng(8);
  const KnowledgeGraph kg = augment_inverses(KnowledgeGraph(5, 3, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}, {3, 0, 4}}));
  const RelationGraph g = build_relation_graph(kg);
  const int n = g.num_rel_nodes;
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i * 5 + 2) % n;
  RelationGraph permuted;
  permuted.num_rel_nodes = n;
  for (const auto& e : g.edges) {
    permuted.edges.push_back({perm[static_cast<std::size_t>(e.src)], e.type, perm[static_cast<std::size_t>(e.dst)]});
  }
  std::sort(permuted.edges.begin(), permuted.edges.end());
  RelationEncoderParams params = RelationEncoderParams::init(4, 3, rng);
  const int query = 2;
  const auto a = encode_relations(g, query, params);
  const auto b = encode_relations(permuted, perm[query], params);
  for (int r = 0; r < n; ++r) {
    EXPECT_LT((a.matrix.row(r) - b.matrix.row(perm[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EncodeRelations, ShapeAndRangeChecks) {
  Rng rng(2);
  const RelationGraph g = build_relation_graph(augment_inverses(KnowledgeGraph(3, 2, {{0, 0, 1}, {1, 1, 2}})));
  RelationEncoderParams params = RelationEncoderParams::init(8, 2, rng);
  const auto out = encode_relations(g, 3, params);
  EXPECT_EQ(out.matrix.rows(), 4);
  EXPECT_EQ(out.matrix.cols(), 8);
  EXPECT_TRUE(out.matrix.allFinite());
  EXPECT_THROW(encode_relations(g, 4, params), InvalidInput);
  EXPECT_THROW(encode_relations(g, -1, params), InvalidInput);
}
