#include "gamma/model.hpp"

#include <sstream>

namespace gammakg {

void ModelConfig::validate() const {
  if (dim < 2) throw InvalidInput("model dim must be at least 2");
  if (relation_layers < 1 || entity_layers < 1) throw InvalidInput("layer counts must be positive");
  if (branches.empty()) throw InvalidInput("at least one branch is required");
  for (BranchKind k : branches) check_width(k, dim);
  if (!(fusion.kappa > 0.0)) throw InvalidInput("kappa must be positive");
  if (fusion.lambda_mix < 0.0 || fusion.lambda_mix > 1.0) throw InvalidInput("lambda must lie in [0, 1]");
  if (fusion.attn_dropout < 0.0 || fusion.attn_dropout >= 1.0) throw InvalidInput("attn_dropout must lie in [0, 1)");
  if (fusion.att_dim < 0) throw InvalidInput("att_dim must be non-negative");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "dim = " << dim << '\n'
     << "relation_layers = " << relation_layers << '\n'
     << "entity_layers = " << entity_layers << '\n'
     << "branches = ";
  for (std::size_t i = 0; i < branches.size(); ++i) os << (i ? "," : "") << to_string(branches[i]);
  os << '\n'
     << "fusion_mode = " << to_string(fusion_mode) << '\n'
     << "kappa = " << fusion.kappa << '\n'
     << "lambda = " << fusion.lambda_mix << '\n'
     << "attn_dropout = " << fusion.attn_dropout << '\n'
     << "att_dim = " << fusion.att_dim << '\n'
     << "score_real_part_only = " << (fusion.score_real_part_only ? "true" : "false") << '\n'
     << "oracle_mode = " << (oracle_mode ? "true" : "false") << '\n'
     << "layer_norm = " << (layer_norm ? "true" : "false") << '\n'
     << "residual = " << (residual ? "true" : "false") << '\n';
  return os.str();
}

GraphContext GraphContext::build(const KnowledgeGraph& augmented) {
  if (!augmented.augmented()) throw StateError("model graphs must be inverse-augmented");
  GraphContext ctx;
  ctx.graph = &augmented;
  ctx.relation_graph = build_relation_graph(augmented);
  ctx.edges = EdgeIndex::from_graph(augmented);
  return ctx;
}

GammaModel::GammaModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  relnet_ = RelationEncoderParams::init(config_.dim, config_.relation_layers, rng);
  relnet_.oracle_mode = config_.oracle_mode;
  relnet_.layer_norm = config_.layer_norm;
  relnet_.residual = config_.residual;
  for (std::size_t k = 0; k < config_.branches.size(); ++k) {
    const std::string name = "branch" + std::to_string(k) + "." + std::string(to_string(config_.branches[k]));
    branches_.push_back(BranchParams::init(config_.branches[k], config_.dim, config_.entity_layers, name, rng));
    branches_.back().oracle_mode = config_.oracle_mode;
    branches_.back().layer_norm = config_.layer_norm;
    branches_.back().residual = config_.residual;
  }
  fusion_ = FusionParams::init(config_.fusion_mode, config_.fusion, config_.branches, config_.dim, rng);
}

std::vector<ad::Parameter*> GammaModel::parameters() {
  std::vector<ad::Parameter*> out;
  relnet_.collect(out);
  for (BranchParams& b : branches_) b.collect(out);
  fusion_.collect(out);
  return out;
}

std::size_t GammaModel::num_parameters() {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

std::vector<std::pair<std::string, std::size_t>> GammaModel::parameter_breakdown() {
  auto count = [](const std::vector<ad::Parameter*>& ps) {
    std::size_t n = 0;
    for (const ad::Parameter* p : ps) n += static_cast<std::size_t>(p->size());
    return n;
  };
  std::vector<std::pair<std::string, std::size_t>> out;
  std::vector<ad::Parameter*> ps;
  relnet_.collect(ps);
  out.emplace_back("relnet", count(ps));
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    ps.clear();
    branches_[k].collect(ps);
    out.emplace_back("branch" + std::to_string(k) + "." + std::string(to_string(branches_[k].kind)), count(ps));
  }
  ps.clear();
  fusion_.collect(ps);
  out.emplace_back("fusion", count(ps));
  return out;
}

ad::Var GammaModel::relation_embeddings(ad::Tape& tape, const GraphContext& ctx, int query_relation) {
  return encode_relations(tape, ctx.relation_graph, query_relation, relnet_);
}

QueryOutput GammaModel::forward(ad::Tape& tape, const GraphContext& ctx, Query query,
                                std::span<const int> candidates, bool training, Rng* rng,
                                const ad::Var* rel_embs, const EdgeIndex* edges) {
  const ad::Var rel = rel_embs != nullptr ? *rel_embs : relation_embeddings(tape, ctx, query.relation);
  const EdgeIndex& e = edges != nullptr ? *edges : ctx.edges;
  if (rel.rows() != ctx.graph->num_relations()) throw InvalidInput("relation embeddings do not match the graph");
  const int rel_row[] = {query.relation};
  const ad::Var query_emb = ad::gather_rows(rel, rel_row);

  QueryOutput out;
  if (config_.fusion_mode != FusionMode::EarlyFusion) {
    std::vector<ad::Var> states;
    states.reserve(branches_.size());
    for (BranchParams& b : branches_) {
      states.push_back(ad::gather_rows(propagate_branch(tape, e, rel, query, b), candidates));
    }
    const AttentionVars att = compute_attention(tape, states, query_emb, fusion_, training, rng);
    out.scores = fuse_and_score(tape, att.weights, states, fusion_);
    out.weights = att.weights;
    out.entropy = att.entropy;
    out.entropy_rows = static_cast<ad::Index>(candidates.size());
    return out;
  }

  // early fusion: every layer's branch outputs are merged before the next layer
  const ad::Var boundary = query_boundary(rel, query, e.num_entities);
  ad::Var shared = boundary;
  std::vector<ad::Var> entropies;
  AttentionVars att;
  for (int l = 0; l < config_.entity_layers; ++l) {
    std::vector<ad::Var> states;
    for (BranchParams& b : branches_) states.push_back(branch_layer(tape, e, rel, boundary, shared, b, l));
    att = compute_attention(tape, states, query_emb, fusion_, training, rng);
    shared = fuse(att.weights, states, fusion_);
    entropies.push_back(att.entropy);
  }
  out.scores = score(tape, ad::gather_rows(shared, candidates), fusion_);
  out.weights = ad::gather_rows(att.weights, candidates);
  out.entropy = ad::affine_scalar(ad::add_all(entropies), 1.0 / static_cast<double>(entropies.size()));
  out.entropy_rows = static_cast<ad::Index>(candidates.size());
  return out;
}

std::vector<double> GammaModel::score_all(const GraphContext& ctx, Query query) {
  ad::Tape tape;
  std::vector<int> all(static_cast<std::size_t>(ctx.num_entities()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const QueryOutput out = forward(tape, ctx, query, all, false, nullptr);
  const ad::Tensor& s = out.scores.value();
  return {s.data(), s.data() + s.size()};
}

}  // namespace gammakg
