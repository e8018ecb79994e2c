#include "gamma/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gammakg {

std::string_view to_string(FusionMode mode) noexcept {
  switch (mode) {
    case FusionMode::Full: return "full";
    case FusionMode::NoAttention: return "no_attention";
    case FusionMode::NoQuery: return "no_query";
    case FusionMode::NoKey: return "no_key";
    case FusionMode::SumInsteadOfConcat: return "sum";
    case FusionMode::EarlyFusion: return "early";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(std::string_view text) {
  for (FusionMode m : {FusionMode::Full, FusionMode::NoAttention, FusionMode::NoQuery, FusionMode::NoKey,
                       FusionMode::SumInsteadOfConcat, FusionMode::EarlyFusion}) {
    if (text == to_string(m)) return m;
  }
  if (text == "sum_instead_of_concat" || text == "no_concat") return FusionMode::SumInsteadOfConcat;
  if (text == "early_fusion") return FusionMode::EarlyFusion;
  throw InvalidInput("unknown fusion mode '" + std::string(text) + "'");
}

FusionParams FusionParams::init(FusionMode mode, const FusionConfig& config, std::vector<BranchKind> kinds,
                                int dim, Rng& rng) {
  if (kinds.empty()) throw InvalidInput("fusion needs at least one branch");
  if (!(config.kappa > 0.0)) throw InvalidInput("attention temperature must be positive");
  if (config.lambda_mix < 0.0 || config.lambda_mix > 1.0) throw InvalidInput("lambda must lie in [0, 1]");
  if (config.attn_dropout < 0.0 || config.attn_dropout >= 1.0) throw InvalidInput("dropout must lie in [0, 1)");
  FusionParams p;
  p.mode = mode;
  p.config = config;
  p.kinds = std::move(kinds);
  p.dim = dim;
  const int att = p.att_dim();
  const auto k = static_cast<ad::Index>(p.kinds.size());
  if (mode != FusionMode::NoAttention) {
    if (mode == FusionMode::NoQuery) {
      ad::Tensor c(1, att);
      for (ad::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1.0, 1.0);
      p.const_context = ad::Parameter("fusion.const_context", std::move(c));
    } else {
      p.ctx = Linear("fusion.ctx", dim, att, rng);
    }
    if (mode == FusionMode::NoKey) {
      ad::Tensor keys(k, att);
      for (ad::Index i = 0; i < keys.size(); ++i) keys.data()[i] = rng.uniform(-1.0, 1.0);
      p.const_keys = ad::Parameter("fusion.const_keys", std::move(keys));
    } else {
      p.key = Linear("fusion.key", dim, att, rng);
    }
  }
  const auto hidden = static_cast<ad::Index>(k * dim);
  p.psi_hidden = Linear("fusion.psi0", p.psi_input_width(), hidden, rng);
  p.psi_out = Linear("fusion.psi1", hidden, 1, rng);
  return p;
}

void FusionParams::collect(std::vector<ad::Parameter*>& out) {
  if (mode != FusionMode::NoAttention) {
    if (mode == FusionMode::NoQuery) {
      out.push_back(&const_context);
    } else {
      ctx.collect(out);
    }
    if (mode == FusionMode::NoKey) {
      out.push_back(&const_keys);
    } else {
      key.collect(out);
    }
  }
  psi_hidden.collect(out);
  psi_out.collect(out);
}

namespace {

int scored_width(BranchKind kind, int dim, bool real_only) {
  return real_only && components(kind) == 2 ? dim / 2 : dim;
}

bool all_paired(const std::vector<BranchKind>& kinds) {
  return std::all_of(kinds.begin(), kinds.end(), [](BranchKind k) { return components(k) == 2; });
}

}  // namespace

int FusionParams::psi_input_width() const {
  const bool real_only = config.score_real_part_only;
  if (!concatenates()) return real_only && all_paired(kinds) ? dim / 2 : dim;
  int w = 0;
  for (BranchKind k : kinds) w += scored_width(k, dim, real_only);
  return w;
}

AttentionVars compute_attention(ad::Tape& tape, std::span<const ad::Var> branch_states,
                                const ad::Var& query_embedding, FusionParams& params, bool training,
                                Rng* dropout_rng) {
  const auto k = static_cast<ad::Index>(branch_states.size());
  if (k == 0) throw InvalidInput("attention over zero branches");
  if (k != params.num_branches()) throw InvalidInput("branch count does not match fusion parameters");
  const ad::Index n = branch_states[0].rows();
  for (const ad::Var& s : branch_states) {
    if (s.rows() != n || s.cols() != params.dim) throw InvalidInput("branch states differ in shape");
  }
  if (query_embedding.rows() != 1 || query_embedding.cols() != params.dim) {
    throw InvalidInput("query embedding must be a 1 x d row");
  }

  if (params.mode == FusionMode::NoAttention) {
    ad::Tensor entropy(1, 1);
    entropy(0, 0) = std::log(static_cast<double>(k));
    return {tape.constant(ad::Tensor::Constant(n, k, 1.0 / static_cast<double>(k))),
            tape.constant(std::move(entropy))};
  }

  const ad::Var context = params.mode == FusionMode::NoQuery
                              ? ad::l2_normalize_rows(tape.parameter(params.const_context))
                              : ad::l2_normalize_rows(params.ctx(tape, query_embedding));
  std::vector<ad::Var> cosines;
  cosines.reserve(static_cast<std::size_t>(k));
  if (params.mode == FusionMode::NoKey) {
    const ad::Var keys = ad::l2_normalize_rows(tape.parameter(params.const_keys));
    for (ad::Index b = 0; b < k; ++b) {
      const std::vector<int> rows(static_cast<std::size_t>(n), static_cast<int>(b));
      cosines.push_back(ad::cosine_rows(ad::gather_rows(keys, rows), context));
    }
  } else {
    for (const ad::Var& s : branch_states) {
      cosines.push_back(ad::cosine_rows(ad::l2_normalize_rows(params.key(tape, s)), context));
    }
  }
  const double lambda = params.config.lambda_mix;
  const ad::Var alpha = ad::softmax_rows(ad::affine_scalar(ad::concat_cols(cosines), 1.0 / params.config.kappa));
  ad::Var mixed = ad::affine_scalar(alpha, 1.0 - lambda, lambda / static_cast<double>(k));
  const ad::Var entropy = ad::mean_row_entropy(mixed);

  const double p = params.config.attn_dropout;
  if (training && p > 0.0 && dropout_rng != nullptr && k > 1) {
    ad::Tensor mask(n, k);
    for (ad::Index i = 0; i < n; ++i) {
      for (ad::Index b = 0; b < k; ++b) mask(i, b) = dropout_rng->bernoulli(p) ? 0.0 : 1.0;
      if (mask.row(i).sum() == 0.0) mask.row(i).setOnes();
    }
    mixed = ad::normalize_row_sums(ad::mul(mixed, tape.constant(std::move(mask))));
  }
  return {mixed, entropy};
}

ad::Var fuse(const ad::Var& weights, std::span<const ad::Var> branch_states, const FusionParams& params) {
  const auto k = static_cast<ad::Index>(branch_states.size());
  if (weights.cols() != k) throw InvalidInput("attention weights do not match branch count");
  std::vector<ad::Var> parts;
  parts.reserve(branch_states.size());
  for (ad::Index b = 0; b < k; ++b) {
    parts.push_back(ad::scale_rows(branch_states[static_cast<std::size_t>(b)], ad::slice_cols(weights, b, 1)));
  }
  return params.concatenates() ? ad::concat_cols(parts) : ad::add_all(parts);
}

ad::Var score(ad::Tape& tape, const ad::Var& fused, FusionParams& params) {
  ad::Var input = fused;
  if (params.config.score_real_part_only) {
    if (params.concatenates()) {
      std::vector<ad::Var> halves;
      for (std::size_t b = 0; b < params.kinds.size(); ++b) {
        halves.push_back(ad::slice_cols(fused, static_cast<ad::Index>(b) * params.dim,
                                        scored_width(params.kinds[b], params.dim, true)));
      }
      input = ad::concat_cols(halves);
    } else if (all_paired(params.kinds)) {
      input = ad::slice_cols(fused, 0, params.dim / 2);
    }
  }
  if (input.cols() != params.psi_input_width()) throw InvalidInput("psi input width mismatch");
  return params.psi_out(tape, ad::relu(params.psi_hidden(tape, input)));
}

ad::Var fuse_and_score(ad::Tape& tape, const ad::Var& weights, std::span<const ad::Var> branch_states,
                       FusionParams& params) {
  return score(tape, fuse(weights, branch_states, params), params);
}

namespace {

std::vector<ad::Var> as_constants(ad::Tape& tape, std::span<const EntityStates> states) {
  std::vector<ad::Var> out;
  for (const EntityStates& s : states) out.push_back(tape.constant(s.matrix));
  return out;
}

}  // namespace

AttentionOutput compute_attention(std::span<const EntityStates> branch_states, const ad::Tensor& query_embedding,
                                  FusionParams& params, bool training, Rng* dropout_rng) {
  ad::Tape tape;
  const auto states = as_constants(tape, branch_states);
  const AttentionVars att =
      compute_attention(tape, states, tape.constant(query_embedding), params, training, dropout_rng);
  return {att.weights.value(), fuse(att.weights, states, params).value(), att.entropy.scalar()};
}

ad::Tensor fuse_and_score(const AttentionOutput& attention, std::span<const EntityStates> branch_states,
                          FusionParams& params) {
  ad::Tape tape;
  const auto states = as_constants(tape, branch_states);
  return fuse_and_score(tape, tape.constant(attention.weights), states, params).value();
}

double entropy_regularizer(const ad::Tensor& weights) {
  if (weights.rows() == 0) throw InvalidInput("entropy of an empty weight matrix");
  for (ad::Index i = 0; i < weights.rows(); ++i) {
    if (std::abs(weights.row(i).sum() - 1.0) > 1e-6) {
      throw InvalidInput("attention row " + std::to_string(i) + " does not sum to one");
    }
  }
  double h = 0.0;
  for (ad::Index i = 0; i < weights.size(); ++i) {
    const double w = weights.data()[i];
    if (w > 0.0) h -= w * std::log(w);
  }
  return h / static_cast<double>(weights.rows());
}

}  // namespace gammakg
