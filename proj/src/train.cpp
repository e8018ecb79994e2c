#include "gamma/train.hpp"

#include "gamma/checkpoint.hpp"
#include "gamma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace gammakg {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
  if (epochs < 1) throw InvalidInput("epochs must be at least 1");
  if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
  if (num_negatives < 1) throw InvalidInput("num_negatives must be at least 1");
  if (adv_temperature < 0.0) throw InvalidInput("adv_temperature must be non-negative");
  if (grad_accum < 1) throw InvalidInput("grad_accum must be at least 1");
  if (aux_weight < 0.0) throw InvalidInput("aux_weight must be non-negative");
  if (beta < 0.0) throw InvalidInput("beta must be non-negative");
  if (weight_decay < 0.0) throw InvalidInput("weight_decay must be non-negative");
  if (steps_per_epoch < 1) throw InvalidInput("steps_per_epoch must be at least 1");
}

AdamW::AdamW(std::vector<ad::Parameter*> params, double lr, double weight_decay, double beta1, double beta2,
             double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (ad::Parameter* p : params_) {
    m_.push_back(ad::Tensor::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Tensor::Zero(p->value.rows(), p->value.cols()));
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) p->zero_grad();
  }
}

void AdamW::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    if (p.frozen) {
      p.zero_grad();
      continue;
    }
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    p.value *= 1.0 - lr_ * wd_;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    p.value.array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
    p.zero_grad();
  }
}

std::size_t sample_training_graph(std::span<const std::size_t> sizes, Rng& rng) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total == 0) throw TrainingError("every training graph is empty");
  std::uint64_t draw = rng.index(total);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (draw < sizes[i]) return i;
    draw -= sizes[i];
  }
  return sizes.size() - 1;
}

std::size_t sample_training_graph(std::span<const KnowledgeGraph* const> graphs, Rng& rng) {
  std::vector<std::size_t> sizes;
  sizes.reserve(graphs.size());
  for (const KnowledgeGraph* g : graphs) sizes.push_back(g->size());
  return sample_training_graph(sizes, rng);
}

Batch build_batch(const KnowledgeGraph& kg, Rng& rng, int batch_size, int num_negatives) {
  if (kg.size() == 0) throw TrainingError("cannot sample a batch from an empty graph");
  if (kg.num_entities() < 2) throw TrainingError("negative sampling needs at least two entities");
  Batch batch;
  batch.rows.resize(static_cast<std::size_t>(batch_size));
  batch.head_corrupted.resize(static_cast<std::size_t>(batch_size));
  const auto ne = static_cast<std::uint64_t>(kg.num_entities());
  for (int i = 0; i < batch_size; ++i) {
    auto& row = batch.rows[static_cast<std::size_t>(i)];
    auto& side = batch.head_corrupted[static_cast<std::size_t>(i)];
    const Triple pos = kg.triple(static_cast<std::size_t>(rng.index(kg.size())));
    row.push_back(pos);
    side.push_back(0);
    for (int j = 0; j < num_negatives; ++j) {
      const bool head = rng.bernoulli(0.5);
      Triple neg = pos;
      int& slot = head ? neg.head : neg.tail;
      const int original = slot;
      do {
        slot = static_cast<int>(rng.index(ne));
      } while (slot == original);
      row.push_back(neg);
      side.push_back(head ? 1 : 0);
    }
  }
  return batch;
}

ad::Tensor self_adversarial_weights(const ad::Tensor& scores, double tau) {
  ad::Tensor w(scores.rows(), scores.cols());
  const ad::Index n = scores.cols() - 1;
  for (ad::Index i = 0; i < scores.rows(); ++i) {
    w(i, 0) = 1.0;
    if (n <= 0) continue;
    if (tau == 0.0) {
      w.row(i).tail(n).setConstant(1.0 / static_cast<double>(n));
      continue;
    }
    const auto s = scores.row(i).tail(n).array() / tau;
    const double top = s.maxCoeff();
    const Eigen::ArrayXd e = (s - top).exp().transpose();
    w.row(i).tail(n) = (e / e.sum()).transpose().matrix();
  }
  return w;
}

double weighted_bce_loss(const ad::Tensor& scores, const ad::Tensor& targets, const ad::Tensor& weights) {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols() || scores.rows() != weights.rows() ||
      scores.cols() != weights.cols()) {
    throw InvalidInput("weighted_bce_loss: shape mismatch");
  }
  double total = 0.0;
  for (ad::Index i = 0; i < scores.rows(); ++i) {
    double num = 0.0, den = 0.0;
    for (ad::Index j = 0; j < scores.cols(); ++j) {
      num += weights(i, j) * ad::bce_with_logits(scores(i, j), targets(i, j));
      den += weights(i, j);
    }
    total += num / den;
  }
  return total / static_cast<double>(scores.rows());
}

double total_loss(double main_loss, double entropy, double beta, double aux_weight) {
  return main_loss - aux_weight * beta * entropy;
}

namespace {

struct RowScores {
  ad::Var scores;  // 1 x (1 + n_neg), slot order
  ad::Var entropy_sum;
  double entropy_rows = 0.0;
};

RowScores score_row(GammaModel& model, const GraphContext& ctx, const std::vector<Triple>& row,
                    const std::vector<char>& head_corrupted, bool remove_query_edges, Rng& rng,
                    std::map<int, ad::Var>& rel_cache, ad::Tape& tape) {
  const Triple& pos = row.front();
  const KnowledgeGraph& g = *ctx.graph;
  const int inv = g.inverse(pos.rel);

  auto rel_embs = [&](int r) -> const ad::Var& {
    auto it = rel_cache.find(r);
    if (it == rel_cache.end()) it = rel_cache.emplace(r, model.relation_embeddings(tape, ctx, r)).first;
    return it->second;
  };

  EdgeIndex pruned;
  const EdgeIndex* edges = &ctx.edges;
  if (remove_query_edges) {
    const Triple hidden[] = {pos, Triple{pos.tail, inv, pos.head}};
    pruned = ctx.edges.without(hidden);
    edges = &pruned;
  }

  // tail candidates go through (h, r, ?); head candidates through (t, r^-1, ?)
  std::vector<int> tail_cands{pos.tail}, head_cands;
  std::vector<int> tail_slots{0}, head_slots;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (head_corrupted[j]) {
      head_cands.push_back(row[j].head);
      head_slots.push_back(static_cast<int>(j));
    } else {
      tail_cands.push_back(row[j].tail);
      tail_slots.push_back(static_cast<int>(j));
    }
  }

  std::vector<ad::Var> parts, entropies;
  std::vector<int> slot_of_part_row;
  RowScores out;
  auto run = [&](Query q, const std::vector<int>& cands, const std::vector<int>& slots) {
    const ad::Var& rel = rel_embs(q.relation);
    const QueryOutput o = model.forward(tape, ctx, q, cands, true, &rng, &rel, edges);
    parts.push_back(o.scores);
    entropies.push_back(ad::affine_scalar(o.entropy, static_cast<double>(o.entropy_rows)));
    out.entropy_rows += static_cast<double>(o.entropy_rows);
    slot_of_part_row.insert(slot_of_part_row.end(), slots.begin(), slots.end());
  };
  run({pos.head, pos.rel}, tail_cands, tail_slots);
  if (!head_cands.empty()) run({pos.tail, inv}, head_cands, head_slots);

  std::vector<int> order(row.size());
  for (std::size_t k = 0; k < slot_of_part_row.size(); ++k) order[static_cast<std::size_t>(slot_of_part_row[k])] = static_cast<int>(k);
  const ad::Var stacked = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  out.scores = ad::reshape(ad::gather_rows(stacked, order), 1, static_cast<ad::Index>(row.size()));
  out.entropy_sum = entropies.size() == 1 ? entropies.front() : ad::add_all(entropies);
  return out;
}

}  // namespace

ad::Var batch_loss(ad::Tape& tape, GammaModel& model, const GraphContext& ctx, const Batch& batch,
                   const TrainConfig& cfg, Rng& rng, StepStats* stats) {
  if (batch.size() == 0) throw TrainingError("empty batch");
  std::map<int, ad::Var> rel_cache;
  std::vector<ad::Var> rows, entropy_sums;
  double entropy_rows = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    RowScores r = score_row(model, ctx, batch.rows[i], batch.head_corrupted[i], cfg.remove_query_edges, rng,
                            rel_cache, tape);
    rows.push_back(r.scores);
    entropy_sums.push_back(r.entropy_sum);
    entropy_rows += r.entropy_rows;
  }
  const ad::Var scores = rows.size() == 1 ? rows.front() : ad::concat_rows(rows);
  ad::Tensor targets = ad::Tensor::Zero(scores.rows(), scores.cols());
  targets.col(0).setOnes();
  const ad::Tensor weights = self_adversarial_weights(scores.value(), cfg.adv_temperature);
  const ad::Var main = ad::weighted_bce_with_logits(scores, targets, weights);
  const ad::Var entropy =
      ad::affine_scalar(entropy_sums.size() == 1 ? entropy_sums.front() : ad::add_all(entropy_sums), 1.0 / entropy_rows);
  const ad::Var total = ad::add(main, ad::affine_scalar(entropy, -cfg.aux_weight * cfg.beta));
  if (stats != nullptr) {
    stats->main_loss = main.scalar();
    stats->entropy = entropy.scalar();
    stats->total = total.scalar();
  }
  return total;
}

StepStats accumulate_batch_gradients(GammaModel& model, const GraphContext& ctx, const Batch& batch,
                                     const TrainConfig& cfg, Rng& rng, double loss_scale) {
  ad::Tape tape;
  StepStats stats;
  const ad::Var total = batch_loss(tape, model, ctx, batch, cfg, rng, &stats);
  tape.backward(total, loss_scale);
  return stats;
}

namespace {

std::string parameter_norms(GammaModel& model) {
  std::ostringstream os;
  for (const ad::Parameter* p : model.parameters()) {
    os << "\n  " << p->name << ": |w| = " << p->value.norm() << ", |g| = " << p->grad.norm();
  }
  return os.str();
}

double validation_mrr(GammaModel& model, const DatasetSplit& split, std::size_t max_queries) {
  const GraphContext ctx = GraphContext::build(split.inference_graph);
  const FilterIndex filter(split);
  std::span<const Triple> queries = split.valid_queries;
  if (max_queries > 0 && queries.size() > max_queries) queries = queries.first(max_queries);
  return evaluate_queries(model_scorer(model, ctx), split, queries, filter).metrics.mrr;
}

}  // namespace

PretrainResult pretrain(GammaModel& model, std::span<const KnowledgeGraph* const> graphs,
                        std::span<const DatasetSplit* const> validation, const TrainConfig& cfg,
                        const PretrainOptions& options) {
  cfg.validate();
  if (graphs.empty()) throw TrainingError("no training graphs");
  if (validation.empty()) throw TrainingError("no validation splits");
  std::vector<GraphContext> contexts;
  contexts.reserve(graphs.size());
  for (const KnowledgeGraph* g : graphs) contexts.push_back(GraphContext::build(*g));
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  Rng rng(cfg.seed);
  AdamW optimizer(model.parameters(), cfg.learning_rate, cfg.weight_decay);
  PretrainResult result;
  long batch_id = 0;
  double best_mrr = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      StepStats mean;
      std::size_t graph = 0;
      for (int a = 0; a < cfg.grad_accum; ++a, ++batch_id) {
        graph = sample_training_graph(graphs, rng);
        const Batch batch = build_batch(*graphs[graph], rng, cfg.batch_size, cfg.num_negatives);
        StepStats s;
        try {
          s = accumulate_batch_gradients(model, contexts[graph], batch, cfg, rng, 1.0 / cfg.grad_accum);
        } catch (const ad::NonFiniteError& e) {
          throw TrainingError("non-finite value in batch " + std::to_string(batch_id) + " (epoch " +
                              std::to_string(epoch) + "): " + e.what() + parameter_norms(model));
        }
        if (!std::isfinite(s.total)) {
          throw TrainingError("non-finite loss in batch " + std::to_string(batch_id) + parameter_norms(model));
        }
        mean.main_loss += s.main_loss / cfg.grad_accum;
        mean.entropy += s.entropy / cfg.grad_accum;
        mean.total += s.total / cfg.grad_accum;
      }
      optimizer.step();
      result.final_loss = mean.total;
      if (options.log != nullptr) {
        nlohmann::ordered_json rec;
        rec["step"] = optimizer.steps();
        rec["epoch"] = epoch;
        rec["graph"] = graph;
        rec["loss_main"] = mean.main_loss;
        rec["loss_ent"] = mean.entropy;
        rec["loss_total"] = mean.total;
        *options.log << rec.dump() << '\n';
      }
    }

    CheckpointMeta meta;
    meta.epoch = epoch;
    std::string bytes = serialize_checkpoint(model);
    if (!options.checkpoint_dir.empty()) {
      const auto path = std::filesystem::path(options.checkpoint_dir) / ("epoch_" + std::to_string(epoch) + ".ckpt");
      save_checkpoint(model, path);
      meta.path = path.string();
    }
    // score the checkpoint as stored, not the in-memory double weights
    GammaModel snapshot = model_from_checkpoint(bytes);
    double sum = 0.0;
    for (const DatasetSplit* split : validation) {
      const double mrr = validation_mrr(snapshot, *split, options.max_valid_queries);
      meta.valid_mrr.emplace_back(split->name, mrr);
      sum += mrr;
    }
    meta.mean_valid_mrr = sum / static_cast<double>(validation.size());
    if (options.log != nullptr) {
      nlohmann::ordered_json rec;
      rec["epoch"] = epoch;
      rec["mean_valid_mrr"] = meta.mean_valid_mrr;
      *options.log << rec.dump() << '\n';
    }
    result.history.push_back(meta);
    if (meta.mean_valid_mrr > best_mrr) {
      best_mrr = meta.mean_valid_mrr;
      result.best = meta;
      result.best_checkpoint = std::move(bytes);
    }
  }
  load_checkpoint_into(model, result.best_checkpoint);
  return result;
}

}  // namespace gammakg
