#include "gamma/kgstore.hpp"
#include "gamma/model.hpp"
#include "gamma/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

using namespace gammakg;

namespace {

// Each entity is the head of at most one triple and the tail of at most one,
// so no corruption is ever a true triple.
KnowledgeGraph functional_fixture(int entities = 40, int triples = 20) {
  std::vector<Triple> t;
  for (int i = 0; i < triples; ++i) t.push_back({(7 * i) % entities, i % 2, (7 * i + 3) % entities});
  return augment_inverses(KnowledgeGraph(entities, 2, t));
}

ModelConfig small_model(int dim = 16) {
  ModelConfig mc;
  mc.dim = dim;
  mc.relation_layers = 2;
  mc.entity_layers = 2;
  mc.fusion.attn_dropout = 0.0;
  return mc;
}

DatasetSplit split_of(const KnowledgeGraph& augmented, const std::string& name) {
  DatasetSplit s;
  s.name = name;
  s.train_graph = augmented;
  s.inference_graph = augmented;
  for (const Triple& t : augmented.triples()) {
    if (t.rel < augmented.num_relations() / 2) s.valid_queries.push_back(t);
  }
  s.test_queries = s.valid_queries;
  return s;
}

std::vector<ad::Tensor> gradients(GammaModel& m) {
  std::vector<ad::Tensor> out;
  for (ad::Parameter* p : m.parameters()) out.push_back(p->grad);
  return out;
}

void zero_gradients(GammaModel& m) {
  for (ad::Parameter* p : m.parameters()) p->zero_grad();
}

}  // namespace

TEST(AdamW, FirstTwoStepsMatchHandComputation) {
  ad::Parameter p("w", ad::Tensor::Constant(1, 1, 1.0));
  const double lr = 0.1, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  AdamW opt({&p}, lr, wd, b1, b2, eps);

  p.grad = ad::Tensor::Constant(1, 1, 0.5);
  opt.step();
  // bias-corrected moments equal g and g^2 after one step
  double w = 1.0 * (1 - lr * wd) - lr * 0.5 / (0.5 + eps);
  EXPECT_NEAR(p.value(0, 0), w, 1e-15);
  EXPECT_EQ(p.grad(0, 0), 0.0);

  p.grad = ad::Tensor::Constant(1, 1, -1.0);
  opt.step();
  const double m = b1 * (1 - b1) * 0.5 + (1 - b1) * -1.0;
  const double v = b2 * (1 - b2) * 0.25 + (1 - b2) * 1.0;
  const double m_hat = m / (1 - b1 * b1), v_hat = v / (1 - b2 * b2);
  w = w * (1 - lr * wd) - lr * m_hat / (std::sqrt(v_hat) + eps);
  EXPECT_NEAR(p.value(0, 0), w, 1e-15);
  EXPECT_EQ(opt.steps(), 2);
}

TEST(AdamW, FrozenParametersDoNotMove) {
  ad::Parameter p("w", ad::Tensor::Constant(2, 2, 3.0));
  p.frozen = true;
  AdamW opt({&p}, 0.1, 0.5);
  p.grad = ad::Tensor::Ones(2, 2);
  opt.step();
  EXPECT_EQ(p.value, ad::Tensor::Constant(2, 2, 3.0));
}

TEST(GraphSampling, ProportionalToSize) {
  Rng rng(11);
  const std::size_t sizes[] = {10, 30};
  const int draws = 200000;
  int first = 0;
  for (int i = 0; i < draws; ++i) first += sample_training_graph(sizes, rng) == 0;
  EXPECT_NEAR(first / double(draws), 0.25, 0.01);
}

TEST(GraphSampling, SingleAndEmptyGraphs) {
  Rng rng(1);
  const std::size_t one[] = {7};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_training_graph(one, rng), 0u);
  const std::size_t skip[] = {0, 5, 0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_training_graph(skip, rng), 1u);
  const std::size_t none[] = {0, 0};
  EXPECT_THROW(sample_training_graph(none, rng), TrainingError);
}

TEST(BuildBatch, SingleTripleCorruptions) {
  const KnowledgeGraph kg(3, 1, {{0, 0, 1}});
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Batch b = build_batch(kg, rng, 1, 2);
    ASSERT_EQ(b.size(), 1u);
    ASSERT_EQ(b.rows[0].size(), 3u);
    EXPECT_EQ(b.rows[0][0], (Triple{0, 0, 1}));
    for (int j = 1; j <= 2; ++j) {
      const Triple& n = b.rows[0][static_cast<std::size_t>(j)];
      EXPECT_EQ(n.rel, 0);
      const int changed = (n.head != 0) + (n.tail != 1);
      EXPECT_EQ(changed, 1);
      EXPECT_EQ(b.head_corrupted[0][static_cast<std::size_t>(j)] != 0, n.head != 0);
    }
  }
}

TEST(BuildBatch, HeadTailSplitIsBalanced) {
  const KnowledgeGraph kg = functional_fixture();
  Rng rng(3);
  const Batch b = build_batch(kg, rng, 500, 200);
  long heads = 0, total = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_TRUE(kg.contains(b.rows[i][0]));
    for (std::size_t j = 1; j < b.rows[i].size(); ++j, ++total) heads += b.head_corrupted[i][j];
  }
  EXPECT_NEAR(heads / double(total), 0.5, 0.01);
}

TEST(BuildBatch, RejectsDegenerateGraphs) {
  Rng rng(0);
  EXPECT_THROW(build_batch(KnowledgeGraph(3, 1, {}), rng, 2, 2), TrainingError);
  EXPECT_THROW(build_batch(KnowledgeGraph(1, 1, {{0, 0, 0}}), rng, 2, 2), TrainingError);
}

TEST(SelfAdversarialWeights, Examples) {
  ad::Tensor s(1, 5);
  s << 9.0, 0.3, -1.0, 2.0, 0.0;
  const ad::Tensor uniform = self_adversarial_weights(s, 0.0);
  EXPECT_EQ(uniform(0, 0), 1.0);
  for (int j = 1; j < 5; ++j) EXPECT_EQ(uniform(0, j), 0.25);

  ad::Tensor two(1, 3);
  two << 5.0, 0.0, std::log(3.0);
  const ad::Tensor w = self_adversarial_weights(two, 1.0);
  EXPECT_NEAR(w(0, 1), 0.25, 1e-12);
  EXPECT_NEAR(w(0, 2), 0.75, 1e-12);

  const ad::Tensor hot = self_adversarial_weights(s, 1e6);
  for (int j = 1; j < 5; ++j) EXPECT_NEAR(hot(0, j), 0.25, 1e-5);
}

TEST(WeightedBce, Examples) {
  const ad::Tensor targets = (ad::Tensor(1, 2) << 1.0, 0.0).finished();
  const ad::Tensor even = ad::Tensor::Ones(1, 2);
  EXPECT_NEAR(weighted_bce_loss(ad::Tensor::Zero(1, 2), targets, even), std::log(2.0), 1e-15);
  const ad::Tensor confident = (ad::Tensor(1, 2) << 20.0, -20.0).finished();
  EXPECT_LT(weighted_bce_loss(confident, targets, even), 1e-8);
  // a zero-weight column does not contribute
  const ad::Tensor ignore = (ad::Tensor(1, 2) << 1.0, 0.0).finished();
  const ad::Tensor wrong_negative = (ad::Tensor(1, 2) << 20.0, 50.0).finished();
  EXPECT_LT(weighted_bce_loss(wrong_negative, targets, ignore), 1e-8);
  EXPECT_THROW(weighted_bce_loss(ad::Tensor::Zero(1, 2), ad::Tensor::Zero(1, 3), even), InvalidInput);
}

TEST(TotalLoss, Examples) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 0.01, 1.0), 0.995);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 0.01, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(total_loss(0.2, 0.0, 5.0, 1.0), 0.2);
}

TEST(SelfAdversarialWeights, CarryNoGradient) {
  // the gradient of the weighted loss is the closed form with the weights
  // held fixed; any term through softmax(s / tau) would break equality
  Rng rng(4);
  ad::Tensor s(3, 5);
  for (ad::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform(-2.0, 2.0);
  ad::Tensor y = ad::Tensor::Zero(3, 5);
  y.col(0).setOnes();
  const ad::Tensor w = self_adversarial_weights(s, 1.0);
  ad::Parameter p("s", s);
  ad::Tape tape;
  tape.backward(ad::weighted_bce_with_logits(tape.parameter(p), y, w));
  for (ad::Index i = 0; i < 3; ++i) {
    const double den = w.row(i).sum();
    for (ad::Index j = 0; j < 5; ++j) {
      const double sig = 1.0 / (1.0 + std::exp(-s(i, j)));
      EXPECT_NEAR(p.grad(i, j), w(i, j) * (sig - y(i, j)) / den / 3.0, 1e-14);
    }
  }
}

TEST(Training, GradientAccumulationMatchesFullBatch) {
  const KnowledgeGraph kg = functional_fixture();
  const GraphContext ctx = GraphContext::build(kg);
  TrainConfig cfg;
  cfg.num_negatives = 6;
  Rng sampler(5);
  const Batch full = build_batch(kg, sampler, 4, cfg.num_negatives);
  Batch halves[2];
  for (std::size_t i = 0; i < 4; ++i) {
    halves[i / 2].rows.push_back(full.rows[i]);
    halves[i / 2].head_corrupted.push_back(full.head_corrupted[i]);
  }

  GammaModel model(small_model(8), 3);
  Rng rng(0);
  zero_gradients(model);
  const StepStats one = accumulate_batch_gradients(model, ctx, full, cfg, rng);
  const auto expected = gradients(model);
  zero_gradients(model);
  StepStats acc;
  for (const Batch& h : halves) {
    const StepStats s = accumulate_batch_gradients(model, ctx, h, cfg, rng, 0.5);
    acc.total += 0.5 * s.total;
  }
  const auto got = gradients(model);
  EXPECT_NEAR(acc.total, one.total, 1e-12);
  for (std::size_t k = 0; k < got.size(); ++k) {
    const double scale = std::max(1.0, expected[k].cwiseAbs().maxCoeff());
    EXPECT_LT((got[k] - expected[k]).cwiseAbs().maxCoeff() / scale, 1e-6) << model.parameters()[k]->name;
  }
}

TEST(Training, OverfitsTinyFixture) {
  const KnowledgeGraph kg = functional_fixture();
  const GraphContext ctx = GraphContext::build(kg);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.num_negatives = 16;
  cfg.remove_query_edges = false;  // memorisation needs the edge itself
  GammaModel model(small_model(), 1);
  AdamW opt(model.parameters(), cfg.learning_rate);
  Rng rng(5);
  StepStats last;
  for (int step = 0; step < 200; ++step) {
    const Batch b = build_batch(kg, rng, cfg.batch_size, cfg.num_negatives);
    last = accumulate_batch_gradients(model, ctx, b, cfg, rng);
    opt.step();
  }
  EXPECT_LT(last.main_loss, 0.05);
}

TEST(Training, LargeBetaDrivesAttentionToUniform) {
  const KnowledgeGraph kg = functional_fixture();
  const GraphContext ctx = GraphContext::build(kg);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.num_negatives = 8;
  cfg.beta = 10.0;
  cfg.learning_rate = 5e-3;
  GammaModel model(small_model(8), 2);
  AdamW opt(model.parameters(), cfg.learning_rate);
  Rng rng(6);
  for (int step = 0; step < 60; ++step) {
    accumulate_batch_gradients(model, ctx, build_batch(kg, rng, cfg.batch_size, cfg.num_negatives), cfg, rng);
    opt.step();
  }
  double entropy = 0.0;
  for (int k = 0; k < 5; ++k) {
    ad::Tape tape;
    StepStats s;
    batch_loss(tape, model, ctx, build_batch(kg, rng, cfg.batch_size, cfg.num_negatives), cfg, rng, &s);
    entropy += s.entropy / 5.0;
  }
  EXPECT_GE(entropy, 0.95 * std::log(2.0));
}

TEST(Pretrain, DeterministicForFixedSeed) {
  const KnowledgeGraph kg = functional_fixture(20, 12);
  const DatasetSplit split = split_of(kg, "fixture");
  const KnowledgeGraph* graphs[] = {&kg};
  const DatasetSplit* valid[] = {&split};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.steps_per_epoch = 3;
  cfg.batch_size = 2;
  cfg.num_negatives = 4;
  cfg.seed = 9;
  auto run = [&] {
    GammaModel model(small_model(8), cfg.seed);
    return pretrain(model, graphs, valid, cfg, {});
  };
  const PretrainResult a = run(), b = run();
  EXPECT_EQ(a.best_checkpoint, b.best_checkpoint);
  ASSERT_EQ(a.history.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) EXPECT_EQ(a.history[e].mean_valid_mrr, b.history[e].mean_valid_mrr);
  EXPECT_EQ(a.final_loss, b.final_loss);
}

TEST(Pretrain, KeepsBestValidationEpoch) {
  const KnowledgeGraph kg = functional_fixture(20, 12);
  const DatasetSplit split = split_of(kg, "fixture");
  const KnowledgeGraph* graphs[] = {&kg};
  const DatasetSplit* valid[] = {&split};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.steps_per_epoch = 2;
  cfg.batch_size = 2;
  cfg.num_negatives = 4;
  GammaModel model(small_model(8), 1);
  const PretrainResult r = pretrain(model, graphs, valid, cfg, {});
  double best = -1.0;
  for (const auto& h : r.history) best = std::max(best, h.mean_valid_mrr);
  EXPECT_EQ(r.best.mean_valid_mrr, best);
}

TEST(Pretrain, NonFiniteLossReportsBatch) {
  const KnowledgeGraph kg = functional_fixture(20, 12);
  const DatasetSplit split = split_of(kg, "fixture");
  const KnowledgeGraph* graphs[] = {&kg};
  const DatasetSplit* valid[] = {&split};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 1;
  cfg.batch_size = 2;
  cfg.num_negatives = 2;
  GammaModel model(small_model(8), 1);
  model.parameters().back()->value.setConstant(std::numeric_limits<double>::quiet_NaN());
  try {
    pretrain(model, graphs, valid, cfg, {});
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}
