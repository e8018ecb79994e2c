#include "gamma/autodiff.hpp"
#include "gamma/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

using namespace gammakg;
using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(ad::Index rows, ad::Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(rows, cols);
  for (ad::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Entries with |x| >= margin, so a finite-difference step never crosses a kink.
Tensor away_from_zero(ad::Index rows, ad::Index cols, Rng& rng, double margin = 0.05) {
  Tensor t(rows, cols);
  for (ad::Index i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(margin, 1.0);
    t.data()[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

Tensor mat(ad::Index rows, ad::Index cols, std::vector<double> values) {
  Tensor t(rows, cols);
  for (ad::Index i = 0; i < t.size(); ++i) t.data()[i] = values[static_cast<std::size_t>(i)];
  return t;
}

// Random linear read-out <C, out> so every output entry reaches the loss.
Var readout(Tape& tape, const Var& out, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdefULL);
  return ad::sum(ad::mul(out, tape.constant(random_tensor(out.rows(), out.cols(), rng))));
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Finite-difference check of one primitive over 50 seeds of random inputs.
void check_primitive(const std::string& label, const std::vector<std::pair<ad::Index, ad::Index>>& shapes,
                     const Builder& build, bool kink_free_inputs = false, double tol = 1e-5) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed * 7919 + 13);
    std::vector<Parameter> inputs;
    inputs.reserve(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const auto [r, c] = shapes[i];
      inputs.emplace_back("in" + std::to_string(i),
                          kink_free_inputs ? away_from_zero(r, c, rng) : random_tensor(r, c, rng));
    }
    std::vector<Parameter*> ptrs;
    for (auto& p : inputs) ptrs.push_back(&p);
    auto forward = [&](Tape& tape) {
      std::vector<Var> vars;
      for (auto& p : inputs) vars.push_back(tape.parameter(p));
      return readout(tape, build(tape, vars), seed);
    };
    const auto report = ad::check_gradients(forward, ptrs, seed, 64);
    EXPECT_LT(report.max_rel_error, tol) << label << " seed " << seed << " worst " << report.worst_parameter
                                         << " analytic " << report.worst_analytic << " numeric "
                                         << report.worst_numeric;
  }
}

}  // namespace

TEST(DenseAffine, Examples) {
  Tape tape;
  const Var x = tape.constant(mat(1, 2, {1, 2}));
  const Var y = ad::dense_affine(x, tape.constant(mat(2, 2, {1, 0, 0, 1})), tape.constant(mat(1, 2, {0, 0})));
  EXPECT_EQ(y.value(), mat(1, 2, {1, 2}));
  const Var z = ad::dense_affine(x, tape.constant(mat(2, 1, {3, 4})), tape.constant(mat(1, 1, {1})));
  EXPECT_DOUBLE_EQ(z.scalar(), 12.0);
}

TEST(DenseAffine, ShapeMismatchThrows) {
  Tape tape;
  const Var x = tape.constant(mat(1, 2, {1, 2}));
  EXPECT_THROW(ad::dense_affine(x, tape.constant(Tensor::Zero(3, 2)), tape.constant(Tensor::Zero(1, 2))),
               InvalidInput);
}

TEST(ScatterSum, Examples) {
  Tape tape;
  const std::vector<int> targets{0, 0, 1};
  const Var out = ad::scatter_sum(tape.constant(mat(3, 1, {1, 2, 3})), targets, 3);
  EXPECT_EQ(out.value(), mat(3, 1, {3, 3, 0}));
  const Var empty = ad::scatter_sum(tape.constant(Tensor::Zero(0, 1)), std::vector<int>{}, 2);
  EXPECT_EQ(empty.value(), mat(2, 1, {0, 0}));
  const std::vector<int> bad{0, 5};
  EXPECT_THROW(ad::scatter_sum(tape.constant(Tensor::Zero(2, 1)), bad, 3), InvalidInput);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  Tape tape;
  const Var s = ad::softmax_rows(tape.constant(random_tensor(20, 7, rng, -30, 30)));
  for (ad::Index i = 0; i < 20; ++i) EXPECT_NEAR(s.value().row(i).sum(), 1.0, 1e-7);
}

TEST(L2Normalize, UnitRowsAndZeroRow) {
  Rng rng(4);
  Tensor x = random_tensor(6, 5, rng);
  x.row(2).setZero();
  Parameter p("x", x);
  Tape tape;
  const Var y = ad::l2_normalize_rows(tape.parameter(p));
  for (ad::Index i = 0; i < 6; ++i) {
    if (i == 2) {
      EXPECT_EQ(y.value().row(i).norm(), 0.0);
    } else {
      EXPECT_NEAR(y.value().row(i).norm(), 1.0, 1e-7);
    }
  }
  p.zero_grad();
  tape.backward(readout(tape, y, 1));
  EXPECT_EQ(p.grad.row(2).norm(), 0.0);
  EXPECT_TRUE(p.grad.allFinite());
}

TEST(BceWithLogits, StableAtExtremes) {
  EXPECT_NEAR(ad::bce_with_logits(0.0, 1.0), std::log(2.0), 1e-15);
  EXPECT_LT(ad::bce_with_logits(20.0, 1.0), 1e-8);
  EXPECT_NEAR(ad::bce_with_logits(-800.0, 1.0), 800.0, 1e-9);
  EXPECT_NEAR(ad::bce_with_logits(800.0, 0.0), 800.0, 1e-9);
  EXPECT_TRUE(std::isfinite(ad::bce_with_logits(-1e6, 0.0)));
}

TEST(PrimitiveGradients, DenseAffine) {
  check_primitive("dense_affine", {{4, 3}, {3, 5}, {1, 5}},
                  [](Tape&, std::vector<Var>& v) { return ad::dense_affine(v[0], v[1], v[2]); });
}

TEST(PrimitiveGradients, AddAndMul) {
  check_primitive("add", {{3, 4}, {3, 4}}, [](Tape&, std::vector<Var>& v) { return ad::add(v[0], v[1]); });
  check_primitive("mul", {{3, 4}, {3, 4}}, [](Tape&, std::vector<Var>& v) { return ad::mul(v[0], v[1]); });
}

TEST(PrimitiveGradients, Relu) {
  check_primitive("relu", {{5, 6}}, [](Tape&, std::vector<Var>& v) { return ad::relu(v[0]); }, true);
}

TEST(PrimitiveGradients, Softmax) {
  check_primitive("softmax_rows", {{4, 5}}, [](Tape&, std::vector<Var>& v) { return ad::softmax_rows(v[0]); });
}

TEST(PrimitiveGradients, L2Normalize) {
  check_primitive("l2_normalize_rows", {{4, 5}},
                  [](Tape&, std::vector<Var>& v) { return ad::l2_normalize_rows(v[0]); });
}

TEST(PrimitiveGradients, Cosine) {
  check_primitive("cosine_rows", {{4, 6}, {4, 6}},
                  [](Tape&, std::vector<Var>& v) { return ad::cosine_rows(v[0], v[1]); });
  check_primitive("cosine_rows broadcast", {{4, 6}, {1, 6}},
                  [](Tape&, std::vector<Var>& v) { return ad::cosine_rows(v[0], v[1]); });
}

TEST(PrimitiveGradients, ConcatAndSlice) {
  check_primitive("concat_cols", {{3, 2}, {3, 4}}, [](Tape&, std::vector<Var>& v) { return ad::concat_cols(v); });
  check_primitive("concat_rows", {{2, 3}, {4, 3}}, [](Tape&, std::vector<Var>& v) { return ad::concat_rows(v); });
  check_primitive("slice_cols", {{3, 6}}, [](Tape&, std::vector<Var>& v) { return ad::slice_cols(v[0], 2, 3); });
  check_primitive("reshape", {{3, 4}}, [](Tape&, std::vector<Var>& v) { return ad::reshape(v[0], 2, 6); });
}

TEST(PrimitiveGradients, GatherAndScatter) {
  const std::vector<int> rows{2, 0, 2, 1, 2};
  check_primitive("gather_rows", {{3, 4}},
                  [&](Tape&, std::vector<Var>& v) { return ad::gather_rows(v[0], rows); });
  const std::vector<int> targets{0, 3, 0, 1, 3};
  check_primitive("scatter_sum", {{5, 4}},
                  [&](Tape&, std::vector<Var>& v) { return ad::scatter_sum(v[0], targets, 4); });
}

TEST(PrimitiveGradients, Relmul) {
  for (BranchKind kind : {BranchKind::Real, BranchKind::Complex, BranchKind::SplitComplex, BranchKind::Dual}) {
    check_primitive(std::string("relmul ") + std::string(to_string(kind)), {{3, 6}, {3, 6}},
                    [kind](Tape&, std::vector<Var>& v) { return ad::relmul(kind, v[0], v[1]); });
  }
}

TEST(PrimitiveGradients, RelmulScatter) {
  const std::vector<int> src{0, 1, 2, 3, 1}, rel{0, 1, 1, 0, 2}, dst{1, 2, 0, 1, 1};
  for (BranchKind kind : {BranchKind::Real, BranchKind::Complex, BranchKind::SplitComplex, BranchKind::Dual}) {
    check_primitive(std::string("relmul_scatter ") + std::string(to_string(kind)), {{4, 6}, {3, 6}},
                    [&](Tape&, std::vector<Var>& v) {
                      return ad::relmul_scatter(kind, v[0], v[1], src, rel, dst, 4);
                    });
  }
}

TEST(PrimitiveGradients, LayerNorm) {
  check_primitive("layer_norm_rows", {{4, 6}}, [](Tape&, std::vector<Var>& v) { return ad::layer_norm_rows(v[0]); });
}

TEST(PrimitiveGradients, RowScalingAndEntropy) {
  check_primitive("scale_rows", {{4, 3}, {4, 1}},
                  [](Tape&, std::vector<Var>& v) { return ad::scale_rows(v[0], v[1]); });
  check_primitive("normalize_row_sums", {{3, 4}}, [](Tape&, std::vector<Var>& v) {
    return ad::normalize_row_sums(ad::affine_scalar(v[0], 1.0, 2.0));
  });
  check_primitive("mean_row_entropy", {{3, 4}}, [](Tape&, std::vector<Var>& v) {
    return ad::mean_row_entropy(ad::softmax_rows(v[0]));
  });
  check_primitive("affine_scalar", {{2, 3}},
                  [](Tape&, std::vector<Var>& v) { return ad::affine_scalar(v[0], -1.5, 0.25); });
}

TEST(PrimitiveGradients, WeightedBce) {
  const Tensor targets = mat(2, 3, {1, 0, 0, 1, 0, 0});
  const Tensor weights = mat(2, 3, {1, 0.3, 0.7, 1, 0.5, 0.5});
  check_primitive("weighted_bce_with_logits", {{2, 3}}, [&](Tape&, std::vector<Var>& v) {
    return ad::weighted_bce_with_logits(ad::affine_scalar(v[0], 4.0), targets, weights);
  });
}

TEST(RelmulScatter, MatchesUnfusedPath) {
  Rng rng(9);
  const std::vector<int> src{0, 1, 2, 3, 1, 0}, rel{0, 1, 1, 0, 2, 2}, dst{1, 2, 0, 1, 1, 3};
  for (BranchKind kind : {BranchKind::Real, BranchKind::Complex, BranchKind::SplitComplex, BranchKind::Dual}) {
    Parameter states("s", random_tensor(4, 8, rng));
    Parameter rels("r", random_tensor(3, 8, rng));
    Tensor fused_grad_s, fused_grad_r;
    Tensor fused_value, plain_value;
    for (int variant = 0; variant < 2; ++variant) {
      states.zero_grad();
      rels.zero_grad();
      Tape tape;
      const Var s = tape.parameter(states);
      const Var r = tape.parameter(rels);
      const Var out = variant == 0 ? ad::relmul_scatter(kind, s, r, src, rel, dst, 4)
                                   : ad::scatter_sum(ad::relmul(kind, ad::gather_rows(s, src), ad::gather_rows(r, rel)),
                                                     dst, 4);
      tape.backward(readout(tape, out, 2));
      if (variant == 0) {
        fused_value = out.value();
        fused_grad_s = states.grad;
        fused_grad_r = rels.grad;
      } else {
        plain_value = out.value();
      }
    }
    EXPECT_LT((fused_value - plain_value).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((fused_grad_s - states.grad).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((fused_grad_r - rels.grad).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CheckGradients, DenseAffineIsExact) {
  Rng rng(21);
  const Tensor x = random_tensor(3, 4, rng);
  Parameter w("w", random_tensor(4, 2, rng));
  Parameter b("b", random_tensor(1, 2, rng));
  std::vector<Parameter*> params{&w, &b};
  auto forward = [&](Tape& tape) {
    return readout(tape, ad::dense_affine(tape.constant(x), tape.parameter(w), tape.parameter(b)), 3);
  };
  EXPECT_LT(ad::check_gradients(forward, params, 1).max_rel_error, 1e-5);
}

TEST(CheckGradients, SkipsFrozenParameters) {
  Rng rng(22);
  Parameter w("w", random_tensor(3, 3, rng));
  Parameter frozen("frozen", random_tensor(1, 3, rng));
  frozen.frozen = true;
  const Tensor before = frozen.value;
  std::vector<Parameter*> params{&w, &frozen};
  auto forward = [&](Tape& tape) {
    return readout(tape, ad::dense_affine(tape.parameter(w), tape.parameter(w), tape.parameter(frozen)), 4);
  };
  const auto report = ad::check_gradients(forward, params, 1);
  EXPECT_EQ(report.coordinates_checked, 9u);
  EXPECT_EQ(frozen.value, before);
  EXPECT_EQ(frozen.grad.cwiseAbs().sum(), 0.0);
}

TEST(CheckGradients, NonFiniteLossThrows) {
  Parameter w("w", mat(1, 1, {0.0}));
  std::vector<Parameter*> params{&w};
  auto forward = [&](Tape& tape) {
    return ad::affine_scalar(tape.parameter(w), std::numeric_limits<double>::infinity());
  };
  EXPECT_THROW(ad::check_gradients(forward, params, 1), ad::NonFiniteError);
}

TEST(Tape, BackwardIsDeterministic) {
  Rng rng(23);
  Parameter a("a", random_tensor(5, 4, rng));
  Tensor first;
  for (int run = 0; run < 2; ++run) {
    a.zero_grad();
    Tape tape;
    const Var x = tape.parameter(a);
    const Var y = ad::softmax_rows(ad::mul(x, ad::l2_normalize_rows(x)));
    tape.backward(readout(tape, y, 5));
    if (run == 0) first = a.grad;
  }
  EXPECT_EQ(first, a.grad);
}
