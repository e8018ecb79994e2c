#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records nodes in execution order; backward() walks them in reverse
// insertion order, so gradients are bit-reproducible for a fixed program.
// Every value is a 2-D matrix: scalars are 1x1, vectors are 1xn rows.

#include "gamma/algebra.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gammakg::ad {

using Tensor = RowMatrix<double>;
using Index = Eigen::Index;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const noexcept { return value.size(); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `p`; backward() adds into p.grad unless p is frozen.
  Var parameter(Parameter& p);

  /// Records an op node. `fn` runs during backward only when some input
  /// requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);

  /// Reverse sweep from a 1x1 node, seeded with `seed`.
  void backward(const Var& loss, double seed = 1.0);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// ---- primitive catalog ----------------------------------------------------

Var dense_affine(const Var& x, const Var& weight, const Var& bias);
Var add(const Var& a, const Var& b);
Var add_all(std::span<const Var> terms);
Var mul(const Var& a, const Var& b);
/// scale * a + shift, element-wise.
Var affine_scalar(const Var& a, double scale, double shift = 0.0);
Var relu(const Var& a);
Var softmax_rows(const Var& a);
/// Row-wise L2 normalisation; an all-zero row maps to zero with zero gradient.
Var l2_normalize_rows(const Var& a);
/// Cosine similarity between each row of `a` and the matching row of `b`
/// (or the single row of `b`, broadcast). Zero rows give similarity 0.
Var cosine_rows(const Var& a, const Var& b);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
/// Row-major reshape.
Var reshape(const Var& a, Index rows, Index cols);
Var gather_rows(const Var& a, std::span<const int> rows);
Var scatter_sum(const Var& messages, std::span<const int> targets, Index out_rows);
Var relmul(BranchKind kind, const Var& x, const Var& r);
/// scatter_sum(relmul(gather_rows(states, src), gather_rows(rels, rel)), dst)
/// without materialising the per-edge rows.
Var relmul_scatter(BranchKind kind, const Var& states, const Var& rels, std::span<const int> src,
                   std::span<const int> rel, std::span<const int> dst, Index out_rows);
/// Per-row standardisation (x - mean) / sqrt(var + eps), no learned gain.
Var layer_norm_rows(const Var& a, double eps = 1e-5);
/// Multiplies row i of `x` by the scalar w(i, 0).
Var scale_rows(const Var& x, const Var& w);
/// Divides each row by its sum. Rows must have a positive sum.
Var normalize_row_sums(const Var& a);
Var sum(const Var& a);
/// -(1/N) sum_i sum_k p_ik log p_ik with 0 log 0 = 0, over N rows.
Var mean_row_entropy(const Var& p);
/// (1/B) sum_i [sum_j w_ij bce(s_ij, y_ij)] / [sum_j w_ij]. Weights and
/// targets are constants.
Var weighted_bce_with_logits(const Var& scores, const Tensor& targets, const Tensor& weights);

/// Numerically stable binary cross-entropy from a raw logit.
double bce_with_logits(double logit, double target);

// ---- gradient verification ------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares analytic gradients against central differences on up to
/// `coords_per_param` sampled coordinates of every non-frozen parameter.
/// `forward` must build a 1x1 loss on the supplied tape deterministically.
GradCheckReport check_gradients(const std::function<Var(Tape&)>& forward,
                                std::span<Parameter* const> params, std::uint64_t seed,
                                int coords_per_param = 32, double step = 1e-4);

}  // namespace gammakg::ad
