#pragma once

// Relation-specific multiplications for the four message branches.
//
// Every branch works on flat width-d vectors. Paired algebras keep the
// "real" half in columns [0, d/2) and the "imaginary" half in [d/2, d).
// The row-wise kernels below operate on m x d matrices where each row is
// one algebraic vector; the vector API is a thin wrapper over them.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace gammakg {

enum class BranchKind { Real, Complex, SplitComplex, Dual };

constexpr int components(BranchKind kind) noexcept {
  return kind == BranchKind::Real ? 1 : 2;
}

std::string_view to_string(BranchKind kind) noexcept;
BranchKind parse_branch_kind(std::string_view name);

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct AlgebraicVector {
  Vector<Scalar> data;
  BranchKind kind = BranchKind::Real;

  Eigen::Index width() const noexcept { return data.size(); }
};

inline void check_width(BranchKind kind, Eigen::Index width) {
  if (width <= 0) throw InvalidInput("algebraic width must be positive");
  if (components(kind) == 2 && width % 2 != 0) {
    throw InvalidInput("paired algebra '" + std::string(to_string(kind)) +
                       "' needs an even width, got " + std::to_string(width));
  }
}

namespace detail {

template <typename A, typename B>
void check_same_shape(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& r) {
  if (x.rows() != r.rows() || x.cols() != r.cols()) {
    throw InvalidInput("relmul operands differ in shape");
  }
}

}  // namespace detail

/// Row-wise f_r(x) for an m x d block of entity states `x` and relation
/// embeddings `r`.
template <typename DerivedX, typename DerivedR>
auto relmul_rows(BranchKind kind, const Eigen::MatrixBase<DerivedX>& x,
                 const Eigen::MatrixBase<DerivedR>& r) {
  using Scalar = typename DerivedX::Scalar;
  detail::check_same_shape(x, r);
  check_width(kind, x.cols());
  RowMatrix<Scalar> out(x.rows(), x.cols());
  if (kind == BranchKind::Real) {
    out = x.cwiseProduct(r);
    return out;
  }
  const Eigen::Index h = x.cols() / 2;
  const auto xr = x.leftCols(h);
  const auto xi = x.rightCols(h);
  const auto rr = r.leftCols(h);
  const auto ri = r.rightCols(h);
  switch (kind) {
    case BranchKind::Complex:
      out.leftCols(h) = xr.cwiseProduct(rr) - xi.cwiseProduct(ri);
      out.rightCols(h) = xr.cwiseProduct(ri) + xi.cwiseProduct(rr);
      break;
    case BranchKind::SplitComplex:
      out.leftCols(h) = xr.cwiseProduct(rr) + xi.cwiseProduct(ri);
      out.rightCols(h) = xr.cwiseProduct(ri) + xi.cwiseProduct(rr);
      break;
    case BranchKind::Dual:
      out.leftCols(h) = xr.cwiseProduct(rr);
      out.rightCols(h) = xr.cwiseProduct(ri) + xi.cwiseProduct(rr);
      break;
    case BranchKind::Real:
      break;
  }
  return out;
}

/// Gradient of <upstream, relmul_rows(x, r)> with respect to x. Since every
/// product is commutative, the gradient with respect to r is the same call
/// with x and r swapped.
template <typename DerivedG, typename DerivedR>
auto relmul_rows_grad(BranchKind kind, const Eigen::MatrixBase<DerivedG>& upstream,
                      const Eigen::MatrixBase<DerivedR>& r) {
  using Scalar = typename DerivedG::Scalar;
  detail::check_same_shape(upstream, r);
  check_width(kind, r.cols());
  RowMatrix<Scalar> out(r.rows(), r.cols());
  if (kind == BranchKind::Real) {
    out = upstream.cwiseProduct(r);
    return out;
  }
  const Eigen::Index h = r.cols() / 2;
  const auto gr = upstream.leftCols(h);
  const auto gi = upstream.rightCols(h);
  const auto rr = r.leftCols(h);
  const auto ri = r.rightCols(h);
  switch (kind) {
    case BranchKind::Complex:
      out.leftCols(h) = gr.cwiseProduct(rr) + gi.cwiseProduct(ri);
      out.rightCols(h) = gi.cwiseProduct(rr) - gr.cwiseProduct(ri);
      break;
    case BranchKind::SplitComplex:
      out.leftCols(h) = gr.cwiseProduct(rr) + gi.cwiseProduct(ri);
      out.rightCols(h) = gr.cwiseProduct(ri) + gi.cwiseProduct(rr);
      break;
    case BranchKind::Dual:
      out.leftCols(h) = gr.cwiseProduct(rr) + gi.cwiseProduct(ri);
      out.rightCols(h) = gi.cwiseProduct(rr);
      break;
    case BranchKind::Real:
      break;
  }
  return out;
}

namespace detail {

template <typename Scalar>
void check_pair(const AlgebraicVector<Scalar>& x, const AlgebraicVector<Scalar>& r,
                BranchKind kind) {
  if (x.kind != kind || r.kind != kind) throw InvalidInput("relmul operand kind mismatch");
  if (x.width() != r.width()) throw InvalidInput("relmul operand width mismatch");
  check_width(kind, x.width());
}

}  // namespace detail

template <typename Scalar>
AlgebraicVector<Scalar> relmul(BranchKind kind, const AlgebraicVector<Scalar>& x,
                               const AlgebraicVector<Scalar>& r) {
  detail::check_pair(x, r, kind);
  RowMatrix<Scalar> out = relmul_rows(kind, x.data.transpose(), r.data.transpose());
  return {out.transpose(), kind};
}

template <typename Scalar>
struct RelmulGrads {
  AlgebraicVector<Scalar> grad_x;
  AlgebraicVector<Scalar> grad_r;
};

template <typename Scalar>
RelmulGrads<Scalar> relmul_backward(BranchKind kind, const AlgebraicVector<Scalar>& x,
                                    const AlgebraicVector<Scalar>& r,
                                    const AlgebraicVector<Scalar>& upstream) {
  detail::check_pair(x, r, kind);
  if (upstream.kind != kind || upstream.width() != x.width()) {
    throw InvalidInput("relmul upstream gradient does not match operands");
  }
  RowMatrix<Scalar> gx = relmul_rows_grad(kind, upstream.data.transpose(), r.data.transpose());
  RowMatrix<Scalar> gr = relmul_rows_grad(kind, upstream.data.transpose(), x.data.transpose());
  return {{gx.transpose(), kind}, {gr.transpose(), kind}};
}

template <typename Scalar = double>
AlgebraicVector<Scalar> identity_element(BranchKind kind, Eigen::Index width) {
  check_width(kind, width);
  Vector<Scalar> e = Vector<Scalar>::Ones(width);
  if (components(kind) == 2) e.tail(width / 2).setZero();
  return {std::move(e), kind};
}

}  // namespace gammakg
