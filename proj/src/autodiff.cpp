#include "gamma/autodiff.hpp"

#include "gamma/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gammakg::ad {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)) {
  zero_grad();
}

// ---- tape -----------------------------------------------------------------

Var Tape::constant(Tensor value) {
  if (!value.allFinite()) throw NonFiniteError("non-finite constant");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (!p.value.allFinite()) throw NonFiniteError("parameter '" + p.name + "' is not finite");
  nodes_.push_back(Node{p.value, {}, {}, &p, !p.frozen});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.allFinite()) throw NonFiniteError("op produced a non-finite value");
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw InvalidInput("operand recorded on a different tape");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& loss, double seed) {
  if (loss.tape() != this) throw InvalidInput("loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw InvalidInput("backward needs a 1x1 loss");
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())(0, 0) += seed;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---- primitives -------------------------------------------------------------

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(what);
}

double stable_sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace

Var dense_affine(const Var& x, const Var& weight, const Var& bias) {
  require(x.cols() == weight.rows(), "dense_affine: input width does not match weight rows");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "dense_affine: bias shape");
  Tensor y = x.value() * weight.value();
  y.rowwise() += bias.value().row(0);
  const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
  return x.tape()->record(std::move(y), {x, weight, bias}, [xi, wi, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(xi)) t.grad(xi).noalias() += g * t.value(wi).transpose();
    if (t.requires_grad(wi)) t.grad(wi).noalias() += t.value(xi).transpose() * g;
    if (t.requires_grad(bi)) t.grad(bi).row(0) += g.colwise().sum();
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ai)) t.grad(ai) += g;
    if (t.requires_grad(bi)) t.grad(bi) += g;
  });
}

Var add_all(std::span<const Var> terms) {
  require(!terms.empty(), "add_all: no terms");
  Tensor y = terms[0].value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require(terms[k].rows() == y.rows() && terms[k].cols() == y.cols(), "add_all: shape mismatch");
    y += terms[k].value();
  }
  std::vector<std::size_t> ids;
  for (const Var& v : terms) ids.push_back(v.id());
  return terms[0].tape()->record(std::move(y), terms, [ids](Tape& t, std::size_t self) {
    for (std::size_t id : ids) {
      if (t.requires_grad(id)) t.grad(id) += t.grad(self);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [ai, bi](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            if (t.requires_grad(ai)) t.grad(ai) += g.cwiseProduct(t.value(bi));
                            if (t.requires_grad(bi)) t.grad(bi) += g.cwiseProduct(t.value(ai));
                          });
}

Var affine_scalar(const Var& a, double scale, double shift) {
  Tensor y = (a.value().array() * scale + shift).matrix();
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai, scale](Tape& t, std::size_t self) {
    t.grad(ai) += scale * t.grad(self);
  });
}

Var relu(const Var& a) {
  Tensor y = a.value().cwiseMax(0.0);
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai](Tape& t, std::size_t self) {
    t.grad(ai) += (t.value(ai).array() > 0.0).select(t.grad(self).array(), 0.0).matrix();
  });
}

Var softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& s = t.value(self);
    Tensor& ga = t.grad(ai);
    for (Index i = 0; i < s.rows(); ++i) {
      const double dot = g.row(i).dot(s.row(i));
      ga.row(i) += s.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
  });
}

Var l2_normalize_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor y = Tensor::Zero(x.rows(), x.cols());
  Eigen::VectorXd norms(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    norms(i) = x.row(i).norm();
    if (norms(i) > 0.0) y.row(i) = x.row(i) / norms(i);
  }
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai, norms](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad(ai);
    for (Index i = 0; i < yv.rows(); ++i) {
      if (norms(i) == 0.0) continue;
      const double dot = g.row(i).dot(yv.row(i));
      ga.row(i) += (g.row(i) - dot * yv.row(i)) / norms(i);
    }
  });
}

Var cosine_rows(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.cols(), "cosine_rows: width mismatch");
  require(bv.rows() == av.rows() || bv.rows() == 1, "cosine_rows: row mismatch");
  const bool broadcast = bv.rows() == 1 && av.rows() != 1;
  Tensor y = Tensor::Zero(av.rows(), 1);
  for (Index i = 0; i < av.rows(); ++i) {
    const auto brow = bv.row(broadcast ? 0 : i);
    const double na = av.row(i).norm();
    const double nb = brow.norm();
    if (na > 0.0 && nb > 0.0) y(i, 0) = av.row(i).dot(brow) / (na * nb);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ai, bi, broadcast](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& s = t.value(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    const bool need_a = t.requires_grad(ai);
    const bool need_b = t.requires_grad(bi);
    for (Index i = 0; i < av.rows(); ++i) {
      const Index br = broadcast ? 0 : i;
      const double na = av.row(i).norm();
      const double nb = bv.row(br).norm();
      if (na == 0.0 || nb == 0.0) continue;
      const double gi = g(i, 0);
      if (need_a) {
        t.grad(ai).row(i) += gi * (bv.row(br) / (na * nb) - s(i, 0) * av.row(i) / (na * na));
      }
      if (need_b) {
        t.grad(bi).row(br) += gi * (av.row(i) / (na * nb) - s(i, 0) * bv.row(br) / (nb * nb));
      }
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor y(rows, cols);
  std::vector<std::pair<std::size_t, Index>> layout;
  Index offset = 0;
  for (const Var& p : parts) {
    y.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return parts[0].tape()->record(std::move(y), parts, [layout](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (const auto& [id, off] : layout) {
      if (t.requires_grad(id)) t.grad(id) += g.middleCols(off, t.value(id).cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor y(rows, cols);
  std::vector<std::pair<std::size_t, Index>> layout;
  Index offset = 0;
  for (const Var& p : parts) {
    y.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.rows();
  }
  return parts[0].tape()->record(std::move(y), parts, [layout](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (const auto& [id, off] : layout) {
      if (t.requires_grad(id)) t.grad(id) += g.middleRows(off, t.value(id).rows());
    }
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  require(rows * cols == a.value().size(), "reshape: element count changes");
  Tensor y = Eigen::Map<const Tensor>(a.value().data(), rows, cols);
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai](Tape& t, std::size_t self) {
    Tensor& ga = t.grad(ai);
    ga += Eigen::Map<const Tensor>(t.grad(self).data(), ga.rows(), ga.cols());
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  const std::size_t ai = a.id();
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [ai, start, count](Tape& t, std::size_t self) {
                            t.grad(ai).middleCols(start, count) += t.grad(self);
                          });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  const Tensor& x = a.value();
  Tensor y(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < x.rows(), "gather_rows: index out of range");
    y.row(static_cast<Index>(i)) = x.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Var scatter_sum(const Var& messages, std::span<const int> targets, Index out_rows) {
  const Tensor& m = messages.value();
  require(static_cast<Index>(targets.size()) == m.rows(), "scatter_sum: one target per message");
  Tensor y = Tensor::Zero(out_rows, m.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= out_rows) {
      throw InvalidInput("scatter_sum: target " + std::to_string(targets[i]) + " out of range");
    }
    y.row(targets[i]) += m.row(static_cast<Index>(i));
  }
  std::vector<int> idx(targets.begin(), targets.end());
  const std::size_t mi = messages.id();
  return messages.tape()->record(
      std::move(y), {messages}, [mi, idx = std::move(idx)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gm = t.grad(mi);
        for (std::size_t i = 0; i < idx.size(); ++i) gm.row(static_cast<Index>(i)) += g.row(idx[i]);
      });
}

Var relmul(BranchKind kind, const Var& x, const Var& r) {
  Tensor y = relmul_rows(kind, x.value(), r.value());
  const std::size_t xi = x.id(), ri = r.id();
  return x.tape()->record(std::move(y), {x, r}, [kind, xi, ri](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(xi)) t.grad(xi) += relmul_rows_grad(kind, g, t.value(ri));
    if (t.requires_grad(ri)) t.grad(ri) += relmul_rows_grad(kind, g, t.value(xi));
  });
}

namespace {

// out += f_r(x) for one pair of width-d rows.
void relmul_accumulate(BranchKind kind, const double* x, const double* r, double* out, Index d) {
  if (kind == BranchKind::Real) {
    for (Index j = 0; j < d; ++j) out[j] += x[j] * r[j];
    return;
  }
  const Index h = d / 2;
  for (Index j = 0; j < h; ++j) {
    const double xr = x[j], xi = x[j + h], rr = r[j], ri = r[j + h];
    switch (kind) {
      case BranchKind::Complex:
        out[j] += xr * rr - xi * ri;
        out[j + h] += xr * ri + xi * rr;
        break;
      case BranchKind::SplitComplex:
        out[j] += xr * rr + xi * ri;
        out[j + h] += xr * ri + xi * rr;
        break;
      case BranchKind::Dual:
        out[j] += xr * rr;
        out[j + h] += xr * ri + xi * rr;
        break;
      case BranchKind::Real:
        break;
    }
  }
}

// out += d<g, f_r(x)>/dx for one row; with x and r swapped this is d/dr.
void relmul_grad_accumulate(BranchKind kind, const double* g, const double* r, double* out, Index d) {
  if (kind == BranchKind::Real) {
    for (Index j = 0; j < d; ++j) out[j] += g[j] * r[j];
    return;
  }
  const Index h = d / 2;
  for (Index j = 0; j < h; ++j) {
    const double gr = g[j], gi = g[j + h], rr = r[j], ri = r[j + h];
    switch (kind) {
      case BranchKind::Complex:
        out[j] += gr * rr + gi * ri;
        out[j + h] += gi * rr - gr * ri;
        break;
      case BranchKind::SplitComplex:
        out[j] += gr * rr + gi * ri;
        out[j + h] += gr * ri + gi * rr;
        break;
      case BranchKind::Dual:
        out[j] += gr * rr + gi * ri;
        out[j + h] += gi * rr;
        break;
      case BranchKind::Real:
        break;
    }
  }
}

}  // namespace

Var relmul_scatter(BranchKind kind, const Var& states, const Var& rels, std::span<const int> src,
                   std::span<const int> rel, std::span<const int> dst, Index out_rows) {
  const Tensor& x = states.value();
  const Tensor& r = rels.value();
  require(x.cols() == r.cols(), "relmul_scatter: width mismatch");
  require(src.size() == rel.size() && src.size() == dst.size(), "relmul_scatter: edge arrays differ in length");
  check_width(kind, x.cols());
  const Index d = x.cols();
  for (std::size_t e = 0; e < src.size(); ++e) {
    require(src[e] >= 0 && src[e] < x.rows(), "relmul_scatter: source out of range");
    require(rel[e] >= 0 && rel[e] < r.rows(), "relmul_scatter: relation out of range");
    if (dst[e] < 0 || dst[e] >= out_rows) {
      throw InvalidInput("relmul_scatter: target " + std::to_string(dst[e]) + " out of range");
    }
  }
  Tensor y = Tensor::Zero(out_rows, d);
  for (std::size_t e = 0; e < src.size(); ++e) {
    relmul_accumulate(kind, x.row(src[e]).data(), r.row(rel[e]).data(), y.row(dst[e]).data(), d);
  }
  std::vector<int> s(src.begin(), src.end()), q(rel.begin(), rel.end()), t(dst.begin(), dst.end());
  const std::size_t xi = states.id(), ri = rels.id();
  return states.tape()->record(
      std::move(y), {states, rels},
      [kind, xi, ri, d, s = std::move(s), q = std::move(q), t = std::move(t)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv = tp.value(xi);
        const Tensor& rv = tp.value(ri);
        if (tp.requires_grad(xi)) {
          Tensor& gx = tp.grad(xi);
          for (std::size_t e = 0; e < s.size(); ++e) {
            relmul_grad_accumulate(kind, g.row(t[e]).data(), rv.row(q[e]).data(), gx.row(s[e]).data(), d);
          }
        }
        if (tp.requires_grad(ri)) {
          Tensor& gr = tp.grad(ri);
          for (std::size_t e = 0; e < s.size(); ++e) {
            relmul_grad_accumulate(kind, g.row(t[e]).data(), xv.row(s[e]).data(), gr.row(q[e]).data(), d);
          }
        }
      });
}

Var layer_norm_rows(const Var& a, double eps) {
  const Tensor& x = a.value();
  const auto n = static_cast<double>(x.cols());
  Tensor y(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / n;
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai, inv_std, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad(ai);
    for (Index i = 0; i < yv.rows(); ++i) {
      const double gm = g.row(i).mean();
      const double gy = g.row(i).dot(yv.row(i)) / n;
      ga.row(i).array() += inv_std(i) * (g.row(i).array() - gm - yv.row(i).array() * gy);
    }
  });
}

Var scale_rows(const Var& x, const Var& w) {
  require(w.cols() == 1 && w.rows() == x.rows(), "scale_rows: weight must be a column per row");
  Tensor y = x.value().array().colwise() * w.value().col(0).array();
  const std::size_t xi = x.id(), wi = w.id();
  return x.tape()->record(std::move(y), {x, w}, [xi, wi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(xi)) {
      t.grad(xi).array() += g.array().colwise() * t.value(wi).col(0).array();
    }
    if (t.requires_grad(wi)) {
      t.grad(wi).col(0) += g.cwiseProduct(t.value(xi)).rowwise().sum();
    }
  });
}

Var normalize_row_sums(const Var& a) {
  const Tensor& x = a.value();
  Eigen::VectorXd sums = x.rowwise().sum();
  require((sums.array() > 0.0).all(), "normalize_row_sums: rows must have a positive sum");
  Tensor y = x.array().colwise() / sums.array();
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai, sums](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad(ai);
    for (Index i = 0; i < yv.rows(); ++i) {
      const double dot = g.row(i).dot(yv.row(i));
      ga.row(i).array() += (g.row(i).array() - dot) / sums(i);
    }
  });
}

Var sum(const Var& a) {
  Tensor y(1, 1);
  y(0, 0) = a.value().sum();
  const std::size_t ai = a.id();
  return a.tape()->record(std::move(y), {a}, [ai](Tape& t, std::size_t self) {
    t.grad(ai).array() += t.grad(self)(0, 0);
  });
}

Var mean_row_entropy(const Var& p) {
  const Tensor& x = p.value();
  require(x.rows() > 0, "mean_row_entropy: no rows");
  const double n = static_cast<double>(x.rows());
  double h = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index k = 0; k < x.cols(); ++k) {
      const double v = x(i, k);
      if (v > 0.0) h -= v * std::log(v);
    }
  }
  Tensor y(1, 1);
  y(0, 0) = h / n;
  const std::size_t pi = p.id();
  return p.tape()->record(std::move(y), {p}, [pi, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    const Tensor& x = t.value(pi);
    Tensor& gp = t.grad(pi);
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index k = 0; k < x.cols(); ++k) {
        const double v = x(i, k);
        if (v > 0.0) gp(i, k) -= g * (std::log(v) + 1.0) / n;
      }
    }
  });
}

double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

Var weighted_bce_with_logits(const Var& scores, const Tensor& targets, const Tensor& weights) {
  const Tensor& s = scores.value();
  require(targets.rows() == s.rows() && targets.cols() == s.cols(), "bce: target shape");
  require(weights.rows() == s.rows() && weights.cols() == s.cols(), "bce: weight shape");
  require(s.rows() > 0, "bce: empty batch");
  const Eigen::VectorXd row_w = weights.rowwise().sum();
  require((row_w.array() > 0.0).all(), "bce: each row needs positive total weight");
  const double b = static_cast<double>(s.rows());
  double loss = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    double row = 0.0;
    for (Index j = 0; j < s.cols(); ++j) row += weights(i, j) * bce_with_logits(s(i, j), targets(i, j));
    loss += row / row_w(i);
  }
  Tensor y(1, 1);
  y(0, 0) = loss / b;
  const std::size_t si = scores.id();
  return scores.tape()->record(
      std::move(y), {scores}, [si, targets, weights, row_w, b](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        const Tensor& s = t.value(si);
        Tensor& gs = t.grad(si);
        for (Index i = 0; i < s.rows(); ++i) {
          for (Index j = 0; j < s.cols(); ++j) {
            gs(i, j) += g * weights(i, j) * (stable_sigmoid(s(i, j)) - targets(i, j)) / (b * row_w(i));
          }
        }
      });
}

// ---- gradient check -------------------------------------------------------

GradCheckReport check_gradients(const std::function<Var(Tape&)>& forward,
                                std::span<Parameter* const> params, std::uint64_t seed,
                                int coords_per_param, double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    const Var loss = forward(tape);
    if (!std::isfinite(loss.scalar())) throw NonFiniteError("gradient check: non-finite loss");
    tape.backward(loss);
  }
  auto evaluate = [&forward]() {
    Tape tape;
    const double v = forward(tape).scalar();
    if (!std::isfinite(v)) throw NonFiniteError("gradient check: non-finite perturbed loss");
    return v;
  };

  Rng rng(seed);
  GradCheckReport report;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    const Index n = p->size();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    // partial Fisher-Yates: the first `take` entries become the sample
    const Index take = std::min<Index>(n, coords_per_param);
    for (Index i = 0; i < take; ++i) {
      const Index j = i + static_cast<Index>(rng.index(static_cast<std::uint64_t>(n - i)));
      std::swap(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
    }
    for (Index c = 0; c < take; ++c) {
      double& slot = p->value.data()[coords[static_cast<std::size_t>(c)]];
      const double original = slot;
      slot = original + step;
      const double up = evaluate();
      slot = original - step;
      const double down = evaluate();
      slot = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad.data()[coords[static_cast<std::size_t>(c)]];
      const double err = std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8);
      ++report.coordinates_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_parameter = p->name;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace gammakg::ad
