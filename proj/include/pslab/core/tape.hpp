#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its Vars in evaluation order.
// backward() seeds the scalar loss with 1 and replays the recorded adjoint
// closures in reverse, accumulating into node gradients. Parameter leaves
// created with Tape::parameter write their gradients back into the owning
// ParamSet once the sweep is done.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pslab/core/dense.hpp"
#include "pslab/core/param_set.hpp"

namespace pslab {

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  using Mat = Matrix<Scalar>;

  Var() = default;

  const Mat& value() const { return tape_->value(id_); }
  /// Gradient after backward(); a zero matrix when the loss does not depend on this node.
  Mat grad() const { return tape_->grad_or_zero(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<Scalar>;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using VarT = Var<Scalar>;
  // Receives the tape and the index of the node whose adjoint is being propagated.
  using Adjoint = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarT constant(Mat value) { return push(std::move(value), false, {}); }

  VarT variable(Mat value) { return push(std::move(value), true, {}); }

  /// Leaf bound to a ParamSet entry: backward() adds its gradient to the slot.
  VarT parameter(ParamSet<Scalar>& params, const std::string& name) {
    auto& entry = params.entry(name);
    VarT v = push(Mat(), true, {});
    nodes_.back().external = &entry.value;
    nodes_.back().sink = &entry;
    return v;
  }

  /// Appends a derived node. It requires a gradient iff any input does.
  VarT record(Mat value, std::initializer_list<VarT> inputs, Adjoint adjoint) {
    bool needs = false;
    for (const auto& in : inputs) {
      require(in.tape_ == this, "operands recorded on different tapes");
      needs = needs || nodes_[in.id_].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(adjoint) : Adjoint{});
  }

  void backward(const VarT& loss) {
    require(loss.tape_ == this, "loss recorded on a different tape");
    const auto& lv = value(loss.id_);
    require(lv.rows() == 1 && lv.cols() == 1,
            "backward() needs a scalar loss, got " + shape_string(lv));
    for (auto& n : nodes_) {
      n.grad.resize(0, 0);
      n.grad_ready = false;
    }
    if (nodes_[loss.id_].requires_grad) {
      nodes_[loss.id_].grad = Mat::Ones(1, 1);
      nodes_[loss.id_].grad_ready = true;
    }
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad_ready && n.adjoint) n.adjoint(*this, i);
    }
    for (auto& n : nodes_) {
      if (n.sink == nullptr) continue;
      if (n.grad_ready) n.sink->grad += n.grad;
      n.sink->has_grad = true;
    }
  }

  const Mat& value(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adjoint of a node during the backward sweep.
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }

  Mat grad_or_zero(std::size_t id) const {
    const auto& n = nodes_[id];
    if (n.grad_ready) return n.grad;
    return Mat::Zero(value(id).rows(), value(id).cols());
  }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.grad_ready) {
      n.grad.noalias() = g;
      n.grad_ready = true;
    } else {
      n.grad.noalias() += g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var<Scalar>;

  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool grad_ready = false;
    Adjoint adjoint;
    typename ParamSet<Scalar>::Entry* sink = nullptr;
    const Mat* external = nullptr;  // parameter leaves read the ParamSet value in place
  };

  VarT push(Mat value, bool requires_grad, Adjoint adjoint) {
    nodes_.push_back(Node{std::move(value), Mat(), requires_grad, false, std::move(adjoint), nullptr, nullptr});
    return VarT(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. All are free functions over Var<Scalar>; shapes are checked
// eagerly and violations raise ConfigError.

namespace detail {

template <typename Scalar>
void same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
              shape_string(b.value()));
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  const auto ia = a.id();
  return a.tape().record(a.value() * factor, {a}, [ia, factor](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self) * factor);
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar offset) {
  const auto ia = a.id();
  return a.tape().record((a.value().array() + offset).matrix(), {a},
                         [ia](Tape<Scalar>& t, std::size_t self) { t.accumulate(ia, t.grad(self)); });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) { return scale(a, Scalar(-1)); }
template <typename Scalar>
Var<Scalar> operator*(Scalar factor, const Var<Scalar>& a) { return scale(a, factor); }

template <typename Scalar>
Var<Scalar> hadamard(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::same_shape(a, b, "hadamard");
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                         [ia, ib](Tape<Scalar>& t, std::size_t self) {
                           t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
                           t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
                         });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ " + shape_string(a.value()) +
                                    " x " + shape_string(b.value()));
  const auto ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.accumulate(ia, t.grad(self) * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * t.grad(self));
  });
}

/// x * W + b with b a 1 x out row broadcast over the batch.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  require(x.cols() == w.rows(), "affine: input width " + std::to_string(x.cols()) +
                                    " does not match weight " + shape_string(w.value()));
  require(b.rows() == 1 && b.cols() == w.cols(), "affine: bias shape " + shape_string(b.value()));
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  Matrix<Scalar> out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape().record(std::move(out), {x, w, b}, [ix, iw, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
    if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& a) {
  const auto ia = a.id();
  const auto& x = a.value();
  auto sig = std::make_shared<Matrix<Scalar>>((Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix());
  Matrix<Scalar> out = x.cwiseProduct(*sig);
  return a.tape().record(std::move(out), {a}, [ia, sig](Tape<Scalar>& t, std::size_t self) {
    const auto s = sig->array();
    // d/dx x*s(x) = s + y (1 - s), with y = x*s the forward output.
    t.accumulate(ia, (t.grad(self).array() * (s + t.value(self).array() * (Scalar(1) - s))).matrix());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape().record(a.value().cwiseMax(Scalar(0)), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, (t.value(ia).array() > Scalar(0)).select(t.grad(self), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape().record(a.value().array().exp().matrix(), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  const auto ia = a.id();
  return a.tape().record(a.value().array().square().matrix(), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, Scalar(2) * t.grad(self).cwiseProduct(t.value(ia)));
  });
}

/// Clamp to [lo, hi]; the gradient is blocked where the bound is active.
template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& a, Scalar lo, Scalar hi) {
  const auto ia = a.id();
  return a.tape().record(a.value().cwiseMax(lo).cwiseMin(hi), {a}, [ia, lo, hi](Tape<Scalar>& t, std::size_t self) {
    const auto x = t.value(ia).array();
    t.accumulate(ia, ((x > lo) && (x < hi)).select(t.grad(self).array(), Scalar(0)).matrix());
  });
}

/// Copy of the value with no path back to `a`.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& a) {
  return a.tape().constant(a.value());
}

template <typename Scalar>
Var<Scalar> concat_cols(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.rows() == b.rows(), "concat_cols: row counts differ " + shape_string(a.value()) + " vs " +
                                    shape_string(b.value()));
  const auto ia = a.id(), ib = b.id();
  const auto ca = a.cols(), cb = b.cols();
  Matrix<Scalar> out(a.rows(), ca + cb);
  out.leftCols(ca) = a.value();
  out.rightCols(cb) = b.value();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, ca, cb](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).leftCols(ca));
    t.accumulate(ib, t.grad(self).rightCols(cb));
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape().record(a.value().middleCols(start, count), {a},
                         [ia, rows, cols, start, count](Tape<Scalar>& t, std::size_t self) {
                           Matrix<Scalar> g = Matrix<Scalar>::Zero(rows, cols);
                           g.middleCols(start, count) = t.grad(self);
                           t.accumulate(ia, g);
                         });
}

/// Multiplies row i of `a` (n x d) by c(i, 0) for c of shape n x 1.
template <typename Scalar>
Var<Scalar> mul_col(const Var<Scalar>& a, const Var<Scalar>& c) {
  require(c.cols() == 1 && c.rows() == a.rows(), "mul_col: column factor shape " + shape_string(c.value()));
  const auto ia = a.id(), ic = c.id();
  Matrix<Scalar> out = a.value().array().colwise() * c.value().col(0).array();
  return a.tape().record(std::move(out), {a, c}, [ia, ic](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, (g.array().colwise() * t.value(ic).col(0).array()).matrix());
    if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [ia, rows, cols](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, Matrix<Scalar>::Constant(rows, cols, t.grad(self)(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  require(a.value().size() > 0, "mean of an empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

template <typename Scalar>
Var<Scalar> row_sum(const Var<Scalar>& a) {
  const auto ia = a.id();
  const auto cols = a.cols();
  return a.tape().record(a.value().rowwise().sum(), {a}, [ia, cols](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).replicate(1, cols));
  });
}

/// Mean over all elements of (a - b)^2.
template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::same_shape(a, b, "mse");
  require(a.value().size() > 0, "mse of empty tensors");
  const auto ia = a.id(), ib = b.id();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(a.value().size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm() * inv_n;
  return a.tape().record(std::move(out), {a, b}, [ia, ib, inv_n](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)(0, 0) * Scalar(2) * inv_n;
    const Matrix<Scalar> diff = (t.value(ia) - t.value(ib)) * g;
    t.accumulate(ia, diff);
    t.accumulate(ib, -diff);
  });
}

/// Row-wise cosine similarity (n x 1). Rows where either side has zero norm
/// yield 0 and pass no gradient.
template <typename Scalar>
Var<Scalar> row_cosine(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::same_shape(a, b, "row_cosine");
  const auto ia = a.id(), ib = b.id();
  const auto& av = a.value();
  const auto& bv = b.value();
  const Vector<Scalar> na = av.rowwise().norm();
  const Vector<Scalar> nb = bv.rowwise().norm();
  const Vector<Scalar> dots = av.cwiseProduct(bv).rowwise().sum();
  Matrix<Scalar> out(av.rows(), 1);
  for (Eigen::Index i = 0; i < av.rows(); ++i)
    out(i, 0) = (na(i) > Scalar(0) && nb(i) > Scalar(0)) ? dots(i) / (na(i) * nb(i)) : Scalar(0);
  return a.tape().record(std::move(out), {a, b}, [ia, ib, na, nb](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    const auto& cos = t.value(self);
    Matrix<Scalar> ga = Matrix<Scalar>::Zero(av.rows(), av.cols());
    Matrix<Scalar> gb = Matrix<Scalar>::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      if (!(na(i) > Scalar(0) && nb(i) > Scalar(0))) continue;
      const Scalar c = cos(i, 0);
      ga.row(i) = g(i, 0) * (bv.row(i) / (na(i) * nb(i)) - c * av.row(i) / (na(i) * na(i)));
      gb.row(i) = g(i, 0) * (av.row(i) / (na(i) * nb(i)) - c * bv.row(i) / (nb(i) * nb(i)));
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

}  // namespace pslab
