/* DeskST - a desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 DeskST Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "deskst/common.hpp"
#include "deskst/rng.hpp"

namespace deskst {

// Dense tensor with reverse-mode differentiation. Tensors are rank 0, 1 or 2
// (scalar, vector, matrix) and stored row-major; a rank-1 tensor of n elements
// occupies a 1 x n matrix, a scalar a 1 x 1 matrix. Values are immutable once
// produced by an operation; only gradient buffers and leaf values (through the
// optimizer) mutate.

template <class S>
struct Node {
  std::vector<Index> shape;
  Mat<S> value;
  Mat<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }

  Mat<S>& grad_ref() {
    if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
    return grad;
  }
};

template <class S>
class Tensor;

/// Ordered record of forward operations; replaying it in reverse propagates
/// gradients. Single-owner: a tape must not be shared between threads.
template <class S>
class Tape {
 public:
  void record(std::function<void()> backward_fn,
              std::vector<std::shared_ptr<Node<S>>> touched) {
    records_.push_back(std::move(backward_fn));
    for (auto& n : touched) nodes_.push_back(std::move(n));
  }

  size_t size() const { return records_.size(); }

  /// Propagate d(loss)/d(node) into every requires_grad leaf reachable from
  /// loss. Non-leaf gradients are transient per call, so repeated calls
  /// accumulate cleanly into leaves.
  void backward(const Tensor<S>& loss);

  /// Zero every gradient buffer touched by this tape, leaves included.
  void zero_grads() {
    for (auto& n : nodes_) {
      if (n->grad.size() != 0) n->grad.setZero();
    }
  }

 private:
  std::vector<std::function<void()>> records_;
  std::vector<std::shared_ptr<Node<S>>> nodes_;
};

template <class S>
inline thread_local Tape<S>* tl_current_tape = nullptr;

template <class S>
Tape<S>* current_tape() {
  return tl_current_tape<S>;
}

/// RAII guard that makes a tape the recording target for the current thread.
/// With no scope active, operations run in inference mode and record nothing.
template <class S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& t) : prev_(tl_current_tape<S>) {
    tl_current_tape<S> = &t;
  }
  ~TapeScope() { tl_current_tape<S> = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

/// RAII guard that suspends recording even if a tape is active, so frozen
/// sub-computations (for example a fixed teacher network) never enter the
/// surrounding training graph.
template <class S>
class InferenceScope {
 public:
  InferenceScope() : prev_(tl_current_tape<S>) { tl_current_tape<S> = nullptr; }
  ~InferenceScope() { tl_current_tape<S> = prev_; }
  InferenceScope(const InferenceScope&) = delete;
  InferenceScope& operator=(const InferenceScope&) = delete;

 private:
  Tape<S>* prev_;
};

template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(S v, bool requires_grad = false) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return make({}, std::move(m), requires_grad);
  }

  static Tensor from_matrix(Mat<S> m, bool requires_grad = false) {
    std::vector<Index> shape{m.rows(), m.cols()};
    return make(std::move(shape), std::move(m), requires_grad);
  }

  static Tensor from_vector(const std::vector<S>& v,
                            bool requires_grad = false) {
    Mat<S> m(1, static_cast<Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
    return make({static_cast<Index>(v.size())}, std::move(m), requires_grad);
  }

  static Tensor row_vector(Mat<S> m, bool requires_grad = false) {
    if (m.rows() != 1)
      throw DimensionError("row_vector expects a single row, got " +
                           std::to_string(m.rows()));
    Index n = m.cols();
    return make({n}, std::move(m), requires_grad);
  }

  static Tensor zeros(const std::vector<Index>& shape,
                      bool requires_grad = false) {
    auto [r, c] = storage_dims(shape);
    return make(shape, Mat<S>::Zero(r, c), requires_grad);
  }

  static Tensor constant(const std::vector<Index>& shape, S v) {
    auto [r, c] = storage_dims(shape);
    return make(shape, Mat<S>::Constant(r, c, v), false);
  }

  /// Row-major flat data, per the stated layout.
  static Tensor from_flat(const std::vector<Index>& shape,
                          const std::vector<S>& data,
                          bool requires_grad = false) {
    if (static_cast<Index>(data.size()) != shape_numel(shape))
      throw DimensionError("flat data of length " +
                           std::to_string(data.size()) +
                           " does not fill shape " + shape_str(shape));
    auto [r, c] = storage_dims(shape);
    Mat<S> m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = data[static_cast<size_t>(i * c + j)];
    return make(shape, std::move(m), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<Index>& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index numel() const { return node_->value.size(); }
  Index rows() const { return node_->rows(); }
  Index cols() const { return node_->cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  const Mat<S>& m() const { return node_->value; }
  /// Mutable access to the value; reserved for leaf updates (optimizer,
  /// loading). Mutating an op output invalidates recorded gradients.
  Mat<S>& m_mut() { return node_->value; }

  const Mat<S>& grad() const { return node_->grad; }
  Mat<S>& grad_ref() { return node_->grad_ref(); }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() {
    if (node_->grad.size() != 0) node_->grad.setZero();
  }

  S item() const {
    if (numel() != 1)
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value(0, 0);
  }

  bool all_finite() const { return node_->value.allFinite(); }

  std::shared_ptr<Node<S>> node() const { return node_; }

  /// Result-node factory for operations; requires_grad is decided by the
  /// caller (typically: any input requires grad and a tape is active).
  static Tensor op_result(std::vector<Index> shape, Mat<S> value,
                          bool requires_grad) {
    Tensor t = make(std::move(shape), std::move(value), requires_grad);
    t.node_->leaf = false;
    return t;
  }

 private:
  static std::pair<Index, Index> storage_dims(const std::vector<Index>& shape) {
    for (Index e : shape)
      if (e <= 0)
        throw DimensionError("non-positive extent in shape " +
                             shape_str(shape));
    switch (shape.size()) {
      case 0:
        return {1, 1};
      case 1:
        return {1, shape[0]};
      case 2:
        return {shape[0], shape[1]};
      default:
        throw DimensionError("rank > 2 unsupported: " + shape_str(shape));
    }
  }

  static Tensor make(std::vector<Index> shape, Mat<S> value,
                     bool requires_grad) {
    auto [r, c] = storage_dims(shape);
    if (value.rows() != r || value.cols() != c)
      throw DimensionError("storage " + std::to_string(value.rows()) + "x" +
                           std::to_string(value.cols()) +
                           " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<Node<S>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <class S>
bool recording(std::initializer_list<const Tensor<S>*> inputs) {
  if (current_tape<S>() == nullptr) return false;
  for (const Tensor<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <class S, class Fn>
void record(Fn&& fn, std::vector<std::shared_ptr<Node<S>>> touched) {
  current_tape<S>()->record(std::forward<Fn>(fn), std::move(touched));
}

}  // namespace detail

template <class S>
void Tape<S>::backward(const Tensor<S>& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward expects a scalar loss, got shape " +
                        shape_str(loss.shape()));
  for (auto& n : nodes_) {
    if (!n->leaf && n->grad.size() != 0) n->grad.setZero();
  }
  loss.node()->grad_ref().array() += S(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

/// Backward through the currently scoped tape.
template <class S>
void backward(const Tensor<S>& loss) {
  Tape<S>* t = current_tape<S>();
  if (t == nullptr)
    throw ContractError("backward called with no active tape");
  t->backward(loss);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// C = op(A) * op(B) with optional transposes, BLAS style.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool trans_a = false,
                 bool trans_b = false) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul expects rank-2 operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const Index am = trans_a ? a.cols() : a.rows();
  const Index ak = trans_a ? a.rows() : a.cols();
  const Index bk = trans_b ? b.cols() : b.rows();
  const Index bn = trans_b ? b.rows() : b.cols();
  if (ak != bk)
    throw DimensionError("matmul inner extents disagree: " +
                         shape_str(a.shape()) + (trans_a ? "^T" : "") + " x " +
                         shape_str(b.shape()) + (trans_b ? "^T" : ""));
  Mat<S> c(am, bn);
  if (!trans_a && !trans_b)
    c.noalias() = a.m() * b.m();
  else if (!trans_a && trans_b)
    c.noalias() = a.m() * b.m().transpose();
  else if (trans_a && !trans_b)
    c.noalias() = a.m().transpose() * b.m();
  else
    c.noalias() = a.m().transpose() * b.m().transpose();

  bool rec = detail::recording<S>({&a, &b});
  Tensor<S> out = Tensor<S>::op_result({am, bn}, std::move(c), rec);
  if (rec) {
    auto an = a.node(), bn_ = b.node(), on = out.node();
    detail::record<S>(
        [an, bn_, on, trans_a, trans_b]() {
          const Mat<S>& g = on->grad_ref();
          if (an->requires_grad) {
            Mat<S>& ga = an->grad_ref();
            if (!trans_a && !trans_b)
              ga.noalias() += g * bn_->value.transpose();
            else if (!trans_a && trans_b)
              ga.noalias() += g * bn_->value;
            else if (trans_a && !trans_b)
              ga.noalias() += bn_->value * g.transpose();
            else
              ga.noalias() += bn_->value.transpose() * g.transpose();
          }
          if (bn_->requires_grad) {
            Mat<S>& gb = bn_->grad_ref();
            if (!trans_a && !trans_b)
              gb.noalias() += an->value.transpose() * g;
            else if (!trans_a && trans_b)
              gb.noalias() += g.transpose() * an->value;
            else if (trans_a && !trans_b)
              gb.noalias() += an->value * g;
            else
              gb.noalias() += g.transpose() * an->value.transpose();
          }
        },
        {an, bn_, on});
  }
  return out;
}

namespace detail {

enum class Broadcast { kNone, kARow, kBRow, kAScalar, kBScalar };

// Shapes equal, or one operand is a scalar, or one is a vector matching the
// other's column count (expanded along the leading axis).
template <class S>
Broadcast broadcast_kind(const Tensor<S>& a, const Tensor<S>& b,
                         const char* opname) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.numel() == 1) return Broadcast::kAScalar;
  if (b.numel() == 1) return Broadcast::kBScalar;
  if (b.rank() == 1 && a.rank() == 2 && b.cols() == a.cols())
    return Broadcast::kBRow;
  if (a.rank() == 1 && b.rank() == 2 && a.cols() == b.cols())
    return Broadcast::kARow;
  throw DimensionError(std::string(opname) + ": shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                       " are not broadcastable");
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  using detail::Broadcast;
  Broadcast k = detail::broadcast_kind(a, b, "add");
  const Tensor<S>& big = (k == Broadcast::kARow || k == Broadcast::kAScalar) ? b : a;
  Mat<S> v;
  switch (k) {
    case Broadcast::kNone:
      v = a.m() + b.m();
      break;
    case Broadcast::kAScalar:
      v = b.m().array() + a.m()(0, 0);
      break;
    case Broadcast::kBScalar:
      v = a.m().array() + b.m()(0, 0);
      break;
    case Broadcast::kBRow:
      v = a.m().rowwise() + b.m().row(0);
      break;
    case Broadcast::kARow:
      v = b.m().rowwise() + a.m().row(0);
      break;
  }
  bool rec = detail::recording<S>({&a, &b});
  Tensor<S> out = Tensor<S>::op_result(big.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record<S>(
        [an, bn, on, k]() {
          const Mat<S>& g = on->grad_ref();
          auto accum = [&](const std::shared_ptr<Node<S>>& n, bool reduced) {
            if (!n->requires_grad) return;
            Mat<S>& gn = n->grad_ref();
            if (!reduced)
              gn += g;
            else if (n->value.size() == 1)
              gn(0, 0) += g.sum();
            else
              gn.row(0) += g.colwise().sum();
          };
          accum(an, k == detail::Broadcast::kARow || k == detail::Broadcast::kAScalar);
          accum(bn, k == detail::Broadcast::kBRow || k == detail::Broadcast::kBScalar);
        },
        {an, bn, on});
  }
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Mat<S> v = a.m() * c;
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result(a.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on, c]() {
          if (an->requires_grad) an->grad_ref() += on->grad_ref() * c;
        },
        {an, on});
  }
  return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, scale(b, S(-1)));
}

/// Elementwise product under the same broadcast rules as add.
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  using detail::Broadcast;
  Broadcast k = detail::broadcast_kind(a, b, "mul");
  const Tensor<S>& big = (k == Broadcast::kARow || k == Broadcast::kAScalar) ? b : a;
  Mat<S> v;
  switch (k) {
    case Broadcast::kNone:
      v = a.m().cwiseProduct(b.m());
      break;
    case Broadcast::kAScalar:
      v = b.m() * a.m()(0, 0);
      break;
    case Broadcast::kBScalar:
      v = a.m() * b.m()(0, 0);
      break;
    case Broadcast::kBRow:
      v = a.m().array().rowwise() * b.m().row(0).array();
      break;
    case Broadcast::kARow:
      v = b.m().array().rowwise() * a.m().row(0).array();
      break;
  }
  bool rec = detail::recording<S>({&a, &b});
  Tensor<S> out = Tensor<S>::op_result(big.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record<S>(
        [an, bn, on, k]() {
          const Mat<S>& g = on->grad_ref();
          auto accum = [&](const std::shared_ptr<Node<S>>& n,
                           const std::shared_ptr<Node<S>>& other, bool reduced) {
            if (!n->requires_grad) return;
            Mat<S>& gn = n->grad_ref();
            if (!reduced) {
              if (other->value.size() == 1)
                gn += g * other->value(0, 0);
              else if (other->value.rows() == 1 && g.rows() > 1)
                gn += (g.array().rowwise() * other->value.row(0).array()).matrix();
              else
                gn += g.cwiseProduct(other->value);
            } else if (n->value.size() == 1) {
              gn(0, 0) += g.cwiseProduct(other->value).sum();
            } else {
              gn.row(0) += g.cwiseProduct(other->value).colwise().sum();
            }
          };
          accum(an, bn, k == detail::Broadcast::kARow || k == detail::Broadcast::kAScalar);
          accum(bn, an, k == detail::Broadcast::kBRow || k == detail::Broadcast::kBScalar);
        },
        {an, bn, on});
  }
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  Mat<S> v = a.m().cwiseMax(S(0));
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result(a.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on]() {
          if (!an->requires_grad) return;
          an->grad_ref().array() +=
              on->grad_ref().array() *
              (an->value.array() > S(0)).template cast<S>();
        },
        {an, on});
  }
  return out;
}

/// log(max(x, floor)); gradient is 1/x where the clamp is inactive, 0 below.
template <class S>
Tensor<S> log_clamped(const Tensor<S>& a, S floor = S(1e-10)) {
  Mat<S> v = a.m().cwiseMax(floor).array().log();
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result(a.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on, floor]() {
          if (!an->requires_grad) return;
          an->grad_ref().array() +=
              on->grad_ref().array() *
              (an->value.array() >= floor).template cast<S>() /
              an->value.array().max(floor);
        },
        {an, on});
  }
  return out;
}

/// Deterministic counter-based dropout key: the mask depends only on
/// (seed, step, stream) and the element index, never on call order.
struct DropoutKey {
  uint64_t seed = 0;
  uint64_t step = 0;
  uint64_t stream = 0;
};

template <class S>
Tensor<S> dropout(const Tensor<S>& a, double p, const DropoutKey& key) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout probability must be in [0,1), got " +
                      std::to_string(p));
  if (p == 0.0) return a;
  const S inv_keep = S(1.0 / (1.0 - p));
  Mat<S> mask(a.rows(), a.cols());
  const Index c = a.cols();
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < c; ++j) {
      double u = u64_to_unit(
          hash_u64(key.seed, key.step, key.stream,
                   static_cast<uint64_t>(i * c + j)));
      mask(i, j) = (u >= p) ? inv_keep : S(0);
    }
  Mat<S> v = a.m().cwiseProduct(mask);
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result(a.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    auto mask_ptr = std::make_shared<Mat<S>>(std::move(mask));
    detail::record<S>(
        [an, on, mask_ptr]() {
          if (an->requires_grad)
            an->grad_ref() += on->grad_ref().cwiseProduct(*mask_ptr);
        },
        {an, on});
  }
  return out;
}

/// Softmax along an axis: axis 1 normalizes each row, axis 0 each column;
/// a rank-1 tensor normalizes over its elements with axis 0. Max-subtraction
/// keeps large logits finite.
template <class S>
Tensor<S> softmax(const Tensor<S>& a, int axis) {
  const bool vec = a.rank() == 1;
  if ((vec && axis != 0) || (!vec && a.rank() == 2 && axis != 0 && axis != 1) ||
      a.rank() == 0)
    throw DimensionError("softmax axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(a.shape()));
  const bool rowwise = vec || axis == 1;
  Mat<S> x = rowwise ? a.m() : Mat<S>(a.m().transpose());
  Mat<S> y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    if (!x.row(i).allFinite())
      throw NumericError("softmax input is not finite");
    S mx = x.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (x.row(i).array() - mx).exp();
    y.row(i) = e / e.sum();
  }
  Mat<S> v = rowwise ? std::move(y) : Mat<S>(y.transpose());
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result(a.shape(), std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on, rowwise]() {
          if (!an->requires_grad) return;
          const Mat<S>& g0 = on->grad_ref();
          Mat<S> y2 = rowwise ? on->value : Mat<S>(on->value.transpose());
          Mat<S> g = rowwise ? g0 : Mat<S>(g0.transpose());
          Mat<S> dx(y2.rows(), y2.cols());
          for (Index i = 0; i < y2.rows(); ++i) {
            S dot = g.row(i).cwiseProduct(y2.row(i)).sum();
            dx.row(i) =
                (g.row(i).array() - dot) * y2.row(i).array();
          }
          if (rowwise)
            an->grad_ref() += dx;
          else
            an->grad_ref() += dx.transpose();
        },
        {an, on});
  }
  return out;
}

/// Row-wise log-softmax; the numerically stable base of both losses.
template <class S>
Tensor<S> log_softmax(const Tensor<S>& a) {
  if (a.rank() != 2)
    throw DimensionError("log_softmax expects rank-2, got " +
                         shape_str(a.shape()));
  Mat<S> y(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    if (!a.m().row(i).allFinite())
      throw NumericError("log_softmax input is not finite");
    S mx = a.m().row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> sh = a.m().row(i).array() - mx;
    S lse = std::log(sh.exp().sum());
    y.row(i) = sh - lse;
  }
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result(a.shape(), std::move(y), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on]() {
          if (!an->requires_grad) return;
          const Mat<S>& g = on->grad_ref();
          Mat<S>& ga = an->grad_ref();
          for (Index i = 0; i < g.rows(); ++i) {
            S gsum = g.row(i).sum();
            ga.row(i) += g.row(i) -
                         (on->value.row(i).array().exp() * gsum).matrix();
          }
        },
        {an, on});
  }
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  Mat<S> v(1, 1);
  v(0, 0) = a.m().sum();
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result({}, std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on]() {
          if (an->requires_grad)
            an->grad_ref().array() += on->grad_ref()(0, 0);
        },
        {an, on});
  }
  return out;
}

/// Reduce a matrix along an axis: axis 1 gives row sums (length m), axis 0
/// column sums (length n).
template <class S>
Tensor<S> sum_axis(const Tensor<S>& a, int axis) {
  if (a.rank() != 2 || (axis != 0 && axis != 1))
    throw DimensionError("sum_axis needs rank-2 and axis 0/1, got " +
                         shape_str(a.shape()) + " axis " +
                         std::to_string(axis));
  Mat<S> v;
  Index n;
  if (axis == 1) {
    n = a.rows();
    v = Mat<S>(1, n);
    v.row(0) = a.m().rowwise().sum().transpose();
  } else {
    n = a.cols();
    v = Mat<S>(1, n);
    v.row(0) = a.m().colwise().sum();
  }
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result({n}, std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    detail::record<S>(
        [an, on, axis]() {
          if (!an->requires_grad) return;
          const Mat<S>& g = on->grad_ref();
          Mat<S>& ga = an->grad_ref();
          if (axis == 1)
            ga.colwise() += g.row(0).transpose();
          else
            ga.rowwise() += g.row(0);
        },
        {an, on});
  }
  return out;
}

/// v[t] = a(t, ids[t]); the picked-logit primitive behind the likelihood loss.
template <class S>
Tensor<S> gather_rows(const Tensor<S>& a, const std::vector<int>& ids) {
  if (a.rank() != 2)
    throw DimensionError("gather_rows expects rank-2, got " +
                         shape_str(a.shape()));
  if (static_cast<Index>(ids.size()) != a.rows())
    throw ContractError("gather_rows: " + std::to_string(ids.size()) +
                        " ids for " + std::to_string(a.rows()) + " rows");
  Mat<S> v(1, a.rows());
  for (Index t = 0; t < a.rows(); ++t) {
    int k = ids[static_cast<size_t>(t)];
    if (k < 0 || k >= a.cols())
      throw ContractError("gather_rows: id " + std::to_string(k) +
                          " out of range [0," + std::to_string(a.cols()) +
                          ") at position " + std::to_string(t));
    v(0, t) = a.m()(t, k);
  }
  bool rec = detail::recording<S>({&a});
  Tensor<S> out = Tensor<S>::op_result({a.rows()}, std::move(v), rec);
  if (rec) {
    auto an = a.node();
    auto on = out.node();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    detail::record<S>(
        [an, on, ids_copy]() {
          if (!an->requires_grad) return;
          Mat<S>& ga = an->grad_ref();
          const Mat<S>& g = on->grad_ref();
          for (Index t = 0; t < ga.rows(); ++t)
            ga(t, (*ids_copy)[static_cast<size_t>(t)]) += g(0, t);
        },
        {an, on});
  }
  return out;
}

/// Select rows of an embedding table; backward scatter-adds into the table.
template <class S>
Tensor<S> embed_rows(const Tensor<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw DimensionError("embed_rows expects rank-2 table, got " +
                         shape_str(table.shape()));
  if (ids.empty()) throw ContractError("embed_rows: empty id list");
  Mat<S> v(static_cast<Index>(ids.size()), table.cols());
  for (size_t t = 0; t < ids.size(); ++t) {
    int k = ids[t];
    if (k < 0 || k >= table.rows())
      throw ContractError("embed_rows: id " + std::to_string(k) +
                          " out of range [0," + std::to_string(table.rows()) +
                          ")");
    v.row(static_cast<Index>(t)) = table.m().row(k);
  }
  bool rec = detail::recording<S>({&table});
  Tensor<S> out = Tensor<S>::op_result(
      {static_cast<Index>(ids.size()), table.cols()}, std::move(v), rec);
  if (rec) {
    auto tn = table.node();
    auto on = out.node();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    detail::record<S>(
        [tn, on, ids_copy]() {
          if (!tn->requires_grad) return;
          Mat<S>& gt = tn->grad_ref();
          const Mat<S>& g = on->grad_ref();
          for (size_t t = 0; t < ids_copy->size(); ++t)
            gt.row((*ids_copy)[t]) += g.row(static_cast<Index>(t));
        },
        {tn, on});
  }
  return out;
}

/// Concatenate rank-2 tensors along columns (the multi-head join).
template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  Index m = parts[0].rows();
  Index total = 0;
  bool rec = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m)
      throw DimensionError("concat_cols: inconsistent part shape " +
                           shape_str(p.shape()));
    total += p.cols();
    if (current_tape<S>() != nullptr && p.requires_grad()) rec = true;
  }
  Mat<S> v(m, total);
  Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.m();
    off += p.cols();
  }
  Tensor<S> out = Tensor<S>::op_result({m, total}, std::move(v), rec);
  if (rec) {
    std::vector<std::shared_ptr<Node<S>>> touched;
    touched.reserve(parts.size() + 1);
    for (const auto& p : parts) touched.push_back(p.node());
    auto on = out.node();
    auto nodes = std::make_shared<std::vector<std::shared_ptr<Node<S>>>>(touched);
    touched.push_back(on);
    detail::record<S>(
        [nodes, on]() {
          const Mat<S>& g = on->grad_ref();
          Index off2 = 0;
          for (auto& n : *nodes) {
            if (n->requires_grad)
              n->grad_ref() += g.middleCols(off2, n->value.cols());
            off2 += n->value.cols();
          }
        },
        std::move(touched));
  }
  return out;
}

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <class S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <class S>
Tensor<S> operator*(S c, const Tensor<S>& a) {
  return scale(a, c);
}
template <class S>
Tensor<S> operator*(const Tensor<S>& a, S c) {
  return scale(a, c);
}

}  // namespace deskst
