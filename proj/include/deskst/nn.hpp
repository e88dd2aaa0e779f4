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

#ifndef DESKST_NN_HPP_
#define DESKST_NN_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deskst/tensor.hpp"

namespace deskst {

/// Boolean attendability matrix, true = the query row may attend to the key
/// column. Stored dense; sequences at this scale are short.
struct Mask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> allow;

  Index query_len() const { return allow.rows(); }
  Index key_len() const { return allow.cols(); }

  static Mask full(Index q, Index k) {
    if (q < 1 || k < 1)
      throw DimensionError("mask dims must be positive, got " +
                           std::to_string(q) + "x" + std::to_string(k));
    Mask m;
    m.allow.setConstant(q, k, true);
    return m;
  }

  /// Padding mask: key j is attendable from every query iff valid[j].
  static Mask keys_valid(Index q, const std::vector<uint8_t>& valid) {
    Mask m = full(q, static_cast<Index>(valid.size()));
    for (Index j = 0; j < m.key_len(); ++j)
      if (!valid[static_cast<size_t>(j)]) m.allow.col(j).setConstant(false);
    return m;
  }
};

/// mask[i][j] = (j <= i): position i sees itself and everything before it.
inline Mask causal_mask(Index n) {
  if (n < 1)
    throw DimensionError("causal_mask needs n >= 1, got " + std::to_string(n));
  Mask m;
  m.allow.setConstant(n, n, false);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) m.allow(i, j) = true;
  return m;
}

/// Hands out one dropout key per site, in call order. Call order is fixed by
/// the (single-threaded) graph construction, so masks are reproducible from
/// (seed, step, stream_base) alone. p == 0 disables a site entirely.
struct DropPlan {
  double p_residual = 0.0;
  double p_attention = 0.0;
  uint64_t seed = 0;
  uint64_t step = 0;
  uint64_t stream = 0;

  DropoutKey next() { return DropoutKey{seed, step, stream++}; }
};

template <class S>
Tensor<S> residual_dropout(const Tensor<S>& t, DropPlan& plan) {
  return dropout(t, plan.p_residual, plan.next());
}

template <class S>
struct LayerNormParams {
  Tensor<S> gain;
  Tensor<S> bias;
};

template <class S>
struct AttentionParams {
  std::vector<Tensor<S>> w_q;  // per head, [d_model x d_k]
  std::vector<Tensor<S>> w_k;
  std::vector<Tensor<S>> w_v;
  Tensor<S> w_o;  // [h*d_k x d_model]

  Index heads() const { return static_cast<Index>(w_q.size()); }

  void validate(Index d_model) const {
    Index h = heads();
    if (h < 1 || d_model % h != 0)
      throw ConfigError("head count " + std::to_string(h) +
                        " must divide d_model " + std::to_string(d_model));
    Index d_k = d_model / h;
    if (static_cast<Index>(w_k.size()) != h ||
        static_cast<Index>(w_v.size()) != h)
      throw ConfigError("attention projection lists disagree on head count");
    for (Index i = 0; i < h; ++i) {
      for (const Tensor<S>* w : {&w_q[i], &w_k[i], &w_v[i]})
        if (w->rows() != d_model || w->cols() != d_k)
          throw DimensionError("head projection shape " + shape_str(w->shape()) +
                               ", want [" + std::to_string(d_model) + " x " +
                               std::to_string(d_k) + "]");
    }
    if (w_o.rows() != h * d_k || w_o.cols() != d_model)
      throw DimensionError("output projection shape " + shape_str(w_o.shape()) +
                           ", want [" + std::to_string(h * d_k) + " x " +
                           std::to_string(d_model) + "]");
  }
};

template <class S>
struct FfnParams {
  Tensor<S> w1;  // [d_model x d_ff]
  Tensor<S> b1;  // [d_ff]
  Tensor<S> w2;  // [d_ff x d_model]
  Tensor<S> b2;  // [d_model]
};

/// Per row: (x - mean) / sqrt(var + eps) * gain + bias, variance taken over
/// the feature axis with the population convention.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias, double eps = 1e-5) {
  if (eps <= 0) throw ConfigError("layer_norm eps must be positive");
  if (x.rank() != 2)
    throw DimensionError("layer_norm expects rank-2 input, got " +
                         shape_str(x.shape()));
  const Index d = x.cols();
  if (gain.numel() != d || bias.numel() != d)
    throw DimensionError("layer_norm gain/bias must have " +
                         std::to_string(d) + " entries");
  const Index m = x.rows();
  Mat<S> xhat(m, d);
  Mat<S> inv_std(m, 1);
  for (Index i = 0; i < m; ++i) {
    S mean = x.m().row(i).mean();
    S var = (x.m().row(i).array() - mean).square().mean();
    S is = S(1) / std::sqrt(var + static_cast<S>(eps));
    inv_std(i, 0) = is;
    xhat.row(i) = (x.m().row(i).array() - mean) * is;
  }
  Mat<S> y = (xhat.array().rowwise() * gain.m().row(0).array()).matrix();
  y.array().rowwise() += bias.m().row(0).array();

  bool rec = detail::recording<S>({&x, &gain, &bias});
  Tensor<S> out = Tensor<S>::op_result(x.shape(), std::move(y), rec);
  if (rec) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    auto xh = std::make_shared<Mat<S>>(std::move(xhat));
    auto is = std::make_shared<Mat<S>>(std::move(inv_std));
    detail::record<S>(
        [xn, gn, bn, on, xh, is]() {
          const Mat<S>& g = on->grad_ref();
          const Index m2 = g.rows(), d2 = g.cols();
          if (bn->requires_grad) bn->grad_ref().row(0) += g.colwise().sum();
          if (gn->requires_grad)
            gn->grad_ref().row(0) += g.cwiseProduct(*xh).colwise().sum();
          if (xn->requires_grad) {
            Mat<S>& gx = xn->grad_ref();
            for (Index i = 0; i < m2; ++i) {
              // gh = dL/dxhat; the two means remove the row's shift and
              // scale directions from the gradient.
              Eigen::Array<S, 1, Eigen::Dynamic> gh =
                  g.row(i).array() * gn->value.row(0).array();
              S mean_gh = gh.mean();
              S mean_ghx = (gh * xh->row(i).array()).mean();
              gx.row(i).array() +=
                  (*is)(i, 0) *
                  (gh - mean_gh - xh->row(i).array() * mean_ghx);
            }
            (void)d2;
          }
        },
        {xn, gn, bn, on});
  }
  return out;
}

/// Sinusoidal position table; returned as a constant (no gradient).
template <class S = float>
Tensor<S> positional_encoding(Index length, Index d_model) {
  if (d_model < 2 || d_model % 2 != 0)
    throw ConfigError("positional encoding needs even d_model, got " +
                      std::to_string(d_model));
  if (length < 1)
    throw DimensionError("positional encoding length must be >= 1");
  Mat<S> pe(length, d_model);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < d_model / 2; ++i) {
      double angle =
          pos / std::pow(10000.0, (2.0 * static_cast<double>(i)) /
                                      static_cast<double>(d_model));
      pe(pos, 2 * i) = static_cast<S>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  }
  return Tensor<S>::from_matrix(std::move(pe));
}

template <class S>
struct AttentionResult {
  Tensor<S> out;      // [m x d_v]
  Tensor<S> weights;  // [m x n], row-stochastic
};

namespace detail {

/// Additive mask bias: 0 where attendable, -1e9 where blocked. Finite on
/// purpose; exp underflows to an exact 0 weight without producing NaN.
template <class S>
Mat<S> mask_bias(const Mask& mask) {
  Mat<S> b = Mat<S>::Zero(mask.query_len(), mask.key_len());
  for (Index i = 0; i < b.rows(); ++i) {
    bool any = false;
    for (Index j = 0; j < b.cols(); ++j) {
      if (mask.allow(i, j))
        any = true;
      else
        b(i, j) = S(-1e9);
    }
    if (!any)
      throw ContractError("attention mask blocks every key for query row " +
                          std::to_string(i));
  }
  return b;
}

}  // namespace detail

template <class S>
AttentionResult<S> scaled_dot_product_attention(const Tensor<S>& q,
                                                const Tensor<S>& k,
                                                const Tensor<S>& v,
                                                const Mask& mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw DimensionError("attention expects rank-2 Q, K, V");
  if (q.cols() != k.cols())
    throw DimensionError("query dim " + std::to_string(q.cols()) +
                         " != key dim " + std::to_string(k.cols()));
  if (k.rows() != v.rows())
    throw DimensionError("key count " + std::to_string(k.rows()) +
                         " != value count " + std::to_string(v.rows()));
  if (mask.query_len() != q.rows() || mask.key_len() != k.rows())
    throw DimensionError("mask shape [" + std::to_string(mask.query_len()) +
                         "x" + std::to_string(mask.key_len()) +
                         "] does not cover attention [" +
                         std::to_string(q.rows()) + "x" +
                         std::to_string(k.rows()) + "]");
  S inv_sqrt_dk = S(1) / std::sqrt(static_cast<S>(q.cols()));
  Tensor<S> logits = scale(matmul(q, k, false, true), inv_sqrt_dk);
  Tensor<S> bias = Tensor<S>::from_matrix(detail::mask_bias<S>(mask));
  Tensor<S> weights = softmax(add(logits, bias), 1);
  return {matmul(weights, v), weights};
}

template <class S>
struct MhaResult {
  Tensor<S> out;                       // [m x d_model]
  std::vector<Tensor<S>> head_weights;  // h entries, each [m x n]
};

/// Heads share the mask; attention dropout sits between the softmax and the
/// value matmul, one stream per head.
template <class S>
MhaResult<S> multi_head_attention(const Tensor<S>& q, const Tensor<S>& k,
                                  const Tensor<S>& v, const Mask& mask,
                                  const AttentionParams<S>& params,
                                  DropPlan& plan) {
  params.validate(q.cols());
  if (mask.query_len() != q.rows() || mask.key_len() != k.rows())
    throw DimensionError("mask [" + std::to_string(mask.query_len()) + "x" +
                         std::to_string(mask.key_len()) +
                         "] does not cover attention [" +
                         std::to_string(q.rows()) + "x" +
                         std::to_string(k.rows()) + "]");
  Tensor<S> bias = Tensor<S>::from_matrix(detail::mask_bias<S>(mask));
  S inv_sqrt_dk = S(1) / std::sqrt(static_cast<S>(q.cols() / params.heads()));
  MhaResult<S> r;
  std::vector<Tensor<S>> heads;
  for (size_t i = 0; i < params.w_q.size(); ++i) {
    Tensor<S> qh = matmul(q, params.w_q[i]);
    Tensor<S> kh = matmul(k, params.w_k[i]);
    Tensor<S> vh = matmul(v, params.w_v[i]);
    Tensor<S> weights =
        softmax(add(scale(matmul(qh, kh, false, true), inv_sqrt_dk), bias), 1);
    r.head_weights.push_back(weights);
    heads.push_back(
        matmul(dropout(weights, plan.p_attention, plan.next()), vh));
  }
  r.out = matmul(concat_cols<S>(heads), params.w_o);
  return r;
}

template <class S>
MhaResult<S> multi_head_attention(const Tensor<S>& q, const Tensor<S>& k,
                                  const Tensor<S>& v, const Mask& mask,
                                  const AttentionParams<S>& params) {
  DropPlan off;
  return multi_head_attention(q, k, v, mask, params, off);
}

/// Eq-style position-wise network: relu(x W1 + b1) W2 + b2.
template <class S>
Tensor<S> feed_forward(const Tensor<S>& x, const FfnParams<S>& p) {
  return add(matmul(relu(add(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

template <class S>
struct EncoderLayerParams {
  AttentionParams<S> attn;
  LayerNormParams<S> attn_norm;
  FfnParams<S> ffn;
  LayerNormParams<S> ffn_norm;
};

template <class S>
struct DecoderLayerParams {
  AttentionParams<S> self_attn;
  LayerNormParams<S> self_norm;
  AttentionParams<S> cross_attn;
  LayerNormParams<S> cross_norm;
  FfnParams<S> ffn;
  LayerNormParams<S> ffn_norm;
};

/// Post-norm residual block: sublayer -> dropout -> add -> layer norm.
template <class S>
Tensor<S> encoder_layer(const Tensor<S>& x, const Mask& mask,
                        const EncoderLayerParams<S>& p, DropPlan& plan) {
  MhaResult<S> a = multi_head_attention(x, x, x, mask, p.attn, plan);
  Tensor<S> h = layer_norm(add(x, residual_dropout(a.out, plan)),
                           p.attn_norm.gain, p.attn_norm.bias);
  Tensor<S> f = feed_forward(h, p.ffn);
  return layer_norm(add(h, residual_dropout(f, plan)), p.ffn_norm.gain,
                    p.ffn_norm.bias);
}

template <class S>
struct DecoderLayerResult {
  Tensor<S> out;
  std::vector<Tensor<S>> cross_weights;  // per head, [tgt_len x src_len]
};

template <class S>
DecoderLayerResult<S> decoder_layer(const Tensor<S>& y, const Tensor<S>& enc,
                                    const Mask& self_mask,
                                    const Mask& cross_mask,
                                    const DecoderLayerParams<S>& p,
                                    DropPlan& plan) {
  MhaResult<S> a = multi_head_attention(y, y, y, self_mask, p.self_attn, plan);
  Tensor<S> h = layer_norm(add(y, residual_dropout(a.out, plan)),
                           p.self_norm.gain, p.self_norm.bias);
  MhaResult<S> c =
      multi_head_attention(h, enc, enc, cross_mask, p.cross_attn, plan);
  Tensor<S> h2 = layer_norm(add(h, residual_dropout(c.out, plan)),
                            p.cross_norm.gain, p.cross_norm.bias);
  Tensor<S> f = feed_forward(h2, p.ffn);
  Tensor<S> out = layer_norm(add(h2, residual_dropout(f, plan)),
                             p.ffn_norm.gain, p.ffn_norm.bias);
  return {out, c.head_weights};
}

}  // namespace deskst

#endif  // DESKST_NN_HPP_
