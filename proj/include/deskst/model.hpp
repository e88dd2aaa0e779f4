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

#ifndef DESKST_MODEL_HPP_
#define DESKST_MODEL_HPP_

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "deskst/audio.hpp"
#include "deskst/nn.hpp"
#include "deskst/rng.hpp"
#include "deskst/tensor.hpp"

namespace deskst {

enum class Task { kAsr, kMt, kSt };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

/// One config covers all three tasks. MT reads token ids through a source
/// embedding; ASR and ST read acoustic features through a projection.
struct TransformerConfig {
  Task task = Task::kSt;
  Index d_model = 64;
  Index d_ff = 256;
  Index heads = 4;
  Index enc_layers = 2;
  Index dec_layers = 2;
  double dropout_p = 0.1;
  Index src_vocab = 0;   // MT only
  Index tgt_vocab = 0;
  Index feat_dim = 320;  // ASR/ST only
  Index max_src_len = 512;
  Index max_tgt_len = 128;

  void validate() const {
    if (d_model < 2 || d_model % 2 != 0)
      throw ConfigError("d_model must be even and >= 2, got " +
                        std::to_string(d_model));
    if (heads < 1 || d_model % heads != 0)
      throw ConfigError("heads " + std::to_string(heads) +
                        " must divide d_model " + std::to_string(d_model));
    if (enc_layers < 1 || dec_layers < 1)
      throw ConfigError("layer counts must be >= 1");
    if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
      throw ConfigError("dropout_p must lie in [0, 1)");
    if (tgt_vocab < 4)
      throw ConfigError("tgt_vocab must cover the reserved id block");
    if (task == Task::kMt) {
      if (src_vocab < 4)
        throw ConfigError("MT needs src_vocab covering the reserved id block");
    } else {
      if (feat_dim < 1) throw ConfigError("ASR/ST need feat_dim >= 1");
    }
    if (max_src_len < 1 || max_tgt_len < 1)
      throw ConfigError("max lengths must be >= 1");
  }
};

/// The full parameter name/shape table, derivable from config alone. Names
/// are stable: they are the checkpoint format's record keys.
std::map<std::string, std::vector<Index>> parameter_shapes(
    const TransformerConfig& cfg);

template <class S>
struct TransformerModel {
  TransformerConfig cfg;
  std::map<std::string, Tensor<S>> params;  // sorted by name

  const Tensor<S>& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
      throw ContractError("model has no parameter named " + name);
    return it->second;
  }
};

/// Scaled uniform init for matrices, zeros for biases, ones/zeros for the
/// normalization gains/biases. Parameters are drawn in sorted-name order
/// from one generator, so (cfg, seed) pins every bit.
template <class S>
TransformerModel<S> build_model(const TransformerConfig& cfg, uint64_t seed) {
  cfg.validate();
  TransformerModel<S> m;
  m.cfg = cfg;
  std::mt19937_64 g(seed);
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    if (shape.size() == 1) {
      // Rank-1 parameters are biases (zeros) or norm gains (ones).
      bool is_gain = name.size() >= 4 &&
                     name.compare(name.size() - 4, 4, "gain") == 0;
      Mat<S> v = is_gain ? Mat<S>::Ones(1, shape[0]) : Mat<S>::Zero(1, shape[0]);
      m.params.emplace(name, Tensor<S>::row_vector(std::move(v), true));
    } else {
      Index fan_in = shape[0], fan_out = shape[1];
      double bound = std::sqrt(6.0 / double(fan_in + fan_out));
      Mat<S> v(shape[0], shape[1]);
      for (Index i = 0; i < v.rows(); ++i)
        for (Index j = 0; j < v.cols(); ++j)
          v(i, j) = static_cast<S>(uniform_real(g, -bound, bound));
      m.params.emplace(name, Tensor<S>::from_matrix(std::move(v), true));
    }
  }
  return m;
}

namespace detail {

template <class S>
LayerNormParams<S> norm_view(const TransformerModel<S>& m,
                             const std::string& prefix) {
  return {m.at(prefix + ".gain"), m.at(prefix + ".bias")};
}

template <class S>
AttentionParams<S> attn_view(const TransformerModel<S>& m,
                             const std::string& prefix) {
  AttentionParams<S> p;
  for (Index h = 0; h < m.cfg.heads; ++h) {
    std::string n = std::to_string(h);
    p.w_q.push_back(m.at(prefix + ".q." + n));
    p.w_k.push_back(m.at(prefix + ".k." + n));
    p.w_v.push_back(m.at(prefix + ".v." + n));
  }
  p.w_o = m.at(prefix + ".o");
  return p;
}

template <class S>
FfnParams<S> ffn_view(const TransformerModel<S>& m, const std::string& prefix) {
  return {m.at(prefix + ".w1"), m.at(prefix + ".b1"), m.at(prefix + ".w2"),
          m.at(prefix + ".b2")};
}

}  // namespace detail

/// MT-side encoder input: scaled embedding plus position table.
template <class S>
Tensor<S> encoder_input_from_ids(const TransformerModel<S>& m,
                                 const std::vector<int>& src_ids) {
  if (m.cfg.task != Task::kMt)
    throw ConfigError("token encoder input requires an MT model");
  if (src_ids.empty()) throw InputError("empty source id sequence");
  if (static_cast<Index>(src_ids.size()) > m.cfg.max_src_len)
    throw InputError("source length " + std::to_string(src_ids.size()) +
                     " exceeds configured max " +
                     std::to_string(m.cfg.max_src_len));
  Tensor<S> e = embed_rows(m.at("embed.src"), src_ids);
  e = scale(e, static_cast<S>(std::sqrt(double(m.cfg.d_model))));
  return add(e, positional_encoding<S>(static_cast<Index>(src_ids.size()),
                                       m.cfg.d_model));
}

/// ASR/ST-side encoder input: projected, normalized features plus positions.
template <class S>
Tensor<S> encoder_input_from_features(const TransformerModel<S>& m,
                                      const FeatureMatrix& f) {
  if (m.cfg.task == Task::kMt)
    throw ConfigError("feature encoder input requires an ASR or ST model");
  if (f.n_frames() < 1) throw InputError("empty feature sequence");
  if (f.n_frames() > m.cfg.max_src_len)
    throw InputError("feature length " + std::to_string(f.n_frames()) +
                     " exceeds configured max " +
                     std::to_string(m.cfg.max_src_len));
  return project_features(f, m.at("feat_proj.w"), m.at("feat_norm.gain"),
                          m.at("feat_norm.bias"));
}

template <class S>
Tensor<S> run_encoder(const TransformerModel<S>& m, const Tensor<S>& enc_in,
                      DropPlan& plan) {
  Tensor<S> x = enc_in;
  Mask full = Mask::full(x.rows(), x.rows());
  for (Index l = 0; l < m.cfg.enc_layers; ++l) {
    std::string p = "enc." + std::to_string(l);
    EncoderLayerParams<S> lp{
        detail::attn_view(m, p + ".attn"), detail::norm_view(m, p + ".attn_norm"),
        detail::ffn_view(m, p + ".ffn"), detail::norm_view(m, p + ".ffn_norm")};
    x = encoder_layer(x, full, lp, plan);
  }
  return x;
}

template <class S>
struct ForwardResult {
  Tensor<S> logits;  // [tgt_len x tgt_vocab]
  // cross_attention[layer][head] is [tgt_len x src_len]
  std::vector<std::vector<Tensor<S>>> cross_attention;
};

// Decoder inputs start with this id; mirrors the text pipeline's reserved
// block without pulling in the full text header.
inline constexpr int kBosIdModel = 1;

/// Teacher-forced decoder input for a reference that already ends in eos:
/// drop the final token and prepend bos, so position t predicts tgt_ids[t].
inline std::vector<int> shifted_decoder_input(const std::vector<int>& tgt_ids) {
  if (tgt_ids.empty()) throw InputError("empty target sequence");
  std::vector<int> in;
  in.reserve(tgt_ids.size());
  in.push_back(kBosIdModel);
  in.insert(in.end(), tgt_ids.begin(), tgt_ids.end() - 1);
  return in;
}

template <class S>
ForwardResult<S> run_decoder(const TransformerModel<S>& m,
                             const Tensor<S>& enc_out,
                             const std::vector<int>& dec_input_ids,
                             DropPlan& plan) {
  if (dec_input_ids.empty() || dec_input_ids.front() != kBosIdModel)
    throw ContractError("decoder input must begin with bos");
  if (static_cast<Index>(dec_input_ids.size()) > m.cfg.max_tgt_len)
    throw InputError("target length " + std::to_string(dec_input_ids.size()) +
                     " exceeds configured max " +
                     std::to_string(m.cfg.max_tgt_len));
  Index n = static_cast<Index>(dec_input_ids.size());
  Tensor<S> y = embed_rows(m.at("embed.tgt"), dec_input_ids);
  y = scale(y, static_cast<S>(std::sqrt(double(m.cfg.d_model))));
  y = add(y, positional_encoding<S>(n, m.cfg.d_model));
  Mask self = causal_mask(n);
  Mask cross = Mask::full(n, enc_out.rows());
  ForwardResult<S> r;
  for (Index l = 0; l < m.cfg.dec_layers; ++l) {
    std::string p = "dec." + std::to_string(l);
    DecoderLayerParams<S> lp{detail::attn_view(m, p + ".self"),
                             detail::norm_view(m, p + ".self_norm"),
                             detail::attn_view(m, p + ".cross"),
                             detail::norm_view(m, p + ".cross_norm"),
                             detail::ffn_view(m, p + ".ffn"),
                             detail::norm_view(m, p + ".ffn_norm")};
    DecoderLayerResult<S> dr = decoder_layer(y, enc_out, self, cross, lp, plan);
    y = dr.out;
    r.cross_attention.push_back(std::move(dr.cross_weights));
  }
  r.logits = add(matmul(y, m.at("out_proj.w")), m.at("out_proj.b"));
  return r;
}

/// Dropout plan for one forward pass. Training uses the config probability;
/// inference passes bare zeros.
inline DropPlan training_plan(const TransformerConfig& cfg, uint64_t seed,
                              uint64_t step, uint64_t stream_base = 0) {
  DropPlan p;
  p.p_residual = cfg.dropout_p;
  p.p_attention = cfg.dropout_p;
  p.seed = seed;
  p.step = step;
  p.stream = stream_base;
  return p;
}

template <class S>
ForwardResult<S> forward(const TransformerModel<S>& m, const Tensor<S>& enc_in,
                         const std::vector<int>& dec_input_ids,
                         DropPlan& plan) {
  Tensor<S> enc_out = run_encoder(m, enc_in, plan);
  return run_decoder(m, enc_out, dec_input_ids, plan);
}

template <class S>
ForwardResult<S> forward(const TransformerModel<S>& m, const Tensor<S>& enc_in,
                         const std::vector<int>& dec_input_ids) {
  DropPlan off;
  return forward(m, enc_in, dec_input_ids, off);
}

/// Copies ASR encoder-side and MT decoder-side parameters into the ST model.
/// Anything else (nothing, under the current table) is left untouched.
template <class S>
void init_from_pretrained(TransformerModel<S>& st,
                          const TransformerModel<S>& asr,
                          const TransformerModel<S>& mt) {
  if (st.cfg.task != Task::kSt || asr.cfg.task != Task::kAsr ||
      mt.cfg.task != Task::kMt)
    throw ConfigError("init_from_pretrained expects (st, asr, mt) tasks");
  auto copy_from = [](Tensor<S>& dst, const TransformerModel<S>& src,
                      const std::string& name) {
    auto it = src.params.find(name);
    if (it == src.params.end())
      throw ConfigError("pretrained source lacks parameter " + name);
    if (it->second.shape() != dst.shape())
      throw ConfigError("pretrained shape mismatch at " + name + ": have " +
                        shape_str(dst.shape()) + ", donor has " +
                        shape_str(it->second.shape()));
    dst.m_mut() = it->second.m();
  };
  for (auto& [name, t] : st.params) {
    bool enc_side = name.rfind("feat_proj.", 0) == 0 ||
                    name.rfind("feat_norm.", 0) == 0 ||
                    name.rfind("enc.", 0) == 0;
    bool dec_side = name.rfind("embed.tgt", 0) == 0 ||
                    name.rfind("dec.", 0) == 0 ||
                    name.rfind("out_proj.", 0) == 0;
    if (enc_side)
      copy_from(t, asr, name);
    else if (dec_side)
      copy_from(t, mt, name);
  }
}

/// Binary parameter file plus a UTF-8 "<path>.meta" config sidecar.
void save_checkpoint(const std::string& path, const TransformerModel<float>& m);
TransformerModel<float> load_checkpoint(const std::string& path);

std::map<std::string, std::string> config_to_kv(const TransformerConfig& cfg);
TransformerConfig config_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace deskst

#endif  // DESKST_MODEL_HPP_
