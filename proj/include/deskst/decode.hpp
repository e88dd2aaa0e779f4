// Copyright 2026 The DeskST Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DESKST_DECODE_HPP_
#define DESKST_DECODE_HPP_

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "deskst/audio.hpp"
#include "deskst/metrics.hpp"
#include "deskst/model.hpp"
#include "deskst/text.hpp"

// Sequence search over trained models. All decoding runs with dropout off and
// no gradient recording; scores accumulate in double so beams of different
// widths rank hypotheses consistently. Decoders never emit pad or bos.

namespace deskst {

struct Hypothesis {
  std::vector<int> ids;   // emitted tokens; the terminating eos is not stored
  double log_prob = 0.0;  // sum of chosen per-step log probabilities
  bool finished = false;  // true iff eos was selected
};

namespace detail {

using ProbRow = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Mean of the per-model next-token distributions after the given prefix.
/// With one model this is exactly its softmax row, so single-model search and
/// a one-model ensemble share every score bit.
template <class S>
ProbRow mean_prob_row(const std::vector<const TransformerModel<S>*>& models,
                      const std::vector<Tensor<S>>& enc_outs,
                      const std::vector<int>& prefix) {
  std::vector<int> dec_in;
  dec_in.reserve(prefix.size() + 1);
  dec_in.push_back(kBosIdModel);
  dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
  DropPlan off;
  ProbRow acc;
  for (size_t i = 0; i < models.size(); ++i) {
    ForwardResult<S> r = run_decoder(*models[i], enc_outs[i], dec_in, off);
    Tensor<S> probs = softmax(r.logits, 1);
    ProbRow row =
        probs.m().row(probs.rows() - 1).template cast<double>();
    if (i == 0)
      acc = row;
    else
      acc += row;
  }
  acc /= static_cast<double>(models.size());
  return acc;
}

/// True when a beats b under score-then-lexicographic ordering.
inline bool hyp_before(double score_a, const std::vector<int>& a,
                       double score_b, const std::vector<int>& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

inline double length_penalized(double log_prob, size_t steps, double alpha) {
  if (alpha == 0.0) return log_prob;
  return log_prob / std::pow(static_cast<double>(steps), alpha);
}

/// Argmax over real tokens (pad and bos excluded); ties go to the lowest id.
inline int best_token(const ProbRow& log_row) {
  int best = -1;
  double best_lp = 0.0;
  for (Eigen::Index k = 0; k < log_row.size(); ++k) {
    if (k == 0 || k == kBosIdModel) continue;
    double lp = log_row(k);
    if (best < 0 || lp > best_lp) {
      best = static_cast<int>(k);
      best_lp = lp;
    }
  }
  return best;
}

template <class S>
Hypothesis greedy_core(const std::vector<const TransformerModel<S>*>& models,
                       const std::vector<Tensor<S>>& enc_outs, Index max_len) {
  Hypothesis hyp;
  for (Index step = 0; step < max_len; ++step) {
    ProbRow log_row =
        mean_prob_row(models, enc_outs, hyp.ids).array().log().matrix();
    int k = best_token(log_row);
    hyp.log_prob += log_row(k);
    if (k == kEosId) {
      hyp.finished = true;
      return hyp;
    }
    hyp.ids.push_back(k);
  }
  return hyp;
}

template <class S>
Hypothesis beam_core(const std::vector<const TransformerModel<S>*>& models,
                     const std::vector<Tensor<S>>& enc_outs, Index beam_size,
                     Index max_len, double alpha) {
  struct Partial {
    std::vector<int> ids;  // for an eos candidate, the ids as finalized
    double log_prob;
    bool ends_here;
  };
  std::vector<Partial> live{{{}, 0.0, false}};
  std::vector<Hypothesis> pool;

  // Each step ranks every one-token extension, eos included, and keeps the
  // top beam_size. Kept eos extensions finalize and leave the beam; with
  // beam_size 1 this reduces to exactly greedy's argmax-with-stop.
  for (Index step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Partial> candidates;
    for (const Partial& h : live) {
      ProbRow log_row =
          mean_prob_row(models, enc_outs, h.ids).array().log().matrix();
      for (Eigen::Index k = 0; k < log_row.size(); ++k) {
        if (k == 0 || k == kBosIdModel) continue;
        double lp = h.log_prob + log_row(k);
        if (!std::isfinite(lp)) continue;
        Partial ext{h.ids, lp, k == kEosId};
        if (!ext.ends_here) ext.ids.push_back(static_cast<int>(k));
        candidates.push_back(std::move(ext));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Partial& a, const Partial& b) {
                return hyp_before(a.log_prob, a.ids, b.log_prob, b.ids);
              });
    if (static_cast<Index>(candidates.size()) > beam_size)
      candidates.resize(static_cast<size_t>(beam_size));
    std::vector<Partial> survivors;
    for (Partial& c : candidates) {
      if (c.ends_here)
        pool.push_back({std::move(c.ids), c.log_prob, true});
      else
        survivors.push_back(std::move(c));
    }
    live = std::move(survivors);
  }
  // Unfinished survivors compete too; a full-length hypothesis is a valid
  // output when the model never chose eos.
  for (Partial& h : live) pool.push_back({std::move(h.ids), h.log_prob, false});

  if (pool.empty())
    throw ContractError("beam search produced no hypothesis");
  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  for (const Hypothesis& h : pool) {
    size_t steps = h.ids.size() + (h.finished ? 1 : 0);
    double score = length_penalized(h.log_prob, std::max<size_t>(1, steps),
                                    alpha);
    if (best == nullptr || hyp_before(score, h.ids, best_score, best->ids)) {
      best = &h;
      best_score = score;
    }
  }
  return *best;
}

}  // namespace detail

/// Appends the most probable token each step until eos or max_len. Ties go to
/// the lowest id.
template <class S>
Hypothesis greedy_decode(const TransformerModel<S>& m, const Tensor<S>& enc_in,
                         Index max_len) {
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  InferenceScope<S> no_grad;
  DropPlan off;
  std::vector<Tensor<S>> enc_outs{run_encoder(m, enc_in, off)};
  return detail::greedy_core<S>({&m}, enc_outs, max_len);
}

/// Keeps the beam_size best partial hypotheses per step; hypotheses that pick
/// eos are set aside and the final answer maximizes log_prob / steps^alpha,
/// ties resolved toward the lexicographically smallest token sequence.
template <class S>
Hypothesis beam_search(const TransformerModel<S>& m, const Tensor<S>& enc_in,
                       Index beam_size, Index max_len, double alpha = 0.0) {
  if (beam_size < 1) throw ConfigError("beam_size must be at least 1");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  InferenceScope<S> no_grad;
  DropPlan off;
  std::vector<Tensor<S>> enc_outs{run_encoder(m, enc_in, off)};
  return detail::beam_core<S>({&m}, enc_outs, beam_size, max_len, alpha);
}

/// Beam search over the arithmetic mean of the member models' per-step
/// softmax distributions. Members may differ in input modality, hence one
/// encoder input per model; they must share the target vocabulary.
template <class S>
Hypothesis ensemble_decode(const std::vector<const TransformerModel<S>*>& models,
                           const std::vector<Tensor<S>>& encoder_inputs,
                           Index beam_size, Index max_len,
                           double alpha = 0.0) {
  if (models.empty()) throw ConfigError("ensemble needs at least one model");
  if (models.size() != encoder_inputs.size())
    throw ConfigError("ensemble: " + std::to_string(models.size()) +
                      " models but " + std::to_string(encoder_inputs.size()) +
                      " encoder inputs");
  for (const TransformerModel<S>* m : models)
    if (m->cfg.tgt_vocab != models.front()->cfg.tgt_vocab)
      throw ConfigError("ensemble members must share the target vocabulary");
  if (beam_size < 1) throw ConfigError("beam_size must be at least 1");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  InferenceScope<S> no_grad;
  DropPlan off;
  std::vector<Tensor<S>> enc_outs;
  enc_outs.reserve(models.size());
  for (size_t i = 0; i < models.size(); ++i)
    enc_outs.push_back(run_encoder(*models[i], encoder_inputs[i], off));
  return detail::beam_core<S>(models, enc_outs, beam_size, max_len, alpha);
}

/// Turns decoded ids back into a plain sentence.
inline std::string ids_to_text(const Vocab& v, const std::vector<int>& ids) {
  return bpe_detokenize(decode_ids(v, ids));
}

/// Tokenize, encode and beam-decode one source sentence through a text
/// translation model.
template <class S>
Hypothesis translate_text(const TransformerModel<S>& mt,
                          const BpeModel& bpe, const Vocab& src_vocab,
                          const std::string& text, Index beam_size,
                          Index max_len, double alpha = 0.0) {
  std::vector<int> ids = encode_ids(src_vocab, bpe_apply(bpe, text));
  Tensor<S> enc_in = encoder_input_from_ids(mt, ids);
  return beam_search(mt, enc_in, beam_size, max_len, alpha);
}

struct PipelineResult {
  Hypothesis asr_hyp;
  std::string transcript;  // detokenized recognizer output
  Hypothesis mt_hyp;
};

/// Two-stage cascade: recognize, detokenize, re-tokenize, translate. An empty
/// recognizer output yields an empty translation with a warning rather than
/// an error, matching scoring conventions for dropped utterances.
template <class S>
PipelineResult pipeline_translate(const TransformerModel<S>& asr,
                                  const TransformerModel<S>& mt,
                                  const FeatureMatrix& feats,
                                  const BpeModel& bpe,
                                  const Vocab& transcript_vocab,
                                  Index beam_size, Index max_len,
                                  double alpha = 0.0) {
  PipelineResult out;
  Tensor<S> asr_in = encoder_input_from_features(asr, feats);
  out.asr_hyp = beam_search(asr, asr_in, beam_size, max_len, alpha);
  out.transcript = ids_to_text(transcript_vocab, out.asr_hyp.ids);
  if (out.asr_hyp.ids.empty()) {
    std::cerr << "warning: empty recognizer output, emitting empty "
                 "translation\n";
    return out;
  }
  out.mt_hyp = translate_text(mt, bpe, transcript_vocab, out.transcript,
                              beam_size, max_len, alpha);
  return out;
}

struct AttentionDump {
  // weights[layer][head] is [target_len x source_len], rows sum to 1.
  std::vector<std::vector<MatF>> weights;
  std::string example_id;
  std::string model_tag;  // "ASR", "MT", "ST" or "ST+KD"
};

/// Teacher-forced source-target attention of every decoder layer and head.
template <class S>
AttentionDump collect_attention(const TransformerModel<S>& m,
                                const Tensor<S>& enc_in,
                                const std::vector<int>& tgt_ids,
                                const std::string& example_id,
                                const std::string& model_tag) {
  InferenceScope<S> no_grad;
  ForwardResult<S> r = forward(m, enc_in, shifted_decoder_input(tgt_ids));
  AttentionDump dump;
  dump.example_id = example_id;
  dump.model_tag = model_tag;
  for (const auto& layer : r.cross_attention) {
    std::vector<MatF> heads;
    for (const Tensor<S>& w : layer)
      heads.push_back(w.m().template cast<float>());
    dump.weights.push_back(std::move(heads));
  }
  return dump;
}

/// Writes one CSV matrix and one grayscale image per (layer, head), named
/// <prefix>.l<layer>.h<head>.csv / .pgm under out_dir.
inline std::vector<std::string> write_attention(const AttentionDump& dump,
                                                const std::string& out_dir,
                                                const std::string& prefix) {
  std::vector<std::string> paths;
  for (size_t l = 0; l < dump.weights.size(); ++l) {
    for (size_t h = 0; h < dump.weights[l].size(); ++h) {
      std::string base = out_dir + "/" + prefix + ".l" + std::to_string(l) +
                         ".h" + std::to_string(h);
      write_csv_matrix(base + ".csv", dump.weights[l][h]);
      write_pgm(base + ".pgm", dump.weights[l][h]);
      paths.push_back(base + ".csv");
      paths.push_back(base + ".pgm");
    }
  }
  return paths;
}

}  // namespace deskst

#endif  // DESKST_DECODE_HPP_
