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

#ifndef DESKST_TRAIN_HPP_
#define DESKST_TRAIN_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deskst/audio.hpp"
#include "deskst/common.hpp"
#include "deskst/model.hpp"
#include "deskst/tensor.hpp"
#include "deskst/text.hpp"

// Optimization loop: Adam with an inverse-square-root warmup schedule,
// token-budget batching, gradient clipping, checkpointing, and the five
// experiment regimes (recognition, text translation, direct speech
// translation from scratch, from a pretrained init, and with distillation).

namespace deskst {

/// Inverse-square-root schedule with linear warmup:
///   lr = d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
/// Peaks at step == warmup.  step and warmup are 1-based.
double lr_schedule(long long step, int d_model, long long warmup);

/// Optimizer state.  Moment buffers are allocated on first use and kept in
/// 64-bit precision; t counts completed steps.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  long long t = 0;
  std::map<std::string, MatD> m;
  std::map<std::string, MatD> v;
};

/// One bias-corrected Adam update for a single parameter.  t is the 1-based
/// index of the step being applied; m and v must either match p's shape or be
/// empty (they are then zero-initialized).
void adam_update(MatF& p, const MatF& g, MatD& m, MatD& v, long long t,
                 double lr, double beta1, double beta2, double eps);

/// Applies one Adam step to every model parameter, using each parameter's
/// accumulated gradient (parameters without a gradient buffer see g = 0).
/// Any non-finite gradient raises NumericError before anything is mutated.
void adam_step(TransformerModel<float>& model, AdamState& state, double lr);

/// L2 norm over all parameter gradients; absent buffers contribute zero.
double global_grad_norm(const TransformerModel<float>& model);

/// Scales every gradient so the global norm is at most max_norm and returns
/// the pre-clip norm.  A non-finite norm raises NumericError.
double clip_gradients(TransformerModel<float>& model, double max_norm);

/// In-place Fisher-Yates shuffle driven by an explicit generator state so the
/// permutation is identical on every platform.
void deterministic_shuffle(std::vector<size_t>& order, uint64_t seed);

/// Batches as index lists into the example array supplied to make_batches.
struct BatchPlan {
  std::vector<std::vector<size_t>> batches;
  size_t skipped = 0;  // examples excluded for exceeding a length limit
};

/// Greedy token-budget packing.  costs[i] is the combined encoder-rows plus
/// target-tokens cost of example i; a negative cost marks an example that
/// violates a hard length limit and is skipped (warned on stderr, counted).
/// With sort_by_length, examples are packed in cost order so batches hold
/// similar lengths; the batch order is then shuffled by seed.  Every kept
/// example lands in exactly one batch, and no batch exceeds token_budget
/// unless it holds a single example.
BatchPlan make_batches(const std::vector<Index>& costs, Index token_budget,
                       uint64_t seed, bool sort_by_length = true);

enum class Regime { kAsr, kMt, kSt, kStPretrained, kStKd };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

/// Model task a regime trains: kAsr -> recognition, kMt -> text translation,
/// the three st regimes -> speech translation.
Task regime_task(Regime r);

/// One manifest row, featurized and numericalized for any regime.
/// src_ids/tgt_ids are eos-terminated and never contain pad.
struct TrainExample {
  std::string id;
  FeatureMatrix feats;       // speech encoder input
  std::vector<int> src_ids;  // transcript ids; text encoder input for mt
  std::vector<int> tgt_ids;  // translation ids; decoder side for mt/st
  std::string src_text;      // transcript, decoding reference for asr
  std::string tgt_text;      // translation, decoding reference otherwise
};

struct TrainData {
  std::vector<TrainExample> train;
  std::vector<TrainExample> dev;
};

/// Decoder-side token ids for an example under a regime (transcript ids for
/// recognition, translation ids otherwise).
const std::vector<int>& target_ids(const TrainExample& e, Regime r);

/// Decoding reference text for dev evaluation under a regime.
const std::string& reference_text(const TrainExample& e, Regime r);

/// Batching cost: encoder rows plus decoder-side tokens.  Returns -1 when the
/// example exceeds the model's source or target length limit.
Index example_cost(const TrainExample& e, Regime r,
                   const TransformerConfig& cfg);

struct TrainConfig {
  Regime regime = Regime::kSt;
  TransformerConfig model;  // model.task is forced from the regime
  double lambda = 1.0;      // teacher weight in [0,1]; st-kd only
  double temperature = 1.0;
  Index token_budget = 2000;
  long long max_steps = 1000;
  long long warmup = 400;
  double clip_norm = 5.0;
  uint64_t seed = 1;
  long long eval_every = 200;  // dev decode + checkpoint cadence; 0 disables
  Index eval_max_len = 0;      // greedy decode cap at eval; 0 -> max_tgt_len
  std::string out_dir;
  std::string teacher_checkpoint;  // st-kd: trained text-translation model
  std::string init_checkpoint;     // st-pretrained / st-kd: starting weights
  std::string init_asr;            // st-pretrained: compose encoder from this
  std::string init_mt;             //                and decoder from this

  void validate() const;
};

std::map<std::string, std::string> train_config_to_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(
    const std::map<std::string, std::string>& kv);

struct TrainResult {
  std::string best_checkpoint;  // empty when no eval interval ran
  std::string last_checkpoint;
  double best_metric = 0.0;  // dev score at best: error rate for asr, else
                             // corpus overlap score (higher is better)
  long long steps_run = 0;
  bool diverged = false;
  std::vector<double> step_losses;  // combined loss per completed step
};

/// Runs the full loop: forward, loss per regime, backward, clip, adam_step.
/// Emits one JSON object per step to <out_dir>/metrics.jsonl, evaluates the
/// dev set every eval_every steps with greedy decoding, and writes best.ckpt
/// plus last.ckpt.  A non-finite loss or gradient aborts the run with the
/// weights from before the bad step saved as last.ckpt.  Fully deterministic
/// for a fixed (config, data, seed).  out_vocab detokenizes dev hypotheses
/// (transcript vocab for asr, translation vocab otherwise).
TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  const Vocab& out_vocab);

}  // namespace deskst

#endif  // DESKST_TRAIN_HPP_
