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

#ifndef DESKST_LOSSES_HPP_
#define DESKST_LOSSES_HPP_

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deskst/common.hpp"
#include "deskst/model.hpp"
#include "deskst/tensor.hpp"

// Training objectives for the translation student: label likelihood,
// distillation against a fixed translation teacher, and their mixture.
// Every loss is built from recorded tensor ops, so calling backward() on the
// returned scalar reaches all student parameters.

namespace deskst {

/// mask[t] = 1 where ids[t] is a real token, 0 where it equals pad_id.
inline std::vector<uint8_t> non_pad_mask(const std::vector<int>& ids,
                                         int pad_id) {
  std::vector<uint8_t> mask(ids.size());
  for (size_t t = 0; t < ids.size(); ++t) mask[t] = ids[t] != pad_id ? 1 : 0;
  return mask;
}

namespace detail {

template <class S>
Index checked_token_count(const Tensor<S>& logits,
                          const std::vector<uint8_t>& pad_mask,
                          const char* who) {
  if (logits.rank() != 2)
    throw DimensionError(std::string(who) + " expects rank-2 logits, got " +
                         shape_str(logits.shape()));
  if (static_cast<Index>(pad_mask.size()) != logits.rows())
    throw ContractError(std::string(who) + ": mask length " +
                        std::to_string(pad_mask.size()) + " for " +
                        std::to_string(logits.rows()) + " positions");
  Index count = 0;
  for (uint8_t m : pad_mask) count += m ? 1 : 0;
  if (count == 0)
    throw InputError(std::string(who) + ": every position is padding");
  return count;
}

template <class S>
Tensor<S> mask_row(const std::vector<uint8_t>& pad_mask) {
  Mat<S> m(1, static_cast<Index>(pad_mask.size()));
  for (size_t t = 0; t < pad_mask.size(); ++t)
    m(0, static_cast<Index>(t)) = pad_mask[t] ? S(1) : S(0);
  return Tensor<S>::row_vector(std::move(m));
}

}  // namespace detail

/// Mean negative log-likelihood of the reference over non-padded positions.
/// logits is [n x vocab], target_ids[t] the reference id for row t. Padded
/// rows contribute nothing to the value or the gradient.
template <class S>
Tensor<S> st_loss(const Tensor<S>& logits, const std::vector<int>& target_ids,
                  const std::vector<uint8_t>& pad_mask) {
  Index count = detail::checked_token_count(logits, pad_mask, "st_loss");
  if (target_ids.size() != pad_mask.size())
    throw ContractError("st_loss: " + std::to_string(target_ids.size()) +
                        " targets for " + std::to_string(pad_mask.size()) +
                        " positions");
  Tensor<S> lp = log_softmax(logits);
  Tensor<S> picked = gather_rows(lp, target_ids);
  Tensor<S> kept = mul(picked, detail::mask_row<S>(pad_mask));
  return scale(sum(kept), S(-1) / static_cast<S>(count));
}

/// Per-position output distributions of a frozen translation model under
/// teacher forcing: row t is softmax over the vocabulary given the source and
/// the reference prefix before t. Runs with dropout off and records nothing,
/// so a surrounding training tape never sees the teacher.
template <class S>
Mat<S> teacher_distributions(const TransformerModel<S>& teacher,
                             const std::vector<int>& src_ids,
                             const std::vector<int>& tgt_ids,
                             double temperature = 1.0) {
  if (teacher.cfg.task != Task::kMt)
    throw ConfigError("teacher_distributions requires a translation model, got "
                      "task " +
                      task_name(teacher.cfg.task));
  if (temperature <= 0.0)
    throw ConfigError("temperature must be positive, got " +
                      std::to_string(temperature));
  std::vector<int> dec_in = shifted_decoder_input(tgt_ids);
  InferenceScope<S> no_grad;
  Tensor<S> enc_in = encoder_input_from_ids(teacher, src_ids);
  ForwardResult<S> r = forward(teacher, enc_in, dec_in);
  Tensor<S> logits = r.logits;
  if (temperature != 1.0)
    logits = scale(logits, static_cast<S>(1.0 / temperature));
  return softmax(logits, 1).m();
}

/// Mean over non-padded positions of the cross-entropy between a fixed
/// target distribution Q (rows of teacher_q) and the student's softmax.
/// Gradients flow into student_logits only; Q enters as a constant.
template <class S>
Tensor<S> kd_loss(const Tensor<S>& student_logits, const Mat<S>& teacher_q,
                  const std::vector<uint8_t>& pad_mask,
                  double temperature = 1.0) {
  Index count = detail::checked_token_count(student_logits, pad_mask,
                                            "kd_loss");
  if (teacher_q.rows() != student_logits.rows() ||
      teacher_q.cols() != student_logits.cols())
    throw ContractError(
        "kd_loss: teacher distributions are " +
        std::to_string(teacher_q.rows()) + "x" +
        std::to_string(teacher_q.cols()) + " but student logits are " +
        shape_str(student_logits.shape()));
  if (temperature <= 0.0)
    throw ConfigError("temperature must be positive, got " +
                      std::to_string(temperature));
  Tensor<S> logits = student_logits;
  if (temperature != 1.0)
    logits = scale(logits, static_cast<S>(1.0 / temperature));
  Tensor<S> lp = log_softmax(logits);
  Tensor<S> weighted = mul(lp, Tensor<S>::from_matrix(teacher_q));
  Tensor<S> per_pos = sum_axis(weighted, 1);
  Tensor<S> kept = mul(per_pos, detail::mask_row<S>(pad_mask));
  return scale(sum(kept), S(-1) / static_cast<S>(count));
}

template <class S>
struct LossBreakdown {
  Tensor<S> l_st;
  Tensor<S> l_kd;
  Tensor<S> l_all;
  double lambda = 1.0;
  Index token_count = 0;
};

/// l_all = (1 - lambda) * l_st + lambda * l_kd. At lambda 0 or 1 the unused
/// term is scaled to exactly zero, so the mixture value equals the surviving
/// loss bit for bit.
template <class S>
LossBreakdown<S> combined_loss(const Tensor<S>& l_st, const Tensor<S>& l_kd,
                               double lambda, Index token_count = 0) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must lie in [0,1], got " +
                      std::to_string(lambda));
  if (l_st.rank() != 0 || l_kd.rank() != 0)
    throw ContractError("combined_loss expects scalar losses, got " +
                        shape_str(l_st.shape()) + " and " +
                        shape_str(l_kd.shape()));
  LossBreakdown<S> out;
  out.l_st = l_st;
  out.l_kd = l_kd;
  out.l_all = add(scale(l_st, static_cast<S>(1.0 - lambda)),
                  scale(l_kd, static_cast<S>(lambda)));
  out.lambda = lambda;
  out.token_count = token_count;
  return out;
}

/// One-call objective for a distillation step: likelihood term, teacher
/// cross-entropy term, and their mixture over the same mask.
template <class S>
LossBreakdown<S> distill_objective(const Tensor<S>& student_logits,
                                   const std::vector<int>& target_ids,
                                   const Mat<S>& teacher_q,
                                   const std::vector<uint8_t>& pad_mask,
                                   double lambda, double temperature = 1.0) {
  Tensor<S> st = st_loss(student_logits, target_ids, pad_mask);
  Tensor<S> kd = kd_loss(student_logits, teacher_q, pad_mask, temperature);
  Index count = detail::checked_token_count(student_logits, pad_mask,
                                            "distill_objective");
  return combined_loss(st, kd, lambda, count);
}

/// Memoizes teacher distributions per example. The teacher is expected to be
/// frozen for the cache's lifetime; get() rejects a teacher whose parameters
/// drifted from the construction-time checksum.
template <class S>
class TeacherCache {
 public:
  explicit TeacherCache(const TransformerModel<S>& teacher)
      : fingerprint_(checksum(teacher)) {}

  const Mat<S>& get(const TransformerModel<S>& teacher, const std::string& key,
                    const std::vector<int>& src_ids,
                    const std::vector<int>& tgt_ids,
                    double temperature = 1.0) {
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    if (checksum(teacher) != fingerprint_)
      throw ContractError(
          "teacher parameters changed under a live distillation cache");
    auto [pos, inserted] = cache_.emplace(
        key, teacher_distributions(teacher, src_ids, tgt_ids, temperature));
    (void)inserted;
    return pos->second;
  }

  size_t size() const { return cache_.size(); }

 private:
  static double checksum(const TransformerModel<S>& m) {
    double acc = 0.0;
    for (const auto& [name, p] : m.params) {
      acc += p.m().template cast<double>().sum();
      acc += static_cast<double>(name.size());
    }
    return acc;
  }

  double fingerprint_;
  std::unordered_map<std::string, Mat<S>> cache_;
};

}  // namespace deskst

#endif  // DESKST_LOSSES_HPP_
