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

#include "deskst/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "deskst/config.hpp"
#include "deskst/decode.hpp"
#include "deskst/losses.hpp"
#include "deskst/metrics.hpp"

namespace deskst {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  }
}

long long parse_ll(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  }
}

}  // namespace

double lr_schedule(long long step, int d_model, long long warmup) {
  if (step < 1) throw ConfigError("lr_schedule needs step >= 1");
  if (warmup < 1) throw ConfigError("lr_schedule needs warmup >= 1");
  if (d_model < 1) throw ConfigError("lr_schedule needs d_model >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup);
  return 1.0 / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

void adam_update(MatF& p, const MatF& g, MatD& m, MatD& v, long long t,
                 double lr, double beta1, double beta2, double eps) {
  if (t < 1) throw ContractError("adam_update needs a 1-based step index");
  if (g.rows() != p.rows() || g.cols() != p.cols())
    throw DimensionError("gradient shape does not match parameter");
  if (m.size() == 0) m = MatD::Zero(p.rows(), p.cols());
  if (v.size() == 0) v = MatD::Zero(p.rows(), p.cols());
  if (m.rows() != p.rows() || m.cols() != p.cols() || v.rows() != p.rows() ||
      v.cols() != p.cols())
    throw ContractError("optimizer moment shape does not match parameter");

  MatD gd = g.cast<double>();
  m = beta1 * m + (1.0 - beta1) * gd;
  v = beta2 * v.array().matrix() + (1.0 - beta2) * gd.array().square().matrix();
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  MatD update =
      (m.array() / c1) / ((v.array() / c2).sqrt() + eps) * lr;
  p = (p.cast<double>().array() - update.array()).cast<float>().matrix();
}

void adam_step(TransformerModel<float>& model, AdamState& state, double lr) {
  for (const auto& kv : model.params) {
    const Tensor<float>& p = kv.second;
    if (p.has_grad() && !p.grad().allFinite())
      throw NumericError("non-finite gradient in parameter " + kv.first);
  }
  long long t = state.t + 1;
  for (auto& kv : model.params) {
    Tensor<float>& p = kv.second;
    MatF zero;
    const MatF* g = &zero;
    if (p.has_grad()) {
      g = &p.grad();
    } else {
      zero = MatF::Zero(p.m().rows(), p.m().cols());
    }
    adam_update(p.m_mut(), *g, state.m[kv.first], state.v[kv.first], t, lr,
                state.beta1, state.beta2, state.eps);
  }
  state.t = t;
}

double global_grad_norm(const TransformerModel<float>& model) {
  double sq = 0.0;
  for (const auto& kv : model.params) {
    if (!kv.second.has_grad()) continue;
    sq += kv.second.grad().cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_gradients(TransformerModel<float>& model, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip threshold must be positive");
  double norm = global_grad_norm(model);
  if (!std::isfinite(norm))
    throw NumericError("non-finite gradient norm before clipping");
  if (norm > max_norm) {
    float scale = static_cast<float>(max_norm / norm);
    for (auto& kv : model.params) {
      if (kv.second.has_grad()) kv.second.grad_ref() *= scale;
    }
  }
  return norm;
}

void deterministic_shuffle(std::vector<size_t>& order, uint64_t seed) {
  uint64_t state = seed;
  for (size_t i = order.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(detail::splitmix64(state) % i);
    std::swap(order[i - 1], order[j]);
  }
}

BatchPlan make_batches(const std::vector<Index>& costs, Index token_budget,
                       uint64_t seed, bool sort_by_length) {
  if (token_budget < 1) throw ConfigError("token budget must be positive");
  BatchPlan plan;
  std::vector<size_t> kept;
  kept.reserve(costs.size());
  for (size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] < 0)
      ++plan.skipped;
    else
      kept.push_back(i);
  }
  if (plan.skipped > 0)
    std::cerr << "warning: skipped " << plan.skipped
              << " example(s) over the length limit\n";
  if (kept.empty()) return plan;

  if (sort_by_length) {
    std::stable_sort(kept.begin(), kept.end(), [&](size_t a, size_t b) {
      return costs[a] != costs[b] ? costs[a] < costs[b] : a < b;
    });
  } else {
    deterministic_shuffle(kept, seed ^ 0x5bf0'3635'0c48'2cd5ull);
  }

  std::vector<size_t> cur;
  Index cur_cost = 0;
  for (size_t idx : kept) {
    if (!cur.empty() && cur_cost + costs[idx] > token_budget) {
      plan.batches.push_back(std::move(cur));
      cur.clear();
      cur_cost = 0;
    }
    cur.push_back(idx);
    cur_cost += costs[idx];
  }
  if (!cur.empty()) plan.batches.push_back(std::move(cur));

  if (sort_by_length) {
    std::vector<size_t> order(plan.batches.size());
    std::iota(order.begin(), order.end(), size_t{0});
    deterministic_shuffle(order, seed);
    std::vector<std::vector<size_t>> shuffled;
    shuffled.reserve(plan.batches.size());
    for (size_t o : order) shuffled.push_back(std::move(plan.batches[o]));
    plan.batches = std::move(shuffled);
  }
  return plan;
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::kAsr: return "asr";
    case Regime::kMt: return "mt";
    case Regime::kSt: return "st";
    case Regime::kStPretrained: return "st-pretrained";
    case Regime::kStKd: return "st-kd";
  }
  throw ContractError("unhandled regime");
}

Regime regime_from_name(const std::string& name) {
  if (name == "asr") return Regime::kAsr;
  if (name == "mt") return Regime::kMt;
  if (name == "st") return Regime::kSt;
  if (name == "st-pretrained") return Regime::kStPretrained;
  if (name == "st-kd") return Regime::kStKd;
  throw ConfigError("unknown regime '" + name + "'");
}

Task regime_task(Regime r) {
  switch (r) {
    case Regime::kAsr: return Task::kAsr;
    case Regime::kMt: return Task::kMt;
    default: return Task::kSt;
  }
}

const std::vector<int>& target_ids(const TrainExample& e, Regime r) {
  return r == Regime::kAsr ? e.src_ids : e.tgt_ids;
}

const std::string& reference_text(const TrainExample& e, Regime r) {
  return r == Regime::kAsr ? e.src_text : e.tgt_text;
}

Index example_cost(const TrainExample& e, Regime r,
                   const TransformerConfig& cfg) {
  Index enc_rows = r == Regime::kMt ? static_cast<Index>(e.src_ids.size())
                                    : e.feats.n_frames();
  Index tgt_len = static_cast<Index>(target_ids(e, r).size());
  if (enc_rows < 1 || tgt_len < 1) return -1;
  if (enc_rows > cfg.max_src_len || tgt_len > cfg.max_tgt_len) return -1;
  return enc_rows + tgt_len;
}

void TrainConfig::validate() const {
  model.validate();
  if (model.task != regime_task(regime))
    throw ConfigError("model task does not match regime " +
                      regime_name(regime));
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("lambda must lie in [0, 1]");
  if (temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (token_budget < 1) throw ConfigError("token budget must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be positive");
  if (warmup < 1) throw ConfigError("warmup must be positive");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (eval_max_len < 0) throw ConfigError("eval_max_len must be >= 0");
  if (out_dir.empty()) throw ConfigError("out_dir is required");
  if (regime == Regime::kStKd && teacher_checkpoint.empty())
    throw ConfigError("the distillation regime requires a teacher checkpoint");
  if (regime == Regime::kStPretrained && init_checkpoint.empty() &&
      (init_asr.empty() || init_mt.empty()))
    throw ConfigError(
        "the pretrained regime needs either init_checkpoint or both "
        "init_asr and init_mt");
}

std::map<std::string, std::string> train_config_to_kv(const TrainConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["regime"] = regime_name(cfg.regime);
  kv["lambda"] = fmt_double(cfg.lambda);
  kv["temperature"] = fmt_double(cfg.temperature);
  kv["token_budget"] = std::to_string(cfg.token_budget);
  kv["max_steps"] = std::to_string(cfg.max_steps);
  kv["warmup"] = std::to_string(cfg.warmup);
  kv["clip_norm"] = fmt_double(cfg.clip_norm);
  kv["seed"] = std::to_string(cfg.seed);
  kv["eval_every"] = std::to_string(cfg.eval_every);
  kv["eval_max_len"] = std::to_string(cfg.eval_max_len);
  kv["out_dir"] = cfg.out_dir;
  kv["teacher_checkpoint"] = cfg.teacher_checkpoint;
  kv["init_checkpoint"] = cfg.init_checkpoint;
  kv["init_asr"] = cfg.init_asr;
  kv["init_mt"] = cfg.init_mt;
  for (const auto& mk : config_to_kv(cfg.model)) kv["model." + mk.first] = mk.second;
  return kv;
}

TrainConfig train_config_from_kv(
    const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  std::map<std::string, std::string> model_kv = config_to_kv(cfg.model);
  for (const auto& it : kv) {
    const std::string& k = it.first;
    const std::string& v = it.second;
    if (k == "regime") cfg.regime = regime_from_name(v);
    else if (k == "lambda") cfg.lambda = parse_double(k, v);
    else if (k == "temperature") cfg.temperature = parse_double(k, v);
    else if (k == "token_budget") cfg.token_budget = parse_ll(k, v);
    else if (k == "max_steps") cfg.max_steps = parse_ll(k, v);
    else if (k == "warmup") cfg.warmup = parse_ll(k, v);
    else if (k == "clip_norm") cfg.clip_norm = parse_double(k, v);
    else if (k == "seed") cfg.seed = static_cast<uint64_t>(parse_ll(k, v));
    else if (k == "eval_every") cfg.eval_every = parse_ll(k, v);
    else if (k == "eval_max_len") cfg.eval_max_len = parse_ll(k, v);
    else if (k == "out_dir") cfg.out_dir = v;
    else if (k == "teacher_checkpoint") cfg.teacher_checkpoint = v;
    else if (k == "init_checkpoint") cfg.init_checkpoint = v;
    else if (k == "init_asr") cfg.init_asr = v;
    else if (k == "init_mt") cfg.init_mt = v;
    else if (k.rfind("model.", 0) == 0) model_kv[k.substr(6)] = v;
    else throw ConfigError("unknown train config key '" + k + "'");
  }
  cfg.model = config_from_kv(model_kv);
  cfg.model.task = regime_task(cfg.regime);
  return cfg;
}

namespace {

struct DevScore {
  double value = 0.0;
  bool lower_is_better = false;
};

DevScore evaluate_dev(const TransformerModel<float>& model,
                      const std::vector<TrainExample>& dev, Regime regime,
                      const Vocab& out_vocab, Index max_len) {
  std::vector<std::string> hyps, refs;
  hyps.reserve(dev.size());
  refs.reserve(dev.size());
  for (const TrainExample& e : dev) {
    Tensor<float> enc_in =
        regime == Regime::kMt ? encoder_input_from_ids(model, e.src_ids)
                              : encoder_input_from_features(model, e.feats);
    Hypothesis h = greedy_decode(model, enc_in, max_len);
    hyps.push_back(ids_to_text(out_vocab, h.ids));
    refs.push_back(reference_text(e, regime));
  }
  DevScore s;
  if (regime == Regime::kAsr) {
    s.value = wer(hyps, refs);
    s.lower_is_better = true;
  } else {
    s.value = bleu(hyps, refs);
  }
  return s;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  const Vocab& out_vocab) {
  cfg.validate();
  if (data.train.empty()) throw InputError("no training examples");
  std::filesystem::create_directories(cfg.out_dir);

  TransformerModel<float> model;
  if (!cfg.init_checkpoint.empty()) {
    model = load_checkpoint(cfg.init_checkpoint);
    if (model.cfg.task != cfg.model.task)
      throw ConfigError("init checkpoint task does not match the regime");
  } else if (cfg.regime == Regime::kStPretrained) {
    model = build_model<float>(cfg.model, cfg.seed);
    TransformerModel<float> asr = load_checkpoint(cfg.init_asr);
    TransformerModel<float> mt = load_checkpoint(cfg.init_mt);
    init_from_pretrained(model, asr, mt);
  } else {
    model = build_model<float>(cfg.model, cfg.seed);
  }
  if (cfg.regime == Regime::kStPretrained)
    save_checkpoint(cfg.out_dir + "/init.ckpt", model);

  // The teacher stays frozen; at lambda = 0 its term vanishes exactly, so the
  // forward is skipped and the run matches a plain run bit for bit.
  std::optional<TransformerModel<float>> teacher;
  bool kd_active = cfg.regime == Regime::kStKd && cfg.lambda > 0.0;
  if (kd_active) {
    teacher.emplace(load_checkpoint(cfg.teacher_checkpoint));
    if (teacher->cfg.task != Task::kMt)
      throw ConfigError("the teacher checkpoint is not a text translation model");
    if (teacher->cfg.tgt_vocab != model.cfg.tgt_vocab)
      throw ConfigError(
          "teacher and student disagree on the translation vocabulary");
  }

  std::vector<Index> costs(data.train.size());
  for (size_t i = 0; i < data.train.size(); ++i)
    costs[i] = example_cost(data.train[i], cfg.regime, model.cfg);

  write_kv_file(cfg.out_dir + "/train_config.txt", train_config_to_kv(cfg));
  std::ofstream jsonl(cfg.out_dir + "/metrics.jsonl");
  if (!jsonl) throw IoError("cannot write " + cfg.out_dir + "/metrics.jsonl");

  TrainResult result;
  result.last_checkpoint = cfg.out_dir + "/last.ckpt";
  std::string best_path = cfg.out_dir + "/best.ckpt";
  bool have_best = false;

  AdamState adam;
  Index eval_len = cfg.eval_max_len > 0 ? cfg.eval_max_len
                                        : model.cfg.max_tgt_len;
  bool do_eval = cfg.eval_every > 0 && !data.dev.empty();

  long long step = 0;
  uint64_t epoch = 0;
  std::vector<std::vector<size_t>> queue;
  size_t queue_pos = 0;
  while (step < cfg.max_steps && !result.diverged) {
    if (queue_pos >= queue.size()) {
      BatchPlan plan = make_batches(costs, cfg.token_budget, cfg.seed + epoch);
      if (plan.batches.empty())
        throw InputError("every training example exceeds the length limits");
      queue = std::move(plan.batches);
      queue_pos = 0;
      ++epoch;
    }
    const std::vector<size_t>& batch = queue[queue_pos++];
    ++step;
    double lr = lr_schedule(step, model.cfg.d_model, cfg.warmup);

    double sum_st = 0.0, sum_kd = 0.0;
    long long total_tokens = 0;
    double batch_loss = 0.0;
    bool bad_step = false;
    {
      Tape<float> tape;
      TapeScope<float> scope(tape);
      // Any non-finite value, whether caught at the loss or by a softmax
      // guard mid-forward, aborts the step with the parameters untouched.
      try {
        Tensor<float> acc = Tensor<float>::scalar(0.0f);
        for (size_t slot = 0; slot < batch.size(); ++slot) {
          const TrainExample& e = data.train[batch[slot]];
          const std::vector<int>& tids = target_ids(e, cfg.regime);
          // Distinct stream blocks keep per-example dropout draws
          // independent; one forward consumes far fewer than 4096 streams.
          DropPlan plan = training_plan(model.cfg, cfg.seed,
                                        static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(slot) * 4096);
          Tensor<float> enc_in =
              cfg.regime == Regime::kMt
                  ? encoder_input_from_ids(model, e.src_ids)
                  : encoder_input_from_features(model, e.feats);
          ForwardResult<float> fr =
              forward(model, enc_in, shifted_decoder_input(tids), plan);
          std::vector<uint8_t> mask = non_pad_mask(tids, 0);
          Tensor<float> l_st = st_loss(fr.logits, tids, mask);
          long long count = static_cast<long long>(tids.size());
          Tensor<float> l_e = l_st;
          if (kd_active) {
            MatF q = teacher_distributions(*teacher, e.src_ids, tids,
                                           cfg.temperature);
            Tensor<float> l_kd = kd_loss(fr.logits, q, mask, cfg.temperature);
            LossBreakdown<float> lb =
                combined_loss(l_st, l_kd, cfg.lambda, count);
            l_e = lb.l_all;
            sum_kd += static_cast<double>(l_kd.item()) * count;
          }
          acc = add(acc, scale(l_e, static_cast<float>(count)));
          sum_st += static_cast<double>(l_st.item()) * count;
          total_tokens += count;
        }
        Tensor<float> l_step =
            scale(acc, 1.0f / static_cast<float>(total_tokens));
        batch_loss = static_cast<double>(l_step.item());
        if (!std::isfinite(batch_loss)) {
          bad_step = true;
        } else {
          backward(l_step);
          clip_gradients(model, cfg.clip_norm);
          adam_step(model, adam, lr);
        }
      } catch (const NumericError&) {
        bad_step = true;
      }
      for (auto& kv : model.params) kv.second.zero_grad();
    }
    if (bad_step) {
      // Parameters are untouched by the failed step; keep them.
      save_checkpoint(result.last_checkpoint, model);
      std::cerr << "training diverged at step " << step
                << "; keeping the last good weights\n";
      result.diverged = true;
      result.steps_run = step - 1;
      break;
    }

    result.step_losses.push_back(batch_loss);
    result.steps_run = step;

    nlohmann::json line;
    line["step"] = step;
    line["regime"] = regime_name(cfg.regime);
    line["l_st"] = sum_st / static_cast<double>(total_tokens);
    if (kd_active) line["l_kd"] = sum_kd / static_cast<double>(total_tokens);
    line["l_all"] = batch_loss;
    line["lr"] = lr;

    if (do_eval && (step % cfg.eval_every == 0 || step == cfg.max_steps)) {
      DevScore s =
          evaluate_dev(model, data.dev, cfg.regime, out_vocab, eval_len);
      if (s.lower_is_better)
        line["dev_wer"] = s.value;
      else
        line["dev_bleu"] = s.value;
      save_checkpoint(result.last_checkpoint, model);
      bool better = !have_best || (s.lower_is_better ? s.value < result.best_metric
                                                     : s.value > result.best_metric);
      if (better) {
        result.best_metric = s.value;
        save_checkpoint(best_path, model);
        result.best_checkpoint = best_path;
        have_best = true;
      }
    }
    jsonl << line.dump() << "\n";
  }

  if (!result.diverged) save_checkpoint(result.last_checkpoint, model);
  return result;
}

}  // namespace deskst
