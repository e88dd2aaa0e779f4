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

// deskst: generate the synthetic corpus, fit subword codecs, train the
// recognition/translation models, decode, score, and export attention.
// Every run writes a run.json capturing the resolved configuration and seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "deskst/config.hpp"
#include "deskst/corpus.hpp"
#include "deskst/decode.hpp"
#include "deskst/losses.hpp"
#include "deskst/metrics.hpp"
#include "deskst/model.hpp"
#include "deskst/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace deskst;

namespace {

void write_run_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

struct TextCodec {
  BpeModel bpe;
  Vocab vocab;
};

// A codec prefix names the <prefix>.bpe / <prefix>.vocab pair written by
// bpe-train.
TextCodec load_codec(const std::string& prefix) {
  return TextCodec{load_bpe(prefix + ".bpe"), load_vocab(prefix + ".vocab")};
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const std::string& l : lines) out << l << "\n";
  if (!out) throw IoError("failed writing " + path);
}

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_lambda(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---------------------------------------------------------------- gen-data

struct GenDataOpts {
  SynthTaskSpec spec;
  std::string out_dir;
};

void run_gen_data(const GenDataOpts& o) {
  GeneratedCorpus c = generate_synthetic_dataset(o.spec, o.out_dir);
  json j;
  j["command"] = "gen-data";
  j["out_dir"] = o.out_dir;
  j["seed"] = o.spec.seed;
  j["spec"] = {{"n_symbols", o.spec.n_symbols},
               {"tone_hz_base", o.spec.tone_hz_base},
               {"tone_hz_step", o.spec.tone_hz_step},
               {"tone_ms", o.spec.tone_ms},
               {"sample_rate", o.spec.sample_rate},
               {"min_len", o.spec.min_len},
               {"max_len", o.spec.max_len},
               {"n_train", o.spec.n_train},
               {"n_dev", o.spec.n_dev},
               {"n_test", o.spec.n_test},
               {"noise_std", o.spec.noise_std}};
  j["manifests"] = {{"train", c.train_manifest},
                    {"dev", c.dev_manifest},
                    {"test", c.test_manifest}};
  write_run_json(o.out_dir + "/run.json", j);
  std::cout << "train manifest: " << c.train_manifest << "\n";
  if (!c.dev_manifest.empty())
    std::cout << "dev manifest:   " << c.dev_manifest << "\n";
  if (!c.test_manifest.empty())
    std::cout << "test manifest:  " << c.test_manifest << "\n";
}

// --------------------------------------------------------------- bpe-train

struct BpeTrainOpts {
  std::string manifest;
  std::string side = "src";
  int merges = 40;
  std::string out_prefix;
};

void run_bpe_train(const BpeTrainOpts& o) {
  std::vector<ManifestRow> rows = read_manifest(o.manifest);
  std::vector<std::string> lines;
  for (const ManifestRow& r : rows)
    lines.push_back(
        normalize_text(o.side == "src" ? r.transcript : r.translation));
  BpeModel model = bpe_train(lines, o.merges);
  std::vector<std::vector<std::string>> tokens;
  for (const std::string& l : lines) tokens.push_back(bpe_apply(model, l));
  Vocab vocab = vocab_from_tokens(tokens);

  fs::path prefix(o.out_prefix);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  save_bpe(o.out_prefix + ".bpe", model);
  save_vocab(o.out_prefix + ".vocab", vocab);

  json j;
  j["command"] = "bpe-train";
  j["manifest"] = o.manifest;
  j["side"] = o.side;
  j["merges"] = o.merges;
  j["vocab_size"] = vocab.size();
  j["outputs"] = {o.out_prefix + ".bpe", o.out_prefix + ".vocab"};
  write_run_json(o.out_prefix + ".run.json", j);
  std::cout << "wrote " << o.out_prefix << ".bpe (" << model.merges.size()
            << " merges), " << o.out_prefix << ".vocab (" << vocab.size()
            << " tokens)\n";
}

// ------------------------------------------------------------------- train

struct TrainOpts {
  std::string regime;
  std::string train_manifest;
  std::string dev_manifest;
  std::string src_codec;
  std::string tgt_codec;
  std::string config_file;
  TrainConfig cfg;  // flag values merged over config-file values
};

void run_train(TrainOpts& o, const CLI::App* cmd) {
  TrainConfig cfg;
  if (!o.config_file.empty())
    cfg = train_config_from_kv(read_kv_file(o.config_file));

  // Explicit flags override the config file.
  auto flag = [&](const std::string& name) { return cmd->count(name) > 0; };
  if (flag("--regime") || o.config_file.empty())
    cfg.regime = regime_from_name(o.regime);
  if (flag("--lambda")) cfg.lambda = o.cfg.lambda;
  if (flag("--temperature")) cfg.temperature = o.cfg.temperature;
  if (flag("--budget")) cfg.token_budget = o.cfg.token_budget;
  if (flag("--max-steps")) cfg.max_steps = o.cfg.max_steps;
  if (flag("--warmup")) cfg.warmup = o.cfg.warmup;
  if (flag("--clip")) cfg.clip_norm = o.cfg.clip_norm;
  if (flag("--seed")) cfg.seed = o.cfg.seed;
  if (flag("--eval-every")) cfg.eval_every = o.cfg.eval_every;
  if (flag("--eval-max-len")) cfg.eval_max_len = o.cfg.eval_max_len;
  if (flag("--out") || cfg.out_dir.empty()) cfg.out_dir = o.cfg.out_dir;
  if (flag("--teacher")) cfg.teacher_checkpoint = o.cfg.teacher_checkpoint;
  if (flag("--init")) cfg.init_checkpoint = o.cfg.init_checkpoint;
  if (flag("--init-asr")) cfg.init_asr = o.cfg.init_asr;
  if (flag("--init-mt")) cfg.init_mt = o.cfg.init_mt;
  if (flag("--d-model")) cfg.model.d_model = o.cfg.model.d_model;
  if (flag("--d-ff")) cfg.model.d_ff = o.cfg.model.d_ff;
  if (flag("--heads")) cfg.model.heads = o.cfg.model.heads;
  if (flag("--enc-layers")) cfg.model.enc_layers = o.cfg.model.enc_layers;
  if (flag("--dec-layers")) cfg.model.dec_layers = o.cfg.model.dec_layers;
  if (flag("--dropout")) cfg.model.dropout_p = o.cfg.model.dropout_p;
  if (flag("--max-src-len")) cfg.model.max_src_len = o.cfg.model.max_src_len;
  if (flag("--max-tgt-len")) cfg.model.max_tgt_len = o.cfg.model.max_tgt_len;
  cfg.model.task = regime_task(cfg.regime);

  TextCodec src = load_codec(o.src_codec);
  TextCodec tgt = load_codec(o.tgt_codec);
  cfg.model.src_vocab = src.vocab.size();
  cfg.model.tgt_vocab = cfg.regime == Regime::kAsr ? src.vocab.size()
                                                   : tgt.vocab.size();
  cfg.model.feat_dim = 320;  // the standard front end's output width

  bool with_audio = cfg.regime != Regime::kMt;
  TrainData data;
  data.train = load_examples(o.train_manifest, src.bpe, src.vocab, tgt.bpe,
                             tgt.vocab, with_audio);
  if (!o.dev_manifest.empty())
    data.dev = load_examples(o.dev_manifest, src.bpe, src.vocab, tgt.bpe,
                             tgt.vocab, with_audio);

  const Vocab& out_vocab =
      cfg.regime == Regime::kAsr ? src.vocab : tgt.vocab;
  TrainResult r = train(cfg, data, out_vocab);

  json j;
  j["command"] = "train";
  j["config"] = train_config_to_kv(cfg);
  j["data"] = {{"train", o.train_manifest},
               {"dev", o.dev_manifest},
               {"src_codec", o.src_codec},
               {"tgt_codec", o.tgt_codec}};
  j["result"] = {{"steps_run", r.steps_run},
                 {"diverged", r.diverged},
                 {"best_metric", r.best_metric},
                 {"best_checkpoint", r.best_checkpoint},
                 {"last_checkpoint", r.last_checkpoint}};
  write_run_json(cfg.out_dir + "/run.json", j);

  if (r.diverged)
    throw NumericError("training diverged at step " +
                       std::to_string(r.steps_run + 1));
  std::cout << "trained " << r.steps_run << " steps";
  if (!r.best_checkpoint.empty())
    std::cout << ", best dev "
              << (cfg.regime == Regime::kAsr ? "wer " : "bleu ")
              << fmt_metric(r.best_metric);
  std::cout << "\nlast checkpoint: " << r.last_checkpoint << "\n";
  if (!r.best_checkpoint.empty())
    std::cout << "best checkpoint: " << r.best_checkpoint << "\n";
}

// --------------------------------------------------------------- translate

struct TranslateOpts {
  std::string mode = "beam";
  std::vector<std::string> models;
  std::string asr_ckpt;
  std::string mt_ckpt;
  std::string manifest;
  std::string out_file;
  std::string src_codec;
  std::string tgt_codec;
  Index beam = 4;
  double alpha = 0.0;
  Index max_len = 0;
};

void run_translate(const TranslateOpts& o) {
  TextCodec src = load_codec(o.src_codec);
  TextCodec tgt = load_codec(o.tgt_codec);
  std::vector<ManifestRow> rows = read_manifest(o.manifest);

  std::vector<std::string> hyps;
  hyps.reserve(rows.size());

  if (o.mode == "pipeline") {
    if (o.asr_ckpt.empty() || o.mt_ckpt.empty())
      throw ConfigError("pipeline mode needs --asr and --mt checkpoints");
    TransformerModel<float> asr = load_checkpoint(o.asr_ckpt);
    TransformerModel<float> mt = load_checkpoint(o.mt_ckpt);
    if (asr.cfg.task != Task::kAsr || mt.cfg.task != Task::kMt)
      throw ConfigError("pipeline expects a recognition and a translation "
                        "checkpoint, in that order");
    Index max_len = o.max_len > 0 ? o.max_len : mt.cfg.max_tgt_len;
    for (const ManifestRow& r : rows) {
      FeatureMatrix f = standard_features(
          read_wav_pcm16_mono(resolve_audio_path(o.manifest, r.audio_path)));
      PipelineResult pr = pipeline_translate(asr, mt, f, src.bpe, src.vocab,
                                             o.beam, max_len, o.alpha);
      hyps.push_back(ids_to_text(tgt.vocab, pr.mt_hyp.ids));
    }
  } else if (o.mode == "ensemble") {
    if (o.models.empty())
      throw ConfigError("ensemble mode needs at least one --model");
    std::vector<TransformerModel<float>> models;
    for (const std::string& p : o.models)
      models.push_back(load_checkpoint(p));
    Task task = models.front().cfg.task;
    for (const TransformerModel<float>& m : models)
      if (m.cfg.task != task)
        throw ConfigError("ensemble members must share a task");
    const Vocab& out_vocab = task == Task::kAsr ? src.vocab : tgt.vocab;
    Index max_len =
        o.max_len > 0 ? o.max_len : models.front().cfg.max_tgt_len;
    for (const ManifestRow& r : rows) {
      std::vector<const TransformerModel<float>*> ptrs;
      std::vector<Tensor<float>> enc_ins;
      std::optional<FeatureMatrix> f;
      if (task != Task::kMt)
        f = standard_features(read_wav_pcm16_mono(
            resolve_audio_path(o.manifest, r.audio_path)));
      std::vector<int> ids;
      if (task == Task::kMt)
        ids = encode_ids(src.vocab,
                         bpe_apply(src.bpe, normalize_text(r.transcript)));
      for (const TransformerModel<float>& m : models) {
        ptrs.push_back(&m);
        enc_ins.push_back(task == Task::kMt
                              ? encoder_input_from_ids(m, ids)
                              : encoder_input_from_features(m, *f));
      }
      Hypothesis h =
          ensemble_decode(ptrs, enc_ins, o.beam, max_len, o.alpha);
      hyps.push_back(ids_to_text(out_vocab, h.ids));
    }
  } else if (o.mode == "greedy" || o.mode == "beam") {
    if (o.models.size() != 1)
      throw ConfigError(o.mode + " mode needs exactly one --model");
    TransformerModel<float> m = load_checkpoint(o.models.front());
    const Vocab& out_vocab =
        m.cfg.task == Task::kAsr ? src.vocab : tgt.vocab;
    Index beam = o.mode == "greedy" ? 1 : o.beam;
    Index max_len = o.max_len > 0 ? o.max_len : m.cfg.max_tgt_len;
    for (const ManifestRow& r : rows) {
      Tensor<float> enc_in =
          m.cfg.task == Task::kMt
              ? encoder_input_from_ids(
                    m, encode_ids(src.vocab, bpe_apply(src.bpe, normalize_text(
                                                                    r.transcript))))
              : encoder_input_from_features(
                    m, standard_features(read_wav_pcm16_mono(
                           resolve_audio_path(o.manifest, r.audio_path))));
      Hypothesis h = beam_search(m, enc_in, beam, max_len, o.alpha);
      hyps.push_back(ids_to_text(out_vocab, h.ids));
    }
  } else {
    throw ConfigError("unknown translate mode '" + o.mode + "'");
  }

  write_lines(o.out_file, hyps);
  json j;
  j["command"] = "translate";
  j["mode"] = o.mode;
  j["models"] = o.models;
  if (!o.asr_ckpt.empty()) j["asr"] = o.asr_ckpt;
  if (!o.mt_ckpt.empty()) j["mt"] = o.mt_ckpt;
  j["manifest"] = o.manifest;
  j["beam"] = o.beam;
  j["alpha"] = o.alpha;
  j["max_len"] = o.max_len;
  j["out"] = o.out_file;
  j["count"] = hyps.size();
  write_run_json(o.out_file + ".run.json", j);
  std::cout << "decoded " << hyps.size() << " utterances to " << o.out_file
            << "\n";
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOpts {
  std::string metric = "bleu";
  std::string hyp_file;
  std::string ref_file;
  std::string manifest;
  std::string side = "tgt";
  bool smooth = false;
};

void run_evaluate(const EvaluateOpts& o) {
  std::vector<std::string> hyps = read_lines(o.hyp_file);
  std::vector<std::string> refs;
  if (!o.ref_file.empty()) {
    refs = read_lines(o.ref_file);
  } else if (!o.manifest.empty()) {
    for (const ManifestRow& r : read_manifest(o.manifest))
      refs.push_back(
          normalize_text(o.side == "src" ? r.transcript : r.translation));
  } else {
    throw ConfigError("evaluate needs --ref or --manifest");
  }
  if (hyps.size() != refs.size())
    throw InputError(std::to_string(hyps.size()) + " hypotheses for " +
                     std::to_string(refs.size()) + " references");

  double value;
  std::string label;
  if (o.metric == "bleu") {
    value = bleu(hyps, refs, o.smooth);
    label = "BLEU";
  } else if (o.metric == "wer") {
    value = wer(hyps, refs);
    label = "WER";
  } else {
    throw ConfigError("unknown metric '" + o.metric + "'");
  }

  json j;
  j["command"] = "evaluate";
  j["metric"] = o.metric;
  j["value"] = value;
  j["pairs"] = hyps.size();
  j["hyp"] = o.hyp_file;
  write_run_json(o.hyp_file + ".run.json", j);
  std::cout << label << " = " << fmt_metric(value) << "\n";
}

// ----------------------------------------------------------- attention-dump

struct AttentionOpts {
  std::string model_ckpt;
  std::string manifest;
  int row = 0;
  std::string out_dir;
  std::string prefix = "attn";
  std::string src_codec;
  std::string tgt_codec;
};

void run_attention_dump(const AttentionOpts& o) {
  TextCodec src = load_codec(o.src_codec);
  TextCodec tgt = load_codec(o.tgt_codec);
  std::vector<ManifestRow> rows = read_manifest(o.manifest);
  if (o.row < 0 || static_cast<size_t>(o.row) >= rows.size())
    throw InputError("row " + std::to_string(o.row) + " outside manifest of " +
                     std::to_string(rows.size()) + " rows");
  const ManifestRow& r = rows[static_cast<size_t>(o.row)];

  TransformerModel<float> m = load_checkpoint(o.model_ckpt);
  Tensor<float> enc_in =
      m.cfg.task == Task::kMt
          ? encoder_input_from_ids(
                m, encode_ids(src.vocab,
                              bpe_apply(src.bpe, normalize_text(r.transcript))))
          : encoder_input_from_features(
                m, standard_features(read_wav_pcm16_mono(
                       resolve_audio_path(o.manifest, r.audio_path))));
  const Vocab& out_vocab = m.cfg.task == Task::kAsr ? src.vocab : tgt.vocab;
  const std::string& text =
      m.cfg.task == Task::kAsr ? r.transcript : r.translation;
  std::vector<int> tgt_ids =
      encode_ids(out_vocab, bpe_apply(m.cfg.task == Task::kAsr ? src.bpe
                                                               : tgt.bpe,
                                      normalize_text(text)));

  fs::create_directories(o.out_dir);
  AttentionDump dump =
      collect_attention(m, enc_in, tgt_ids, r.id, task_name(m.cfg.task));
  std::vector<std::string> paths = write_attention(dump, o.out_dir, o.prefix);

  json j;
  j["command"] = "attention-dump";
  j["model"] = o.model_ckpt;
  j["manifest"] = o.manifest;
  j["row"] = o.row;
  j["example_id"] = r.id;
  j["files"] = paths;
  write_run_json(o.out_dir + "/run.json", j);
  std::cout << "wrote " << paths.size() << " attention files for " << r.id
            << "\n";
}

// ------------------------------------------------------------- sweep-lambda

struct SweepOpts {
  std::string values = "0,0.2,0.4,0.6,0.8,1.0";
  std::string train_manifest;
  std::string dev_manifest;
  std::string teacher_ckpt;
  std::string init_ckpt;
  std::string out_dir;
  std::string src_codec;
  std::string tgt_codec;
  Index budget = 2000;
  long long max_steps = 300;
  long long warmup = 100;
  uint64_t seed = 1;
  double temperature = 1.0;
  Index beam = 4;
  Index max_len = 16;
};

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t pos = 0;
      double v = std::stod(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad lambda value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("no lambda values given");
  return out;
}

void run_sweep(const SweepOpts& o) {
  if (!fs::exists(o.teacher_ckpt))
    throw ConfigError("teacher checkpoint missing: " + o.teacher_ckpt);
  if (!fs::exists(o.init_ckpt))
    throw ConfigError("init checkpoint missing: " + o.init_ckpt);
  std::vector<double> values = parse_values(o.values);

  TextCodec src = load_codec(o.src_codec);
  TextCodec tgt = load_codec(o.tgt_codec);
  TrainData data;
  data.train = load_examples(o.train_manifest, src.bpe, src.vocab, tgt.bpe,
                             tgt.vocab, true);
  data.dev = load_examples(o.dev_manifest, src.bpe, src.vocab, tgt.bpe,
                           tgt.vocab, true);

  std::vector<std::string> refs;
  for (const TrainExample& e : data.dev) refs.push_back(e.tgt_text);

  json table = json::array();
  std::vector<std::pair<double, double>> rows;
  for (double lambda : values) {
    TrainConfig cfg;
    cfg.regime = Regime::kStKd;
    cfg.lambda = lambda;
    cfg.temperature = o.temperature;
    cfg.token_budget = o.budget;
    cfg.max_steps = o.max_steps;
    cfg.warmup = o.warmup;
    cfg.seed = o.seed;
    cfg.eval_every = 0;  // scored once below, with beam search
    cfg.teacher_checkpoint = o.teacher_ckpt;
    cfg.init_checkpoint = o.init_ckpt;
    cfg.out_dir = o.out_dir + "/lambda-" + fmt_lambda(lambda);
    cfg.model.task = Task::kSt;
    cfg.model.src_vocab = src.vocab.size();
    cfg.model.tgt_vocab = tgt.vocab.size();
    cfg.model.feat_dim = 320;

    TrainResult r = train(cfg, data, tgt.vocab);
    if (r.diverged)
      throw NumericError("lambda " + fmt_lambda(lambda) +
                         " run diverged at step " +
                         std::to_string(r.steps_run + 1));

    TransformerModel<float> m = load_checkpoint(r.last_checkpoint);
    std::vector<std::string> hyps;
    for (const TrainExample& e : data.dev) {
      Tensor<float> enc_in = encoder_input_from_features(m, e.feats);
      Hypothesis h = beam_search(m, enc_in, o.beam, o.max_len);
      hyps.push_back(ids_to_text(tgt.vocab, h.ids));
    }
    double score = bleu(hyps, refs);
    rows.push_back({lambda, score});
    table.push_back({{"lambda", lambda},
                     {"dev_bleu", score},
                     {"checkpoint", r.last_checkpoint}});
    std::cout << "lambda " << fmt_lambda(lambda) << ": dev bleu "
              << fmt_metric(score) << "\n";
  }

  json j;
  j["command"] = "sweep-lambda";
  j["values"] = values;
  j["seed"] = o.seed;
  j["max_steps"] = o.max_steps;
  j["teacher"] = o.teacher_ckpt;
  j["init"] = o.init_ckpt;
  j["rows"] = table;
  write_run_json(o.out_dir + "/sweep.json", j);

  std::ostringstream txt;
  txt << "lambda  dev_bleu\n";
  for (const auto& row : rows)
    txt << fmt_lambda(row.first) << "\t" << fmt_metric(row.second) << "\n";
  std::ofstream tout(o.out_dir + "/sweep.txt");
  tout << txt.str();
  std::cout << txt.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale speech translation toolkit"};
  app.require_subcommand(1);

  GenDataOpts gen;
  CLI::App* cmd_gen = app.add_subcommand("gen-data",
                                         "generate the synthetic tone corpus");
  cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();
  cmd_gen->add_option("--symbols", gen.spec.n_symbols, "inventory size");
  cmd_gen->add_option("--tone-base", gen.spec.tone_hz_base, "first tone, Hz");
  cmd_gen->add_option("--tone-step", gen.spec.tone_hz_step, "tone spacing, Hz");
  cmd_gen->add_option("--tone-ms", gen.spec.tone_ms, "tone duration, ms");
  cmd_gen->add_option("--min-len", gen.spec.min_len, "shortest utterance");
  cmd_gen->add_option("--max-len", gen.spec.max_len, "longest utterance");
  cmd_gen->add_option("--train", gen.spec.n_train, "train split size");
  cmd_gen->add_option("--dev", gen.spec.n_dev, "dev split size");
  cmd_gen->add_option("--test", gen.spec.n_test, "test split size");
  cmd_gen->add_option("--noise", gen.spec.noise_std, "noise level");
  cmd_gen->add_option("--seed", gen.spec.seed, "corpus seed");

  BpeTrainOpts bpe;
  CLI::App* cmd_bpe =
      app.add_subcommand("bpe-train", "fit a subword codec from a manifest");
  cmd_bpe->add_option("--manifest", bpe.manifest, "manifest TSV")->required();
  cmd_bpe->add_option("--side", bpe.side, "src (transcripts) or tgt")
      ->check(CLI::IsMember({"src", "tgt"}));
  cmd_bpe->add_option("--merges", bpe.merges, "merge operations");
  cmd_bpe->add_option("--out", bpe.out_prefix, "output prefix")->required();

  TrainOpts tr;
  CLI::App* cmd_train = app.add_subcommand("train", "train one regime");
  cmd_train->add_option("--regime", tr.regime,
                        "asr | mt | st | st-pretrained | st-kd");
  cmd_train->add_option("--train", tr.train_manifest, "train manifest")
      ->required();
  cmd_train->add_option("--dev", tr.dev_manifest, "dev manifest");
  cmd_train->add_option("--src-bpe", tr.src_codec, "source codec prefix")
      ->required();
  cmd_train->add_option("--tgt-bpe", tr.tgt_codec, "target codec prefix")
      ->required();
  cmd_train->add_option("--config", tr.config_file, "key=value config file");
  cmd_train->add_option("--lambda", tr.cfg.lambda, "teacher weight");
  cmd_train->add_option("--temperature", tr.cfg.temperature,
                        "distillation temperature");
  cmd_train->add_option("--budget", tr.cfg.token_budget, "batch token budget");
  cmd_train->add_option("--max-steps", tr.cfg.max_steps, "optimizer steps");
  cmd_train->add_option("--warmup", tr.cfg.warmup, "warmup steps");
  cmd_train->add_option("--clip", tr.cfg.clip_norm, "gradient norm cap");
  cmd_train->add_option("--seed", tr.cfg.seed, "run seed");
  cmd_train->add_option("--eval-every", tr.cfg.eval_every, "eval cadence");
  cmd_train->add_option("--eval-max-len", tr.cfg.eval_max_len,
                        "greedy decode cap at eval");
  cmd_train->add_option("--out", tr.cfg.out_dir, "run directory");
  cmd_train->add_option("--teacher", tr.cfg.teacher_checkpoint,
                        "teacher checkpoint (st-kd)");
  cmd_train->add_option("--init", tr.cfg.init_checkpoint,
                        "initial weights checkpoint");
  cmd_train->add_option("--init-asr", tr.cfg.init_asr,
                        "encoder init checkpoint (st-pretrained)");
  cmd_train->add_option("--init-mt", tr.cfg.init_mt,
                        "decoder init checkpoint (st-pretrained)");
  cmd_train->add_option("--d-model", tr.cfg.model.d_model, "model width");
  cmd_train->add_option("--d-ff", tr.cfg.model.d_ff, "feed-forward width");
  cmd_train->add_option("--heads", tr.cfg.model.heads, "attention heads");
  cmd_train->add_option("--enc-layers", tr.cfg.model.enc_layers,
                        "encoder layers");
  cmd_train->add_option("--dec-layers", tr.cfg.model.dec_layers,
                        "decoder layers");
  cmd_train->add_option("--dropout", tr.cfg.model.dropout_p, "dropout rate");
  cmd_train->add_option("--max-src-len", tr.cfg.model.max_src_len,
                        "source length limit");
  cmd_train->add_option("--max-tgt-len", tr.cfg.model.max_tgt_len,
                        "target length limit");

  TranslateOpts tl;
  CLI::App* cmd_tl = app.add_subcommand("translate", "decode a manifest");
  cmd_tl->add_option("--mode", tl.mode, "greedy | beam | ensemble | pipeline")
      ->check(CLI::IsMember({"greedy", "beam", "ensemble", "pipeline"}));
  cmd_tl->add_option("--model", tl.models,
                     "model checkpoint (repeat for ensemble)");
  cmd_tl->add_option("--asr", tl.asr_ckpt, "recognizer checkpoint (pipeline)");
  cmd_tl->add_option("--mt", tl.mt_ckpt, "translator checkpoint (pipeline)");
  cmd_tl->add_option("--manifest", tl.manifest, "input manifest")->required();
  cmd_tl->add_option("--out", tl.out_file, "hypothesis file")->required();
  cmd_tl->add_option("--src-bpe", tl.src_codec, "source codec prefix")
      ->required();
  cmd_tl->add_option("--tgt-bpe", tl.tgt_codec, "target codec prefix")
      ->required();
  cmd_tl->add_option("--beam", tl.beam, "beam size");
  cmd_tl->add_option("--alpha", tl.alpha, "length penalty exponent");
  cmd_tl->add_option("--max-len", tl.max_len, "decode step cap");

  EvaluateOpts ev;
  CLI::App* cmd_ev = app.add_subcommand("evaluate", "score a hypothesis file");
  cmd_ev->add_option("--metric", ev.metric, "bleu | wer")
      ->check(CLI::IsMember({"bleu", "wer"}));
  cmd_ev->add_option("--hyp", ev.hyp_file, "hypothesis file")->required();
  cmd_ev->add_option("--ref", ev.ref_file, "reference file");
  cmd_ev->add_option("--manifest", ev.manifest, "manifest as reference source");
  cmd_ev->add_option("--side", ev.side, "manifest column: src | tgt")
      ->check(CLI::IsMember({"src", "tgt"}));
  cmd_ev->add_flag("--smooth", ev.smooth, "add-one smoothing for BLEU");

  AttentionOpts at;
  CLI::App* cmd_at =
      app.add_subcommand("attention-dump", "export cross-attention maps");
  cmd_at->add_option("--model", at.model_ckpt, "model checkpoint")->required();
  cmd_at->add_option("--manifest", at.manifest, "manifest TSV")->required();
  cmd_at->add_option("--row", at.row, "manifest row index");
  cmd_at->add_option("--out", at.out_dir, "output directory")->required();
  cmd_at->add_option("--prefix", at.prefix, "output filename prefix");
  cmd_at->add_option("--src-bpe", at.src_codec, "source codec prefix")
      ->required();
  cmd_at->add_option("--tgt-bpe", at.tgt_codec, "target codec prefix")
      ->required();

  SweepOpts sw;
  CLI::App* cmd_sw =
      app.add_subcommand("sweep-lambda", "teacher weight sweep");
  cmd_sw->add_option("--values", sw.values, "comma-separated lambda grid");
  cmd_sw->add_option("--train", sw.train_manifest, "train manifest")
      ->required();
  cmd_sw->add_option("--dev", sw.dev_manifest, "dev manifest")->required();
  cmd_sw->add_option("--teacher", sw.teacher_ckpt, "teacher checkpoint")
      ->required();
  cmd_sw->add_option("--init", sw.init_ckpt, "shared init checkpoint")
      ->required();
  cmd_sw->add_option("--out", sw.out_dir, "sweep output directory")
      ->required();
  cmd_sw->add_option("--src-bpe", sw.src_codec, "source codec prefix")
      ->required();
  cmd_sw->add_option("--tgt-bpe", sw.tgt_codec, "target codec prefix")
      ->required();
  cmd_sw->add_option("--budget", sw.budget, "batch token budget");
  cmd_sw->add_option("--max-steps", sw.max_steps, "steps per run");
  cmd_sw->add_option("--warmup", sw.warmup, "warmup steps");
  cmd_sw->add_option("--seed", sw.seed, "shared run seed");
  cmd_sw->add_option("--temperature", sw.temperature, "distillation temperature");
  cmd_sw->add_option("--beam", sw.beam, "dev decode beam");
  cmd_sw->add_option("--max-len", sw.max_len, "dev decode cap");

  try {
    app.parse(argc, argv);
    if (cmd_gen->parsed()) run_gen_data(gen);
    if (cmd_bpe->parsed()) run_bpe_train(bpe);
    if (cmd_train->parsed()) {
      if (tr.regime.empty() && tr.config_file.empty())
        throw ConfigError("train needs --regime or --config");
      run_train(tr, cmd_train);
    }
    if (cmd_tl->parsed()) run_translate(tl);
    if (cmd_ev->parsed()) run_evaluate(ev);
    if (cmd_at->parsed()) run_attention_dump(at);
    if (cmd_sw->parsed()) run_sweep(sw);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
