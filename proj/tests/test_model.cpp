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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>

#include "deskst/grad_check.hpp"
#include "deskst/model.hpp"

using namespace deskst;

namespace {

TransformerConfig tiny_st() {
  TransformerConfig cfg;
  cfg.task = Task::kSt;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.tgt_vocab = 11;
  cfg.feat_dim = 6;
  cfg.dropout_p = 0.1;
  return cfg;
}

FeatureMatrix fixed_features(Index n, Index dim) {
  FeatureMatrix f;
  f.frames = MatF(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j)
      f.frames(i, j) = std::sin(0.1f * float(i * dim + j)) * 0.5f;
  return f;
}

bool params_equal(const TransformerModel<float>& a,
                  const TransformerModel<float>& b) {
  if (a.params.size() != b.params.size()) return false;
  for (const auto& [name, t] : a.params) {
    auto it = b.params.find(name);
    if (it == b.params.end()) return false;
    if (t.m() != it->second.m()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("same config and seed build bitwise-identical models") {
  TransformerConfig cfg = tiny_st();
  auto a = build_model<float>(cfg, 42);
  auto b = build_model<float>(cfg, 42);
  CHECK(params_equal(a, b));
  auto c = build_model<float>(cfg, 43);
  CHECK(!params_equal(a, c));
}

TEST_CASE("parameter count matches independent shape arithmetic") {
  TransformerConfig cfg;
  cfg.task = Task::kSt;
  cfg.d_model = 64;
  cfg.d_ff = 256;
  cfg.heads = 4;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.tgt_vocab = 100;
  cfg.feat_dim = 320;
  auto m = build_model<float>(cfg, 1);

  // Closed form, worked out from the architecture and nothing else:
  // attention block = h * 3 * d*dk + (h*dk)*d; norm = 2d;
  // ffn = d*dff + dff + dff*d + d.
  long d = 64, dff = 256, h = 4, dk = d / h, v = 100, feat = 320;
  long attn = h * 3 * d * dk + h * dk * d;
  long norm = 2 * d;
  long ffn = d * dff + dff + dff * d + d;
  long enc_layer = attn + norm + ffn + norm;
  long dec_layer = attn + norm + attn + norm + ffn + norm;
  long expect = feat * d + 2 * d        // feature projection + its norm
                + v * d                 // target embedding
                + 2 * enc_layer + 2 * dec_layer
                + d * v + v;            // output projection
  long have = 0;
  for (const auto& [name, t] : m.params) have += t.numel();
  CHECK(have == expect);
  CHECK(have == 265444);
}

TEST_CASE("ASR and ST differ only in vocabulary-sized tables") {
  TransformerConfig st = tiny_st();
  TransformerConfig asr = st;
  asr.task = Task::kAsr;
  asr.tgt_vocab = 17;
  auto ts = parameter_shapes(st);
  auto ta = parameter_shapes(asr);
  REQUIRE(ts.size() == ta.size());
  for (const auto& [name, shape] : ts) {
    REQUIRE(ta.count(name) == 1);
    if (name == "embed.tgt" || name == "out_proj.w" || name == "out_proj.b") {
      CHECK(ta[name] != shape);
    } else {
      CHECK(ta[name] == shape);
    }
  }
}

TEST_CASE("config validation rejects bad settings") {
  TransformerConfig cfg = tiny_st();
  cfg.heads = 3;  // does not divide 8
  CHECK_THROWS_AS(build_model<float>(cfg, 1), ConfigError);
  cfg = tiny_st();
  cfg.dropout_p = 1.0;
  CHECK_THROWS_AS(build_model<float>(cfg, 1), ConfigError);
  cfg = tiny_st();
  cfg.tgt_vocab = 3;  // too small to hold pad/bos/eos/unk
  CHECK_THROWS_AS(build_model<float>(cfg, 1), ConfigError);
  cfg = tiny_st();
  cfg.task = Task::kMt;
  cfg.src_vocab = 0;
  CHECK_THROWS_AS(build_model<float>(cfg, 1), ConfigError);
}

TEST_CASE("forward produces per-position logits over the vocabulary") {
  auto m = build_model<float>(tiny_st(), 5);
  FeatureMatrix f = fixed_features(7, 6);
  TensorF enc_in = encoder_input_from_features(m, f);
  ForwardResult<float> r = forward(m, enc_in, {1, 5, 6, 7});
  CHECK(r.logits.rows() == 4);
  CHECK(r.logits.cols() == 11);
  CHECK(r.logits.all_finite());
  REQUIRE(r.cross_attention.size() == 1);
  REQUIRE(r.cross_attention[0].size() == 2);
  CHECK(r.cross_attention[0][0].rows() == 4);
  CHECK(r.cross_attention[0][0].cols() == 7);
}

TEST_CASE("decoder contract violations are rejected") {
  auto m = build_model<float>(tiny_st(), 5);
  TensorF enc_in = encoder_input_from_features(m, fixed_features(4, 6));
  CHECK_THROWS_AS(forward(m, enc_in, {5, 6}), ContractError);  // no bos
  CHECK_THROWS_AS(forward(m, enc_in, {}), ContractError);

  TransformerConfig cfg = tiny_st();
  cfg.max_tgt_len = 3;
  auto small = build_model<float>(cfg, 5);
  TensorF e2 = encoder_input_from_features(small, fixed_features(4, 6));
  CHECK_THROWS_AS(forward(small, e2, {1, 5, 6, 7}), InputError);

  cfg = tiny_st();
  cfg.max_src_len = 3;
  auto short_src = build_model<float>(cfg, 5);
  CHECK_THROWS_AS(encoder_input_from_features(short_src, fixed_features(4, 6)),
                  InputError);
}

TEST_CASE("encoder input type must match the task") {
  auto st = build_model<float>(tiny_st(), 5);
  CHECK_THROWS_AS(encoder_input_from_ids(st, {4, 5}), ConfigError);

  TransformerConfig mt_cfg = tiny_st();
  mt_cfg.task = Task::kMt;
  mt_cfg.src_vocab = 13;
  auto mt = build_model<float>(mt_cfg, 6);
  CHECK_THROWS_AS(encoder_input_from_features(mt, fixed_features(4, 6)),
                  ConfigError);
  TensorF e = encoder_input_from_ids(mt, {4, 5, 6});
  CHECK(e.rows() == 3);
  CHECK(e.cols() == 8);
}

TEST_CASE("perturbing a later decoder position leaves earlier logits alone") {
  auto m = build_model<float>(tiny_st(), 9);
  TensorF enc_in = encoder_input_from_features(m, fixed_features(5, 6));
  ForwardResult<float> a = forward(m, enc_in, {1, 4, 5, 6});
  ForwardResult<float> b = forward(m, enc_in, {1, 4, 9, 6});
  for (Index j = 0; j < a.logits.cols(); ++j) {
    CHECK(a.logits.m()(0, j) == b.logits.m()(0, j));
    CHECK(a.logits.m()(1, j) == b.logits.m()(1, j));
  }
  CHECK(a.logits.m().row(2) != b.logits.m().row(2));
}

TEST_CASE("tasks share decoder behavior given the same encoder output") {
  TransformerConfig st_cfg = tiny_st();
  TransformerConfig asr_cfg = st_cfg;
  asr_cfg.task = Task::kAsr;
  asr_cfg.tgt_vocab = 9;
  TransformerConfig mt_cfg = st_cfg;
  mt_cfg.task = Task::kMt;
  mt_cfg.src_vocab = 9;

  auto st = build_model<float>(st_cfg, 21);
  auto asr = build_model<float>(asr_cfg, 22);
  auto mt = build_model<float>(mt_cfg, 23);
  init_from_pretrained(st, asr, mt);

  MatF enc(5, 8);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 8; ++j) enc(i, j) = 0.1f * float(i) - 0.05f * float(j);
  TensorF enc_out = TensorF::from_matrix(enc);
  DropPlan off1, off2;
  ForwardResult<float> rs = run_decoder(st, enc_out, {1, 5, 6}, off1);
  ForwardResult<float> rm = run_decoder(mt, enc_out, {1, 5, 6}, off2);
  CHECK(rs.logits.m() == rm.logits.m());
}

TEST_CASE("pretrained initialization copies exactly the right halves") {
  TransformerConfig st_cfg = tiny_st();
  TransformerConfig asr_cfg = st_cfg;
  asr_cfg.task = Task::kAsr;
  asr_cfg.tgt_vocab = 9;
  TransformerConfig mt_cfg = st_cfg;
  mt_cfg.task = Task::kMt;
  mt_cfg.src_vocab = 9;

  auto st = build_model<float>(st_cfg, 31);
  auto st_before = build_model<float>(st_cfg, 31);
  auto asr = build_model<float>(asr_cfg, 32);
  auto mt = build_model<float>(mt_cfg, 33);
  init_from_pretrained(st, asr, mt);

  for (const auto& [name, t] : st.params) {
    if (name.rfind("feat_", 0) == 0 || name.rfind("enc.", 0) == 0) {
      CHECK(t.m() == asr.at(name).m());
    } else if (name.rfind("dec.", 0) == 0 || name == "embed.tgt" ||
               name.rfind("out_proj.", 0) == 0) {
      CHECK(t.m() == mt.at(name).m());
    } else {
      CHECK(t.m() == st_before.at(name).m());
    }
  }

  // Donor with a different width must be named in the error.
  TransformerConfig wide = asr_cfg;
  wide.d_model = 16;
  wide.d_ff = 32;
  auto asr_wide = build_model<float>(wide, 34);
  auto st2 = build_model<float>(st_cfg, 31);
  CHECK_THROWS_WITH_AS(init_from_pretrained(st2, asr_wide, mt),
                       doctest::Contains("enc.0"), ConfigError);
}

TEST_CASE("checkpoints round-trip bitwise through save and load") {
  auto m = build_model<float>(tiny_st(), 77);
  const std::string path = "/tmp/deskst_test_model.ckpt";
  save_checkpoint(path, m);
  TransformerModel<float> r = load_checkpoint(path);
  CHECK(params_equal(m, r));
  CHECK(r.cfg.d_model == m.cfg.d_model);
  CHECK(task_name(r.cfg.task) == "st");

  FeatureMatrix f = fixed_features(5, 6);
  ForwardResult<float> a = forward(m, encoder_input_from_features(m, f),
                                   {1, 5, 6});
  ForwardResult<float> b = forward(r, encoder_input_from_features(r, f),
                                   {1, 5, 6});
  CHECK(a.logits.m() == b.logits.m());

  CHECK_THROWS_AS(load_checkpoint("/tmp/deskst_missing_model.ckpt"), IoError);
  {
    std::FILE* fp = std::fopen(path.c_str(), "rb+");
    std::fputs("XXXX", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("fixed-seed logits match the golden record") {
  auto m = build_model<float>(tiny_st(), 2026);
  FeatureMatrix f = fixed_features(6, 6);
  ForwardResult<float> r =
      forward(m, encoder_input_from_features(m, f), {1, 5, 6, 7});
  const std::string golden = std::string(DESKST_GOLDEN_DIR) + "/model_logits.tsv";
  if (std::getenv("DESKST_UPDATE_GOLDEN") != nullptr) {
    std::ofstream out(golden);
    REQUIRE(out.good());
    out.precision(10);
    for (Index i = 0; i < r.logits.rows(); ++i) {
      for (Index j = 0; j < r.logits.cols(); ++j) {
        if (j) out << '\t';
        out << r.logits.m()(i, j);
      }
      out << '\n';
    }
    return;
  }
  std::ifstream in(golden);
  REQUIRE_MESSAGE(in.good(), "golden file missing; set DESKST_UPDATE_GOLDEN=1");
  for (Index i = 0; i < r.logits.rows(); ++i)
    for (Index j = 0; j < r.logits.cols(); ++j) {
      double want;
      REQUIRE(static_cast<bool>(in >> want));
      CHECK(std::abs(double(r.logits.m()(i, j)) - want) < 1e-5);
    }
}

TEST_CASE("full tiny model passes spot gradient checks in 64-bit mode") {
  TransformerConfig cfg = tiny_st();
  cfg.dropout_p = 0.0;
  auto m = build_model<double>(cfg, 55);
  FeatureMatrix f = fixed_features(4, 6);
  std::vector<int> dec_ids = {1, 5, 6};

  // One representative tensor of each kind; FD covers every coordinate.
  std::vector<TensorD> inputs = {
      m.at("feat_proj.w"),      m.at("feat_norm.gain"),
      m.at("enc.0.attn.q.0"),   m.at("enc.0.attn.o"),
      m.at("enc.0.ffn.b1"),     m.at("enc.0.ffn_norm.bias"),
      m.at("embed.tgt"),        m.at("dec.0.cross.v.1"),
      m.at("dec.0.self_norm.gain"), m.at("out_proj.b")};
  std::mt19937_64 g(66);
  MatD w(3, 11);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 11; ++j) w(i, j) = uniform_real(g, -1.0, 1.0);
  auto fn = [&m, &f, &dec_ids, &w](const std::vector<TensorD>&) {
    ForwardResult<double> r =
        forward(m, encoder_input_from_features(m, f), dec_ids);
    return sum(mul(r.logits, TensorD::from_matrix(w)));
  };
  CHECK(grad_check<double>(fn, inputs, 1e-5) < 1e-3);
}
