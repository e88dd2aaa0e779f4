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

#include <cstring>
#include <fstream>

#include "deskst/config.hpp"
#include "deskst/model.hpp"

namespace deskst {

std::string task_name(Task t) {
  switch (t) {
    case Task::kAsr: return "asr";
    case Task::kMt: return "mt";
    case Task::kSt: return "st";
  }
  throw ContractError("unreachable task value");
}

Task task_from_name(const std::string& name) {
  if (name == "asr") return Task::kAsr;
  if (name == "mt") return Task::kMt;
  if (name == "st") return Task::kSt;
  throw ConfigError("unknown task \"" + name + "\", want asr|mt|st");
}

std::map<std::string, std::vector<Index>> parameter_shapes(
    const TransformerConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::vector<Index>> t;
  const Index d = cfg.d_model, dk = cfg.d_model / cfg.heads;

  if (cfg.task == Task::kMt) {
    t["embed.src"] = {cfg.src_vocab, d};
  } else {
    t["feat_proj.w"] = {cfg.feat_dim, d};
    t["feat_norm.gain"] = {d};
    t["feat_norm.bias"] = {d};
  }
  t["embed.tgt"] = {cfg.tgt_vocab, d};

  auto add_attn = [&](const std::string& prefix) {
    for (Index h = 0; h < cfg.heads; ++h) {
      std::string n = std::to_string(h);
      t[prefix + ".q." + n] = {d, dk};
      t[prefix + ".k." + n] = {d, dk};
      t[prefix + ".v." + n] = {d, dk};
    }
    t[prefix + ".o"] = {cfg.heads * dk, d};
  };
  auto add_norm = [&](const std::string& prefix) {
    t[prefix + ".gain"] = {d};
    t[prefix + ".bias"] = {d};
  };
  auto add_ffn = [&](const std::string& prefix) {
    t[prefix + ".w1"] = {d, cfg.d_ff};
    t[prefix + ".b1"] = {cfg.d_ff};
    t[prefix + ".w2"] = {cfg.d_ff, d};
    t[prefix + ".b2"] = {d};
  };

  for (Index l = 0; l < cfg.enc_layers; ++l) {
    std::string p = "enc." + std::to_string(l);
    add_attn(p + ".attn");
    add_norm(p + ".attn_norm");
    add_ffn(p + ".ffn");
    add_norm(p + ".ffn_norm");
  }
  for (Index l = 0; l < cfg.dec_layers; ++l) {
    std::string p = "dec." + std::to_string(l);
    add_attn(p + ".self");
    add_norm(p + ".self_norm");
    add_attn(p + ".cross");
    add_norm(p + ".cross_norm");
    add_ffn(p + ".ffn");
    add_norm(p + ".ffn_norm");
  }
  t["out_proj.w"] = {d, cfg.tgt_vocab};
  t["out_proj.b"] = {cfg.tgt_vocab};
  return t;
}

std::map<std::string, std::string> config_to_kv(const TransformerConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["task"] = task_name(cfg.task);
  kv["d_model"] = std::to_string(cfg.d_model);
  kv["d_ff"] = std::to_string(cfg.d_ff);
  kv["heads"] = std::to_string(cfg.heads);
  kv["enc_layers"] = std::to_string(cfg.enc_layers);
  kv["dec_layers"] = std::to_string(cfg.dec_layers);
  kv["dropout"] = std::to_string(cfg.dropout_p);
  kv["src_vocab"] = std::to_string(cfg.src_vocab);
  kv["tgt_vocab"] = std::to_string(cfg.tgt_vocab);
  kv["feat_dim"] = std::to_string(cfg.feat_dim);
  kv["max_src_len"] = std::to_string(cfg.max_src_len);
  kv["max_tgt_len"] = std::to_string(cfg.max_tgt_len);
  return kv;
}

TransformerConfig config_from_kv(
    const std::map<std::string, std::string>& kv) {
  TransformerConfig cfg;
  auto need = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw FormatError("model config lacks required key \"" + key + "\"");
    return it->second;
  };
  cfg.task = task_from_name(need("task"));
  cfg.d_model = std::stol(need("d_model"));
  cfg.d_ff = std::stol(need("d_ff"));
  cfg.heads = std::stol(need("heads"));
  cfg.enc_layers = std::stol(need("enc_layers"));
  cfg.dec_layers = std::stol(need("dec_layers"));
  cfg.dropout_p = std::stod(need("dropout"));
  cfg.src_vocab = std::stol(need("src_vocab"));
  cfg.tgt_vocab = std::stol(need("tgt_vocab"));
  cfg.feat_dim = std::stol(need("feat_dim"));
  cfg.max_src_len = std::stol(need("max_src_len"));
  cfg.max_tgt_len = std::stol(need("max_tgt_len"));
  cfg.validate();
  return cfg;
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'T', 'C'};
constexpr uint16_t kVersion = 1;

void put_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff),
               char(v >> 24 & 0xff)};
  out.write(b, 4);
}

uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw FormatError("checkpoint truncated in a 16-bit field");
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("checkpoint truncated in a 32-bit field");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_f32_row_major(std::ostream& out, const MatF& m) {
  static_assert(sizeof(float) == 4);
  // Row-major storage writes out contiguously; endianness is fixed little
  // by contract, which matches every platform this builds on.
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float)) * m.size());
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const TransformerModel<float>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  put_u16(out, kVersion);
  for (const auto& [name, t] : m.params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(t.shape().size()));
    for (Index e : t.shape()) put_u32(out, static_cast<uint32_t>(e));
    put_f32_row_major(out, t.m());
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
  write_kv_file(path + ".meta", config_to_kv(m.cfg));
}

TransformerModel<float> load_checkpoint(const std::string& path) {
  TransformerConfig cfg = config_from_kv(read_kv_file(path + ".meta"));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic in " + path);
  uint16_t version = get_u16(in);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));

  std::map<std::string, std::vector<Index>> expect = parameter_shapes(cfg);
  TransformerModel<float> m;
  m.cfg = cfg;
  while (true) {
    char probe;
    if (!in.get(probe)) break;  // clean end of file
    in.unget();
    uint32_t name_len = get_u32(in);
    if (name_len == 0 || name_len > 4096)
      throw FormatError("implausible parameter name length " +
                        std::to_string(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FormatError("checkpoint truncated in a parameter name");
    uint32_t rank = get_u32(in);
    if (rank < 1 || rank > 2)
      throw FormatError("parameter " + name + " has unsupported rank " +
                        std::to_string(rank));
    std::vector<Index> shape;
    for (uint32_t i = 0; i < rank; ++i)
      shape.push_back(static_cast<Index>(get_u32(in)));
    auto it = expect.find(name);
    if (it == expect.end())
      throw FormatError("checkpoint carries unknown parameter " + name);
    if (it->second != shape)
      throw FormatError("parameter " + name + " has shape " +
                        shape_str(shape) + ", config implies " +
                        shape_str(it->second));
    Index rows = rank == 1 ? 1 : shape[0];
    Index cols = rank == 1 ? shape[0] : shape[1];
    MatF v(rows, cols);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(float)) * v.size());
    if (!in) throw FormatError("checkpoint truncated in data of " + name);
    Tensor<float> t = rank == 1 ? Tensor<float>::row_vector(std::move(v), true)
                                : Tensor<float>::from_matrix(std::move(v), true);
    m.params.emplace(name, std::move(t));
    expect.erase(it);
  }
  if (!expect.empty())
    throw FormatError("checkpoint is missing parameter " +
                      expect.begin()->first);
  return m;
}

}  // namespace deskst
