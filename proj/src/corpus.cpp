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

#include "deskst/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "deskst/metrics.hpp"

namespace deskst {

namespace {

namespace fs = std::filesystem;

constexpr double kTau = 6.283185307179586476925287;
constexpr double kToneAmplitude = 0.3;

// Disjoint consonant sets keep the two languages from sharing any surface
// form.
constexpr const char* kSourceConsonants = "bdfgl";
constexpr const char* kTargetConsonants = "kprsv";
constexpr const char* kVowels = "aeiou";
constexpr int kMaxSymbols = 25;

std::vector<std::string> syllables(const char* consonants, int n) {
  if (n < 1 || n > kMaxSymbols)
    throw ConfigError("symbol inventory must hold 1 to " +
                      std::to_string(kMaxSymbols) + " symbols");
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::string s;
    s += consonants[i / 5];
    s += kVowels[i % 5];
    out.push_back(s);
  }
  return out;
}

// Independent, well-mixed generator state per (corpus seed, split, index):
// regenerating any single utterance needs no other draws.
uint64_t utterance_state(uint64_t seed, int split, int index) {
  uint64_t s = seed;
  uint64_t h = detail::splitmix64(s);
  s = h ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(split + 1));
  h = detail::splitmix64(s);
  s = h ^ (0x517cc1b727220a95ull * static_cast<uint64_t>(index + 1));
  return detail::splitmix64(s);
}

// Box-Muller on fixed-generator uniforms, one draw per call.
double gaussian(uint64_t& state) {
  double u1 = 1.0 - detail::uniform_unit(state);  // (0, 1], log-safe
  double u2 = detail::uniform_unit(state);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * u2);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const std::string& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

void SynthTaskSpec::validate() const {
  if (n_symbols < 2 || n_symbols > kMaxSymbols)
    throw ConfigError("n_symbols must lie in [2, " +
                      std::to_string(kMaxSymbols) + "]");
  if (sample_rate < 1000) throw ConfigError("sample_rate too low");
  if (tone_ms <= 0.0) throw ConfigError("tone_ms must be positive");
  double nyquist = sample_rate / 2.0;
  std::set<double> seen;
  for (int k = 0; k < n_symbols; ++k) {
    double f = tone_hz_base + k * tone_hz_step;
    if (f <= 0.0 || f >= nyquist)
      throw ConfigError("tone for symbol " + std::to_string(k) +
                        " falls outside (0, Nyquist)");
    if (!seen.insert(f).second)
      throw ConfigError("tone frequencies must be distinct");
  }
  if (min_len < 1 || max_len < min_len)
    throw ConfigError("utterance length range is invalid");
  if (n_train < 1) throw ConfigError("n_train must be positive");
  if (n_dev < 0 || n_test < 0) throw ConfigError("split sizes must be >= 0");
  if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
}

std::vector<std::string> source_symbols(int n) {
  return syllables(kSourceConsonants, n);
}

std::vector<std::string> target_symbols(int n) {
  return syllables(kTargetConsonants, n);
}

double symbol_tone_hz(const SynthTaskSpec& spec, int symbol) {
  if (symbol < 0 || symbol >= spec.n_symbols)
    throw ContractError("symbol index out of range");
  return spec.tone_hz_base + symbol * spec.tone_hz_step;
}

std::string map_translation(const SynthTaskSpec& spec,
                            const std::string& transcript) {
  std::vector<std::string> src = source_symbols(spec.n_symbols);
  std::vector<std::string> tgt = target_symbols(spec.n_symbols);
  std::vector<std::string> out;
  for (const std::string& w : split_words(transcript)) {
    auto it = std::find(src.begin(), src.end(), w);
    if (it == src.end())
      throw InputError("'" + w + "' is not a source symbol");
    out.push_back(tgt[static_cast<size_t>(it - src.begin())]);
  }
  std::reverse(out.begin(), out.end());
  return join_words(out);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::vector<ManifestRow> rows;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = path + ":" + std::to_string(lineno);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!valid_utf8(line)) throw FormatError(where + ": invalid UTF-8");
    std::vector<std::string> f = split_tabs(line);
    if (f.size() != 4)
      throw FormatError(where + ": expected 4 tab-separated fields, got " +
                        std::to_string(f.size()));
    if (f[0].empty() || f[1].empty())
      throw InputError(where + ": empty id or audio path");
    if (f[2].empty() || f[3].empty())
      throw InputError(where + ": empty transcript or translation");
    if (!ids.insert(f[0]).second)
      throw InputError(where + ": duplicate example id '" + f[0] + "'");
    rows.push_back(ManifestRow{f[0], f[1], f[2], f[3]});
  }
  if (rows.empty()) throw InputError("manifest " + path + " has no rows");
  return rows;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const ManifestRow& r : rows) {
    out << r.id << '\t' << r.audio_path << '\t' << r.transcript << '\t'
        << r.translation << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path);
}

std::string resolve_audio_path(const std::string& manifest_path,
                               const std::string& audio_path) {
  fs::path a(audio_path);
  if (a.is_absolute()) return audio_path;
  return (fs::path(manifest_path).parent_path() / a).string();
}

void check_manifest_audio(const std::string& manifest_path,
                          const std::vector<ManifestRow>& rows) {
  for (const ManifestRow& r : rows) {
    std::string p = resolve_audio_path(manifest_path, r.audio_path);
    if (!fs::exists(p))
      throw InputError("example " + r.id + " references missing audio " + p);
    read_wav_pcm16_mono(p);  // must parse, not merely exist
  }
}

GeneratedCorpus generate_synthetic_dataset(const SynthTaskSpec& spec,
                                           const std::string& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec) throw IoError("cannot create " + out_dir + "/wav: " + ec.message());

  std::vector<std::string> src = source_symbols(spec.n_symbols);
  std::vector<std::string> tgt = target_symbols(spec.n_symbols);
  int spt = static_cast<int>(
      std::lround(spec.tone_ms * spec.sample_rate / 1000.0));
  if (spt < 1) throw ConfigError("tone_ms too short for the sample rate");

  struct Split {
    const char* name;
    int count;
    int tag;
  };
  const Split splits[] = {{"train", spec.n_train, 0},
                          {"dev", spec.n_dev, 1},
                          {"test", spec.n_test, 2}};

  GeneratedCorpus result;
  for (const Split& sp : splits) {
    std::vector<ManifestRow> rows;
    rows.reserve(static_cast<size_t>(sp.count));
    for (int idx = 0; idx < sp.count; ++idx) {
      uint64_t state = utterance_state(spec.seed, sp.tag, idx);
      int span = spec.max_len - spec.min_len + 1;
      int len = spec.min_len +
                static_cast<int>(detail::splitmix64(state) %
                                 static_cast<uint64_t>(span));
      std::vector<int> symbols(len);
      for (int& s : symbols)
        s = static_cast<int>(detail::splitmix64(state) %
                             static_cast<uint64_t>(spec.n_symbols));

      Waveform w;
      w.sample_rate = spec.sample_rate;
      w.samples.resize(static_cast<size_t>(len) * spt);
      for (int seg = 0; seg < len; ++seg) {
        double f = symbol_tone_hz(spec, symbols[seg]);
        float* dst = w.samples.data() + static_cast<size_t>(seg) * spt;
        for (int t = 0; t < spt; ++t)
          dst[t] = static_cast<float>(
              kToneAmplitude * std::sin(kTau * f * t / spec.sample_rate));
      }
      if (spec.noise_std > 0.0) {
        for (float& s : w.samples)
          s += static_cast<float>(spec.noise_std * gaussian(state));
      }

      char tagbuf[16];
      std::snprintf(tagbuf, sizeof(tagbuf), "%06d", idx);
      std::string rel = std::string("wav/") + sp.name + "_" + tagbuf + ".wav";
      write_wav_pcm16_mono((fs::path(out_dir) / rel).string(), w);

      std::vector<std::string> words, mapped;
      for (int s : symbols) {
        words.push_back(src[static_cast<size_t>(s)]);
        mapped.push_back(tgt[static_cast<size_t>(s)]);
      }
      std::reverse(mapped.begin(), mapped.end());
      rows.push_back(ManifestRow{std::string(sp.name) + "-" + tagbuf, rel,
                                 join_words(words), join_words(mapped)});
    }
    std::string mpath = (fs::path(out_dir) / (std::string(sp.name) + ".tsv"))
                            .string();
    if (!rows.empty()) write_manifest(mpath, rows);
    if (sp.tag == 0) result.train_manifest = mpath;
    if (sp.tag == 1) result.dev_manifest = rows.empty() ? "" : mpath;
    if (sp.tag == 2) result.test_manifest = rows.empty() ? "" : mpath;
  }
  return result;
}

FeatureMatrix standard_features(const Waveform& w) {
  return stack_and_downsample(cmvn(log_mel_filterbank(w, 80, 25.0, 10.0)), 3,
                              3);
}

std::vector<TrainExample> load_examples(const std::string& manifest_path,
                                        const BpeModel& src_bpe,
                                        const Vocab& src_vocab,
                                        const BpeModel& tgt_bpe,
                                        const Vocab& tgt_vocab,
                                        bool with_audio) {
  std::vector<ManifestRow> rows = read_manifest(manifest_path);
  std::vector<TrainExample> out;
  out.reserve(rows.size());
  for (const ManifestRow& r : rows) {
    TrainExample e;
    e.id = r.id;
    e.src_text = normalize_text(r.transcript);
    e.tgt_text = normalize_text(r.translation);
    e.src_ids = encode_ids(src_vocab, bpe_apply(src_bpe, e.src_text));
    e.tgt_ids = encode_ids(tgt_vocab, bpe_apply(tgt_bpe, e.tgt_text));
    std::string ap = resolve_audio_path(manifest_path, r.audio_path);
    if (with_audio) {
      e.feats = standard_features(read_wav_pcm16_mono(ap));
    } else if (!fs::exists(ap)) {
      throw InputError("example " + r.id + " references missing audio " + ap);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace deskst
