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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deskst/corpus.hpp"
#include "deskst/metrics.hpp"
#include "doctest.h"

using namespace deskst;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("deskst_corpus_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

SynthTaskSpec tiny_spec() {
  SynthTaskSpec spec;
  spec.n_symbols = 6;
  spec.tone_ms = 80.0;
  spec.min_len = 2;
  spec.max_len = 4;
  spec.n_train = 6;
  spec.n_dev = 2;
  spec.n_test = 2;
  spec.seed = 5;
  return spec;
}

// All regular files under a directory, as paths relative to it.
std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out.push_back(fs::relative(e.path(), root).string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("spec validation rejects unusable tone layouts") {
  SynthTaskSpec spec = tiny_spec();
  CHECK_NOTHROW(spec.validate());

  SynthTaskSpec bad = spec;
  bad.tone_hz_step = 0.0;  // all symbols would share one tone
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.tone_hz_base = 7000.0;
  bad.tone_hz_step = 300.0;  // runs past Nyquist
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.tone_hz_base = -50.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.min_len = 5;
  bad.max_len = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.n_symbols = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.n_symbols = 40;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.noise_std = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.n_train = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = spec;
  bad.tone_ms = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("symbol inventories are fixed, disjoint and bijective") {
  std::vector<std::string> src = source_symbols(10);
  std::vector<std::string> tgt = target_symbols(10);
  REQUIRE(src.size() == 10);
  REQUIRE(tgt.size() == 10);
  CHECK(src[0] == "ba");
  CHECK(src[5] == "da");
  CHECK(tgt[0] == "ka");
  CHECK(tgt[5] == "pa");

  std::set<std::string> all(src.begin(), src.end());
  for (const std::string& t : tgt) CHECK(all.insert(t).second);
  CHECK(all.size() == 20);

  CHECK_THROWS_AS(source_symbols(26), ConfigError);
  CHECK_THROWS_AS(source_symbols(0), ConfigError);
}

TEST_CASE("translations substitute symbols and reverse the sentence") {
  SynthTaskSpec spec = tiny_spec();
  spec.n_symbols = 15;
  CHECK(map_translation(spec, "ba da fa") == "ra pa ka");
  CHECK(map_translation(spec, "be") == "ke");
  CHECK_THROWS_AS(map_translation(spec, "ba xq"), InputError);

  // Round trip through the inventory index: mapping back symbol by symbol
  // and un-reversing recovers the transcript.
  std::vector<std::string> src = source_symbols(spec.n_symbols);
  std::vector<std::string> tgt = target_symbols(spec.n_symbols);
  std::string transcript = "fa be fo ba";
  std::vector<std::string> mapped = split_words(map_translation(spec, transcript));
  std::reverse(mapped.begin(), mapped.end());
  std::string back;
  for (const std::string& m : mapped) {
    auto it = std::find(tgt.begin(), tgt.end(), m);
    REQUIRE(it != tgt.end());
    if (!back.empty()) back += ' ';
    back += src[static_cast<size_t>(it - tgt.begin())];
  }
  CHECK(back == transcript);
}

TEST_CASE("generation is byte-identical for a fixed spec") {
  SynthTaskSpec spec = tiny_spec();
  fs::path a = fresh_dir("gena");
  fs::path b = fresh_dir("genb");
  GeneratedCorpus ca = generate_synthetic_dataset(spec, a.string());
  GeneratedCorpus cb = generate_synthetic_dataset(spec, b.string());

  std::vector<std::string> fa = list_files(a);
  REQUIRE(fa == list_files(b));
  // 10 WAVs + 3 manifests.
  CHECK(fa.size() == 13);
  for (const std::string& rel : fa) CHECK(slurp(a / rel) == slurp(b / rel));

  CHECK(ca.train_manifest == (a / "train.tsv").string());
  CHECK(read_manifest(ca.train_manifest).size() == 6);
  CHECK(read_manifest(ca.dev_manifest).size() == 2);
  CHECK(read_manifest(cb.test_manifest).size() == 2);

  // A different seed changes the data.
  SynthTaskSpec other = spec;
  other.seed = 6;
  fs::path c = fresh_dir("genc");
  generate_synthetic_dataset(other, c.string());
  CHECK(slurp(a / "train.tsv") != slurp(c / "train.tsv"));
}

TEST_CASE("generated rows obey the mapping rule and length range") {
  SynthTaskSpec spec = tiny_spec();
  fs::path dir = fresh_dir("rows");
  GeneratedCorpus c = generate_synthetic_dataset(spec, dir.string());

  std::set<int> lengths;
  for (const std::string& mpath :
       {c.train_manifest, c.dev_manifest, c.test_manifest}) {
    for (const ManifestRow& r : read_manifest(mpath)) {
      std::vector<std::string> words = split_words(r.transcript);
      int n = static_cast<int>(words.size());
      CHECK(n >= spec.min_len);
      CHECK(n <= spec.max_len);
      lengths.insert(n);
      CHECK(map_translation(spec, r.transcript) == r.translation);
    }
    check_manifest_audio(mpath, read_manifest(mpath));
  }
  // With 10 utterances over lengths 2..4 at least two lengths occur.
  CHECK(lengths.size() >= 2);
}

TEST_CASE("each tone segment lands in its symbol's mel bin") {
  SynthTaskSpec spec;
  spec.n_symbols = 10;
  spec.n_train = 1;
  spec.n_dev = 4;
  spec.n_test = 0;
  spec.seed = 11;
  fs::path dir = fresh_dir("mel");
  GeneratedCorpus c = generate_synthetic_dataset(spec, dir.string());

  const Index n_mels = 80;
  const Index n_fft = next_pow2(static_cast<Index>(0.025 * spec.sample_rate));
  REQUIRE(n_fft == 512);
  MatF fb = mel_filterbank_matrix(n_mels, n_fft, spec.sample_rate);
  std::vector<double> centers = mel_center_freqs(n_mels, spec.sample_rate);

  int spt = static_cast<int>(spec.tone_ms * spec.sample_rate / 1000.0);
  int hop = spec.sample_rate / 100;  // 10 ms
  int win = spec.sample_rate / 40;   // 25 ms
  int frames_per_seg = spt / hop;

  for (const ManifestRow& r : read_manifest(c.dev_manifest)) {
    Waveform w =
        read_wav_pcm16_mono(resolve_audio_path(c.dev_manifest, r.audio_path));
    FeatureMatrix mel = log_mel_filterbank(w, n_mels, 25.0, 10.0);
    std::vector<std::string> words = split_words(r.transcript);
    std::vector<std::string> inv = source_symbols(spec.n_symbols);

    for (size_t seg = 0; seg < words.size(); ++seg) {
      auto it = std::find(inv.begin(), inv.end(), words[seg]);
      REQUIRE(it != inv.end());
      int sym = static_cast<int>(it - inv.begin());
      double f = symbol_tone_hz(spec, sym);

      // The filter with the strongest response at the tone's FFT column.
      Index col = static_cast<Index>(
          std::lround(f * n_fft / spec.sample_rate));
      Index want_bin = 0;
      for (Index j = 1; j < n_mels; ++j)
        if (fb(j, col) > fb(want_bin, col)) want_bin = j;

      // Majority vote over frames whose window lies inside the segment.
      std::map<Index, int> votes;
      int counted = 0;
      for (Index t = 0; t < mel.n_frames(); ++t) {
        long start = static_cast<long>(t) * hop;
        if (start < static_cast<long>(seg) * spt) continue;
        if (start + win > static_cast<long>(seg + 1) * spt) continue;
        Index arg = 0;
        for (Index j = 1; j < n_mels; ++j)
          if (mel.frames(t, j) > mel.frames(t, arg)) arg = j;
        ++votes[arg];
        ++counted;
      }
      REQUIRE(counted >= frames_per_seg / 2);
      Index best = votes.begin()->first;
      for (const auto& v : votes)
        if (v.second > votes[best]) best = v.first;

      CAPTURE(r.id);
      CAPTURE(seg);
      CHECK(std::abs(static_cast<long>(best - want_bin)) <= 1);
      // The measured bin identifies the symbol: its center frequency sits
      // closer to this symbol's tone than to any other symbol's.
      int nearest = 0;
      for (int k = 1; k < spec.n_symbols; ++k)
        if (std::abs(centers[static_cast<size_t>(best)] -
                     symbol_tone_hz(spec, k)) <
            std::abs(centers[static_cast<size_t>(best)] -
                     symbol_tone_hz(spec, nearest)))
          nearest = k;
      CHECK(nearest == sym);
    }
  }
}

TEST_CASE("manifest reading enforces the row contract") {
  fs::path dir = fresh_dir("manifest");

  std::ofstream(dir / "short.tsv") << "id1\twav/a.wav\tba da\n";
  CHECK_THROWS_AS(read_manifest((dir / "short.tsv").string()), FormatError);

  std::ofstream(dir / "dup.tsv")
      << "id1\ta.wav\tba\tka\nid1\tb.wav\tda\tpa\n";
  CHECK_THROWS_AS(read_manifest((dir / "dup.tsv").string()), InputError);

  std::ofstream(dir / "empty_text.tsv") << "id1\ta.wav\t\tka\n";
  CHECK_THROWS_AS(read_manifest((dir / "empty_text.tsv").string()),
                  InputError);

  std::ofstream(dir / "none.tsv") << "";
  CHECK_THROWS_AS(read_manifest((dir / "none.tsv").string()), InputError);

  CHECK_THROWS_AS(read_manifest((dir / "missing.tsv").string()), IoError);

  // CRLF line endings parse the same as LF.
  std::ofstream(dir / "crlf.tsv", std::ios::binary)
      << "id1\ta.wav\tba da\tpa ka\r\nid2\tb.wav\tda\tpa\r\n";
  std::vector<ManifestRow> rows =
      read_manifest((dir / "crlf.tsv").string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].translation == "pa ka");

  // Round trip.
  write_manifest((dir / "rt.tsv").string(), rows);
  std::vector<ManifestRow> back = read_manifest((dir / "rt.tsv").string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == rows[0].id);
  CHECK(back[1].transcript == rows[1].transcript);
}

TEST_CASE("audio checking rejects dangling and corrupt files") {
  fs::path dir = fresh_dir("audiochk");
  Waveform w;
  w.samples.assign(1600, 0.1f);
  write_wav_pcm16_mono((dir / "ok.wav").string(), w);
  std::ofstream(dir / "junk.wav", std::ios::binary) << "not a wav at all";

  std::vector<ManifestRow> rows = {{"a", "ok.wav", "ba", "ka"}};
  std::string mpath = (dir / "m.tsv").string();
  CHECK_NOTHROW(check_manifest_audio(mpath, rows));

  rows[0].audio_path = "gone.wav";
  CHECK_THROWS_AS(check_manifest_audio(mpath, rows), InputError);

  rows[0].audio_path = "junk.wav";
  CHECK_THROWS(check_manifest_audio(mpath, rows));

  // Absolute paths pass through resolution untouched.
  CHECK(resolve_audio_path(mpath, (dir / "ok.wav").string()) ==
        (dir / "ok.wav").string());
  CHECK(resolve_audio_path(mpath, "ok.wav") == (dir / "ok.wav").string());
}

TEST_CASE("the standard front end is the documented composition") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (size_t t = 0; t < w.samples.size(); ++t)
    w.samples[t] = 0.25f * std::sin(2.0 * 3.14159265358979 * 523.0 *
                                    static_cast<double>(t) / 16000.0);

  FeatureMatrix got = standard_features(w);
  FeatureMatrix want =
      stack_and_downsample(cmvn(log_mel_filterbank(w, 80, 25.0, 10.0)), 3, 3);
  CHECK(got.dim() == 320);
  CHECK(got.n_frames() == want.n_frames());
  CHECK(got.frames == want.frames);
}

TEST_CASE("loading turns manifest rows into training examples") {
  SynthTaskSpec spec = tiny_spec();
  fs::path dir = fresh_dir("load");
  GeneratedCorpus c = generate_synthetic_dataset(spec, dir.string());

  std::vector<ManifestRow> rows = read_manifest(c.train_manifest);
  std::vector<std::string> src_lines, tgt_lines;
  for (const ManifestRow& r : rows) {
    src_lines.push_back(normalize_text(r.transcript));
    tgt_lines.push_back(normalize_text(r.translation));
  }
  BpeModel src_bpe = bpe_train(src_lines, 30);
  BpeModel tgt_bpe = bpe_train(tgt_lines, 30);
  std::vector<std::vector<std::string>> src_toks, tgt_toks;
  for (const std::string& l : src_lines)
    src_toks.push_back(bpe_apply(src_bpe, l));
  for (const std::string& l : tgt_lines)
    tgt_toks.push_back(bpe_apply(tgt_bpe, l));
  Vocab src_vocab = vocab_from_tokens(src_toks);
  Vocab tgt_vocab = vocab_from_tokens(tgt_toks);

  std::vector<TrainExample> ex = load_examples(
      c.train_manifest, src_bpe, src_vocab, tgt_bpe, tgt_vocab, true);
  REQUIRE(ex.size() == rows.size());
  for (size_t i = 0; i < ex.size(); ++i) {
    CHECK(ex[i].id == rows[i].id);
    REQUIRE(!ex[i].src_ids.empty());
    REQUIRE(!ex[i].tgt_ids.empty());
    CHECK(ex[i].src_ids.back() == kEosId);
    CHECK(ex[i].tgt_ids.back() == kEosId);
    CHECK(ex[i].feats.dim() == 320);
    CHECK(ex[i].feats.n_frames() > 0);
    // Text survives the id round trip.
    CHECK(bpe_detokenize(decode_ids(src_vocab, ex[i].src_ids)) ==
          ex[i].src_text);
    CHECK(bpe_detokenize(decode_ids(tgt_vocab, ex[i].tgt_ids)) ==
          ex[i].tgt_text);
  }

  std::vector<TrainExample> light = load_examples(
      c.train_manifest, src_bpe, src_vocab, tgt_bpe, tgt_vocab, false);
  REQUIRE(light.size() == rows.size());
  CHECK(light[0].feats.n_frames() == 0);
  CHECK(light[0].src_ids == ex[0].src_ids);

  fs::remove(dir / rows[2].audio_path);
  CHECK_THROWS_AS(load_examples(c.train_manifest, src_bpe, src_vocab,
                                tgt_bpe, tgt_vocab, false),
                  InputError);
}
