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

#ifndef DESKST_CORPUS_HPP_
#define DESKST_CORPUS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "deskst/audio.hpp"
#include "deskst/text.hpp"
#include "deskst/train.hpp"

// Dataset plumbing: the synthetic tone-language corpus, TSV manifests, and
// the loader that turns manifest rows into training examples.
//
// The synthetic task pairs a "spoken" language of tone-coded syllables with a
// translated language given by a per-symbol substitution plus full sequence
// reversal. Reversal makes the source-target alignment anti-diagonal, so the
// translation direction cannot be learned by position copying.

namespace deskst {

struct SynthTaskSpec {
  int n_symbols = 10;
  double tone_hz_base = 400.0;  // symbol k sounds at base + k * step
  double tone_hz_step = 280.0;
  double tone_ms = 200.0;       // fixed duration per symbol
  int sample_rate = 16000;
  int min_len = 4;              // symbols per utterance, inclusive range
  int max_len = 8;
  int n_train = 2000;
  int n_dev = 120;
  int n_test = 120;
  double noise_std = 0.05;      // additive Gaussian, in [-1,1) sample units
  uint64_t seed = 1;

  void validate() const;
};

/// Source syllable inventory ("ba", "be", ...). n <= 25.
std::vector<std::string> source_symbols(int n);
/// Target syllable inventory ("ka", "ke", ...), disjoint from the source.
std::vector<std::string> target_symbols(int n);

double symbol_tone_hz(const SynthTaskSpec& spec, int symbol);

/// Reference translation of a transcript: each syllable substituted by its
/// target counterpart, sequence reversed.
std::string map_translation(const SynthTaskSpec& spec,
                            const std::string& transcript);

struct ManifestRow {
  std::string id;
  std::string audio_path;  // relative paths resolve against the manifest dir
  std::string transcript;
  std::string translation;
};

/// Strict TSV reader: exactly four tab-separated fields per row, unique
/// nonempty ids, nonempty text fields, valid UTF-8.
std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows);

std::string resolve_audio_path(const std::string& manifest_path,
                               const std::string& audio_path);

/// Opens every referenced WAV; dangling or unparsable audio fails here,
/// before any training starts.
void check_manifest_audio(const std::string& manifest_path,
                          const std::vector<ManifestRow>& rows);

struct GeneratedCorpus {
  std::string train_manifest;
  std::string dev_manifest;
  std::string test_manifest;
};

/// Writes WAVs under <out_dir>/wav and train/dev/test TSVs under <out_dir>.
/// Byte-identical for a fixed spec.
GeneratedCorpus generate_synthetic_dataset(const SynthTaskSpec& spec,
                                           const std::string& out_dir);

/// The standard acoustic front end: 80 log-mel filterbanks over 25 ms
/// windows at 10 ms hop, per-utterance mean/variance normalization, then
/// 4-frame stacking at stride 3 (output dim 320, 30 ms per row).
FeatureMatrix standard_features(const Waveform& w);

/// Manifest rows -> training examples: normalized text, subword ids with a
/// trailing eos, and (when with_audio) standard features per utterance.
/// Without audio the referenced files must still exist.
std::vector<TrainExample> load_examples(const std::string& manifest_path,
                                        const BpeModel& src_bpe,
                                        const Vocab& src_vocab,
                                        const BpeModel& tgt_bpe,
                                        const Vocab& tgt_vocab,
                                        bool with_audio);

}  // namespace deskst

#endif  // DESKST_CORPUS_HPP_
