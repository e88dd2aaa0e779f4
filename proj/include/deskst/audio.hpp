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

#ifndef DESKST_AUDIO_HPP_
#define DESKST_AUDIO_HPP_

#include <complex>
#include <string>
#include <vector>

#include "deskst/nn.hpp"
#include "deskst/tensor.hpp"

namespace deskst {

/// PCM samples normalized to [-1, 1). int16 sample s maps to s / 32768.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;
};

struct FeatureMatrix {
  MatF frames;  // [n_frames x dim]
  double frame_shift_ms = 10.0;

  Index n_frames() const { return frames.rows(); }
  Index dim() const { return frames.cols(); }
};

/// Strict reader: PCM16, mono, one data chunk. Float or multi-channel WAV is
/// rejected rather than converted.
Waveform read_wav_pcm16_mono(const std::string& path);
void write_wav_pcm16_mono(const std::string& path, const Waveform& w);

/// In-place iterative radix-2 transform; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x, bool inverse = false);
Index next_pow2(Index n);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the mel scale between 0 Hz and Nyquist,
/// [n_mels x (n_fft/2 + 1)].
MatF mel_filterbank_matrix(Index n_mels, Index n_fft, int sample_rate);

/// Center frequencies (Hz) of the triangular filters, for oracle checks.
std::vector<double> mel_center_freqs(Index n_mels, int sample_rate);

FeatureMatrix log_mel_filterbank(const Waveform& w, Index n_mels = 80,
                                 double win_ms = 25.0, double hop_ms = 10.0);

/// Per-utterance, per-coefficient standardization with the variance floored
/// at 1e-8 so constant columns map to zero.
FeatureMatrix cmvn(const FeatureMatrix& f);

FeatureMatrix stack_and_downsample(const FeatureMatrix& f, Index n_left = 3,
                                   Index stride = 3);

/// layer_norm(frames . proj) + positional encoding; the encoder input.
template <class S>
Tensor<S> project_features(const FeatureMatrix& f, const Tensor<S>& proj,
                           const Tensor<S>& gain, const Tensor<S>& bias) {
  if (f.n_frames() < 1) throw InputError("project_features: empty features");
  if (proj.rank() != 2 || proj.rows() != f.dim())
    throw ConfigError("feature projection expects [" +
                      std::to_string(f.dim()) + " x d_model], got " +
                      shape_str(proj.shape()));
  Mat<S> x = f.frames.template cast<S>();
  Tensor<S> h = layer_norm(matmul(Tensor<S>::from_matrix(std::move(x)), proj),
                           gain, bias);
  return add(h, positional_encoding<S>(f.n_frames(), proj.cols()));
}

}  // namespace deskst

#endif  // DESKST_AUDIO_HPP_
