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

#include "deskst/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace deskst {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kLogFloor = 1e-10f;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("wav: truncated while reading a 32-bit field");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw FormatError("wav: truncated while reading a 16-bit field");
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff),
               char(v >> 24 & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8 & 0xff)};
  out.write(b, 2);
}

}  // namespace

Waveform read_wav_pcm16_mono(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("wav: missing RIFF header in " + path);
  read_u32(in);  // declared riff size; chunk walking does not rely on it
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("wav: not a WAVE file: " + path);

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  Waveform w;
  bool have_data = false;
  while (in.read(tag, 4)) {
    uint32_t size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: fmt chunk too small");
      audio_format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.ignore(size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      if (audio_format != 1)
        throw FormatError("wav: only PCM supported (format tag " +
                          std::to_string(audio_format) + ")");
      if (channels != 1)
        throw FormatError("wav: expected mono, got " +
                          std::to_string(channels) + " channels");
      if (bits != 16)
        throw FormatError("wav: expected 16-bit samples, got " +
                          std::to_string(bits));
      uint32_t count = size / 2;
      w.samples.resize(count);
      for (uint32_t i = 0; i < count; ++i) {
        uint16_t raw = read_u16(in);
        w.samples[i] = static_cast<int16_t>(raw) / 32768.0f;
      }
      if (size % 2) in.ignore(1);
      have_data = true;
    } else {
      // Unknown chunk; RIFF pads odd-sized chunks with one byte.
      in.ignore(size + (size % 2));
    }
    if (have_fmt && have_data) break;
  }
  if (!have_data) throw FormatError("wav: no data chunk in " + path);
  if (sample_rate == 0) throw FormatError("wav: zero sample rate");
  w.sample_rate = static_cast<int>(sample_rate);
  return w;
}

void write_wav_pcm16_mono(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw ConfigError("wav: sample rate must be > 0");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write wav file: " + path);
  uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(w.sample_rate));
  write_u32(out, static_cast<uint32_t>(w.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float s : w.samples) {
    double v = std::lround(static_cast<double>(s) * 32768.0);
    v = std::clamp(v, -32768.0, 32767.0);
    write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!out) throw IoError("short write on wav file: " + path);
}

Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_radix2(std::vector<std::complex<double>>& x, bool inverse) {
  const size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ContractError("fft size must be a power of two, got " +
                        std::to_string(n));
  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = x[i + k];
        std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& v : x) v /= double(n);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace {

std::vector<double> mel_points(Index n_mels, int sample_rate) {
  // n_mels + 2 points equally spaced in mel between 0 Hz and Nyquist.
  double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> pts(static_cast<size_t>(n_mels) + 2);
  for (size_t i = 0; i < pts.size(); ++i)
    pts[i] = mel_to_hz(mel_max * double(i) / double(n_mels + 1));
  return pts;
}

}  // namespace

std::vector<double> mel_center_freqs(Index n_mels, int sample_rate) {
  std::vector<double> pts = mel_points(n_mels, sample_rate);
  return std::vector<double>(pts.begin() + 1, pts.end() - 1);
}

MatF mel_filterbank_matrix(Index n_mels, Index n_fft, int sample_rate) {
  if (n_mels < 1) throw ConfigError("need at least one mel filter");
  const Index bins = n_fft / 2 + 1;
  std::vector<double> pts = mel_points(n_mels, sample_rate);
  MatF fb = MatF::Zero(n_mels, bins);
  for (Index m = 0; m < n_mels; ++m) {
    double lo = pts[size_t(m)], c = pts[size_t(m) + 1], hi = pts[size_t(m) + 2];
    for (Index b = 0; b < bins; ++b) {
      double f = double(b) * sample_rate / double(n_fft);
      double w = 0.0;
      if (f > lo && f < c)
        w = (f - lo) / (c - lo);
      else if (f >= c && f < hi)
        w = (hi - f) / (hi - c);
      fb(m, b) = static_cast<float>(w);
    }
  }
  return fb;
}

FeatureMatrix log_mel_filterbank(const Waveform& w, Index n_mels,
                                 double win_ms, double hop_ms) {
  if (w.sample_rate <= 0) throw InputError("waveform has no sample rate");
  const Index win =
      static_cast<Index>(std::lround(w.sample_rate * win_ms / 1000.0));
  const Index hop =
      static_cast<Index>(std::lround(w.sample_rate * hop_ms / 1000.0));
  if (win < 2 || hop < 1) throw ConfigError("degenerate window or hop");
  const Index len = static_cast<Index>(w.samples.size());
  if (len < win)
    throw InputError("waveform of " + std::to_string(len) +
                     " samples is shorter than one " + std::to_string(win) +
                     "-sample analysis window");
  const Index n_frames = (len - win) / hop + 1;
  const Index n_fft = next_pow2(win);
  const Index bins = n_fft / 2 + 1;

  // Periodic Hann window.
  std::vector<double> window(static_cast<size_t>(win));
  for (Index i = 0; i < win; ++i)
    window[size_t(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / double(win)));

  MatF fb = mel_filterbank_matrix(n_mels, n_fft, w.sample_rate);
  FeatureMatrix out;
  out.frames = MatF(n_frames, n_mels);
  out.frame_shift_ms = hop_ms;
  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
  for (Index t = 0; t < n_frames; ++t) {
    for (Index i = 0; i < win; ++i)
      buf[size_t(i)] = w.samples[size_t(t * hop + i)] * window[size_t(i)];
    std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
    fft_radix2(buf);
    for (Index m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (Index b = 0; b < bins; ++b)
        e += fb(m, b) * std::norm(buf[size_t(b)]);
      out.frames(t, m) =
          std::log(std::max(static_cast<float>(e), kLogFloor));
    }
  }
  return out;
}

FeatureMatrix cmvn(const FeatureMatrix& f) {
  if (f.n_frames() < 2)
    throw InputError("cmvn needs at least two frames, got " +
                     std::to_string(f.n_frames()));
  FeatureMatrix out;
  out.frame_shift_ms = f.frame_shift_ms;
  out.frames = f.frames;
  const float var_floor = 1e-8f;
  for (Index j = 0; j < f.dim(); ++j) {
    float mean = f.frames.col(j).mean();
    float var = (f.frames.col(j).array() - mean).square().mean();
    float denom = std::sqrt(std::max(var, var_floor));
    out.frames.col(j) = (f.frames.col(j).array() - mean) / denom;
  }
  return out;
}

FeatureMatrix stack_and_downsample(const FeatureMatrix& f, Index n_left,
                                   Index stride) {
  if (f.n_frames() < 1) throw InputError("stack_and_downsample: empty input");
  if (n_left < 0 || stride < 1)
    throw ConfigError("stack_and_downsample needs n_left >= 0, stride >= 1");
  const Index n_out = (f.n_frames() + stride - 1) / stride;
  const Index width = n_left + 1;
  FeatureMatrix out;
  out.frame_shift_ms = f.frame_shift_ms * static_cast<double>(stride);
  out.frames = MatF(n_out, f.dim() * width);
  for (Index t = 0; t < n_out; ++t) {
    Index center = t * stride;
    for (Index k = 0; k < width; ++k) {
      // Oldest context first; indices before the start repeat frame 0.
      // (ceil(n/stride) - 1) * stride <= n - 1, so center stays in range.
      Index src = std::max<Index>(center - n_left + k, 0);
      out.frames.block(t, k * f.dim(), 1, f.dim()) = f.frames.row(src);
    }
  }
  return out;
}

}  // namespace deskst
