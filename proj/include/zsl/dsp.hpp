/* Copyright 2026 The zsl-music Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Log mel-spectrogram front end: linear resampling, Hann-windowed STFT,
// triangular mel filterbank (HTK mel scale), log10 of filtered power, and
// fixed-size patch extraction for the encoder.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "zsl/error.hpp"
#include "zsl/ndarray.hpp"

namespace zsl {

struct PcmSignal {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }

  void validate() const {
    if (sample_rate <= 0) throw DataError("PcmSignal: sample_rate must be positive");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::isfinite(samples[i])) {
        throw DataError("PcmSignal: non-finite sample at index " + std::to_string(i));
      }
    }
  }
};

struct DspConfig {
  int target_sample_rate = 22050;
  std::size_t frame_size = 1024;
  std::size_t hop_size = 512;
  std::size_t n_mels = 128;
  double f_min = 0.0;
  double f_max = 11025.0;
  double log_epsilon = 1e-10;

  std::size_t n_bins() const { return frame_size / 2 + 1; }

  void validate() const {
    if (target_sample_rate <= 0) throw UsageError("dsp: target_sample_rate must be positive");
    if (frame_size < 2) throw UsageError("dsp: frame_size must be at least 2");
    if (hop_size == 0 || hop_size > frame_size) {
      throw UsageError("dsp: hop_size must satisfy 0 < hop_size <= frame_size");
    }
    if (n_mels < 1) throw UsageError("dsp: n_mels must be at least 1");
    if (!(f_min >= 0.0) || !(f_min < f_max) || !(f_max <= target_sample_rate / 2.0)) {
      throw UsageError("dsp: frequencies must satisfy 0 <= f_min < f_max <= sample_rate/2");
    }
    if (!(log_epsilon > 0.0)) throw UsageError("dsp: log_epsilon must be positive");
  }

  friend bool operator==(const DspConfig&, const DspConfig&) = default;
};

struct FilterBank {
  NdArray<double> weights;  // [n_mels x n_bins]
  std::vector<double> center_freqs;
};

struct MelSpectrogram {
  NdArray<double> values;  // [n_frames x n_mels]
  DspConfig config;

  std::size_t frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
  std::size_t bands() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Number of full frames that fit in `length` samples.
inline std::size_t frame_count(std::size_t length, std::size_t frame, std::size_t hop) {
  if (length < frame) return 0;
  return (length - frame) / hop + 1;
}

/// Linear-interpolation resampler. Output length is round(len * target / rate);
/// sample i of the output reads the input at position i * rate / target,
/// clamped to the last input sample.
inline PcmSignal resample(const PcmSignal& signal, int target_rate) {
  if (target_rate <= 0) throw UsageError("resample: target rate must be positive");
  signal.validate();
  if (target_rate == signal.sample_rate) return signal;
  PcmSignal out;
  out.sample_rate = target_rate;
  const std::size_t n = signal.samples.size();
  if (n == 0) return out;
  const double ratio = static_cast<double>(signal.sample_rate) / target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / signal.sample_rate));
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto left = static_cast<std::size_t>(pos);
    if (left + 1 >= n) {
      out.samples[i] = signal.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(left);
    const double a = signal.samples[left];
    const double b = signal.samples[left + 1];
    out.samples[i] = a + (b - a) * frac;
  }
  return out;
}

/// Triangular filters with unit peaks at n_mels points equally spaced on the
/// mel scale between f_min and f_max. No area normalization.
inline FilterBank build_mel_filterbank(const DspConfig& config) {
  config.validate();
  const std::size_t n_bins = config.n_bins();
  const double mel_lo = hz_to_mel(config.f_min);
  const double mel_hi = hz_to_mel(config.f_max);
  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(config.n_mels + 1));
  }
  FilterBank bank;
  bank.weights = NdArray<double>({config.n_mels, n_bins});
  bank.center_freqs.assign(edges.begin() + 1, edges.end() - 1);
  const double bin_hz = static_cast<double>(config.target_sample_rate) / config.frame_size;
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    bool covered = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f == center) {
        w = 1.0;
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      bank.weights.at(m, k) = w;
      covered = covered || w > 0.0;
    }
    if (!covered) {
      throw UsageError("build_mel_filterbank: mel band " + std::to_string(m) + " (center " +
                       std::to_string(center) +
                       " Hz) covers no FFT bin; reduce n_mels or raise frame_size");
    }
  }
  return bank;
}

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w(std::cos(angle * k), std::sin(angle * k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

}  // namespace detail

/// Magnitude of the one-sided DFT of Hann-windowed frames,
/// shape [n_frames x (frame_size/2 + 1)]. Power-of-two frames use a radix-2
/// FFT, other sizes a direct transform.
inline NdArray<double> stft(const PcmSignal& signal, const DspConfig& config) {
  config.validate();
  signal.validate();
  const std::size_t n = config.frame_size;
  if (signal.samples.size() < n) {
    throw DataError("stft: signal of " + std::to_string(signal.samples.size()) +
                    " samples is shorter than one frame (" + std::to_string(n) + ")");
  }
  const std::size_t n_frames = frame_count(signal.samples.size(), n, config.hop_size);
  const std::size_t n_bins = config.n_bins();
  const auto window = detail::periodic_hann(n);
  NdArray<double> mag({n_frames, n_bins});
  std::vector<std::complex<double>> buf(n);
  const bool fast = detail::is_power_of_two(n);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* x = signal.samples.data() + f * config.hop_size;
    if (fast) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = {x[i] * window[i], 0.0};
      detail::fft_radix2(buf);
      for (std::size_t k = 0; k < n_bins; ++k) mag.at(f, k) = std::abs(buf[k]);
    } else {
      for (std::size_t k = 0; k < n_bins; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
          const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i % n) /
                             static_cast<double>(n);
          acc += x[i] * window[i] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        mag.at(f, k) = std::abs(acc);
      }
    }
  }
  return mag;
}

/// log10(filterbank * |STFT|^2 + log_epsilon), shape [n_frames x n_mels].
inline MelSpectrogram mel_spectrogram(const PcmSignal& signal, const DspConfig& config,
                                      const FilterBank& bank) {
  if (signal.sample_rate != config.target_sample_rate) {
    throw UsageError("mel_spectrogram: signal rate " + std::to_string(signal.sample_rate) +
                     " Hz differs from configured " +
                     std::to_string(config.target_sample_rate) + " Hz; resample first");
  }
  const auto mag = stft(signal, config);
  const std::size_t n_frames = mag.dim(0);
  const std::size_t n_bins = mag.dim(1);
  MelSpectrogram mel;
  mel.config = config;
  mel.values = NdArray<double>({n_frames, config.n_mels});
  std::vector<double> power(n_bins);
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = mag.at(f, k) * mag.at(f, k);
    for (std::size_t m = 0; m < config.n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) acc += bank.weights.at(m, k) * power[k];
      mel.values.at(f, m) = std::log10(acc + config.log_epsilon);
    }
  }
  return mel;
}

inline MelSpectrogram mel_spectrogram(const PcmSignal& signal, const DspConfig& config) {
  return mel_spectrogram(signal, config, build_mel_filterbank(config));
}

/// Contiguous windows of `patch_frames` frames every `stride` frames. A
/// spectrogram shorter than one patch yields a single patch tiled by
/// wrapping around the available frames.
inline std::vector<MelSpectrogram> extract_patches(const MelSpectrogram& mel,
                                                   std::size_t patch_frames, std::size_t stride) {
  if (patch_frames < 1 || stride < 1) {
    throw UsageError("extract_patches: patch_frames and stride must be at least 1");
  }
  const std::size_t n = mel.frames();
  const std::size_t bands = mel.bands();
  if (n == 0 || bands == 0) throw DataError("extract_patches: empty spectrogram");
  auto copy_rows = [&](std::size_t start, bool wrap) {
    MelSpectrogram patch;
    patch.config = mel.config;
    patch.values = NdArray<double>({patch_frames, bands});
    for (std::size_t r = 0; r < patch_frames; ++r) {
      const std::size_t src = wrap ? r % n : start + r;
      std::copy_n(mel.values.data() + src * bands, bands, patch.values.data() + r * bands);
    }
    return patch;
  };
  std::vector<MelSpectrogram> patches;
  if (n < patch_frames) {
    patches.push_back(copy_rows(0, true));
    return patches;
  }
  for (std::size_t start = 0; start + patch_frames <= n; start += stride) {
    patches.push_back(copy_rows(start, false));
  }
  return patches;
}

}  // namespace zsl
