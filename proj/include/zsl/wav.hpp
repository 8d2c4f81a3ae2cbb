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

// RIFF/WAVE reader and writer. Supported payloads: PCM 16-bit integer and
// IEEE float 32-bit, mono or stereo, little-endian. Stereo is downmixed by
// the channel mean.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "zsl/dsp.hpp"
#include "zsl/error.hpp"

namespace zsl {

namespace wav_detail {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

inline bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace wav_detail

enum class WavEncoding { pcm16, float32 };

inline PcmSignal decode_wav(std::span<const std::uint8_t> bytes) {
  using namespace wav_detail;
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw DataError("decode_wav: malformed header (expected RIFF/WAVE magic)");
  }
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(bytes, pos, "fmt ")) {
      if (chunk_size < 16 || body + chunk_size > bytes.size()) {
        throw DataError("decode_wav: malformed header (short fmt chunk)");
      }
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      block_align = read_u16(bytes, body + 12);
      bits = read_u16(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 40) throw DataError("decode_wav: malformed header (short extensible fmt)");
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw DataError("decode_wav: malformed header (data chunk before fmt)");
      if (!((format == kFormatPcm && bits == 16) || (format == kFormatFloat && bits == 32))) {
        throw DataError("decode_wav: unsupported codec (format " + std::to_string(format) +
                        ", " + std::to_string(bits) + " bits); need PCM16 or float32");
      }
      if (channels != 1 && channels != 2) {
        throw DataError("decode_wav: unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) throw DataError("decode_wav: malformed header (zero sample rate)");
      const std::size_t width = bits / 8;
      if (block_align != channels * width) {
        throw DataError("decode_wav: malformed header (inconsistent block_align)");
      }
      if (body + chunk_size > bytes.size() || chunk_size % block_align != 0) {
        throw DataError("decode_wav: truncated data chunk (" + std::to_string(chunk_size) +
                        " bytes declared, " + std::to_string(bytes.size() - body) + " present)");
      }
      PcmSignal signal;
      signal.sample_rate = static_cast<int>(rate);
      const std::size_t n_frames = chunk_size / block_align;
      signal.samples.resize(n_frames);
      for (std::size_t f = 0; f < n_frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t at = body + f * block_align + c * width;
          if (format == kFormatPcm) {
            acc += static_cast<std::int16_t>(read_u16(bytes, at)) / 32768.0;
          } else {
            acc += static_cast<double>(std::bit_cast<float>(read_u32(bytes, at)));
          }
        }
        signal.samples[f] = acc / channels;
      }
      signal.validate();
      return signal;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw DataError(have_fmt ? "decode_wav: truncated data chunk (no data chunk found)"
                           : "decode_wav: malformed header (no fmt chunk)");
}

inline std::vector<std::uint8_t> encode_wav(const PcmSignal& signal,
                                            WavEncoding encoding = WavEncoding::float32) {
  using namespace wav_detail;
  signal.validate();
  const std::uint16_t width = encoding == WavEncoding::pcm16 ? 2 : 4;
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * width);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate) * width);
  put_u16(out, width);
  put_u16(out, static_cast<std::uint16_t>(width * 8));
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : signal.samples) {
    if (encoding == WavEncoding::pcm16) {
      const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
      put_u16(out, static_cast<std::uint16_t>(
                       static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    }
  }
  return out;
}

inline PcmSignal read_wav_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_wav_file: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_wav_file(const std::string& path, const PcmSignal& signal,
                           WavEncoding encoding = WavEncoding::float32) {
  const auto bytes = encode_wav(signal, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_wav_file: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write_wav_file: write failed for " + path);
}

}  // namespace zsl
