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

// Binary model container. All integers little-endian.
//
//   offset  size  field
//   0       8     magic "ZSLMODEL"
//   8       4     u32 format version (currently 1)
//   12      8     u64 metadata length M
//   20      M     metadata, UTF-8 JSON (configs, vocabulary, provenance)
//   20+M    4     u32 array count N
//   ...           N manifest records:
//                   u16 name length L, L bytes name,
//                   u8 element type (1 = float32, 2 = float64),
//                   u8 rank R, R x u64 dimensions
//   ...           N raw row-major arrays in manifest order, IEEE-754 LE
//
// Nothing may follow the last array.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsl/audio_encoder.hpp"
#include "zsl/dsp.hpp"
#include "zsl/error.hpp"
#include "zsl/trainer.hpp"
#include "zsl/word_space.hpp"

namespace zsl {

inline constexpr char kCheckpointMagic[8] = {'Z', 'S', 'L', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
  std::uint32_t version = kCheckpointVersion;
  EncoderConfig encoder;
  DspConfig dsp;
  std::size_t word_dim = 0;
  ParameterStore<float> params;
  std::vector<std::string> tag_vocab;
  std::uint64_t seed = 0;
  std::size_t epochs_completed = 0;
  std::vector<std::string> train_track_ids;
  std::string resolution_policy = "strict";
  std::string effective_config;

  std::size_t joint_dim() const { return encoder.joint_dim; }

  JointModel<float> model() const { return {encoder, word_dim, params}; }

  /// The projection as doubles, for project_tag.
  ProjectionParams projection() const {
    ProjectionParams p;
    p.weight = params.value("proj.weight").cast<double>();
    const auto& b = params.value("proj.bias");
    p.bias.assign(b.storage().begin(), b.storage().end());
    return p;
  }

  ResolutionPolicy policy() const {
    return resolution_policy == "averaged" ? ResolutionPolicy::averaged : ResolutionPolicy::strict;
  }
};

namespace ckpt_detail {

enum ElementType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    if (n > in_.size() - pos_) {
      throw DataError(std::string("load_checkpoint: corrupt or truncated file (reading ") + what +
                      " at byte " + std::to_string(pos_) + ")");
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U uint(const char* what) {
    auto b = bytes(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline nlohmann::json encoder_to_json(const EncoderConfig& e) {
  return {{"patch_frames", e.patch_frames}, {"n_mels", e.n_mels}, {"channels", e.channels},
          {"kernel", e.kernel}, {"pool", e.pool}, {"joint_dim", e.joint_dim},
          {"patch_stride", e.patch_stride}};
}

inline EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig e;
  e.patch_frames = j.at("patch_frames").get<std::size_t>();
  e.n_mels = j.at("n_mels").get<std::size_t>();
  e.channels = j.at("channels").get<std::vector<std::size_t>>();
  e.kernel = j.at("kernel").get<std::size_t>();
  e.pool = j.at("pool").get<std::size_t>();
  e.joint_dim = j.at("joint_dim").get<std::size_t>();
  e.patch_stride = j.at("patch_stride").get<std::size_t>();
  return e;
}

inline nlohmann::json dsp_to_json(const DspConfig& d) {
  return {{"target_sample_rate", d.target_sample_rate}, {"frame_size", d.frame_size},
          {"hop_size", d.hop_size}, {"n_mels", d.n_mels}, {"f_min", d.f_min},
          {"f_max", d.f_max}, {"log_epsilon", d.log_epsilon}};
}

inline DspConfig dsp_from_json(const nlohmann::json& j) {
  DspConfig d;
  d.target_sample_rate = j.at("target_sample_rate").get<int>();
  d.frame_size = j.at("frame_size").get<std::size_t>();
  d.hop_size = j.at("hop_size").get<std::size_t>();
  d.n_mels = j.at("n_mels").get<std::size_t>();
  d.f_min = j.at("f_min").get<double>();
  d.f_max = j.at("f_max").get<double>();
  d.log_epsilon = j.at("log_epsilon").get<double>();
  return d;
}

}  // namespace ckpt_detail

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt) {
  using namespace ckpt_detail;
  nlohmann::json meta = {
      {"encoder", encoder_to_json(ckpt.encoder)},
      {"dsp", dsp_to_json(ckpt.dsp)},
      {"joint_dim", ckpt.joint_dim()},
      {"word_dim", ckpt.word_dim},
      {"tag_vocab", ckpt.tag_vocab},
      {"seed", ckpt.seed},
      {"epochs_completed", ckpt.epochs_completed},
      {"train_track_ids", ckpt.train_track_ids},
      {"resolution_policy", ckpt.resolution_policy},
      {"effective_config", ckpt.effective_config},
  };
  const std::string meta_text = meta.dump();
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.uint<std::uint32_t>(ckpt.version);
  w.uint<std::uint64_t>(meta_text.size());
  w.bytes(meta_text.data(), meta_text.size());
  const auto names = ckpt.params.names();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const auto& a = ckpt.params.value(name);
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint8_t>(kFloat32);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(a.rank()));
    for (auto d : a.shape()) w.uint<std::uint64_t>(d);
  }
  for (const auto& name : names) {
    for (float v : ckpt.params.value(name).storage()) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

/// Parses a checkpoint, validating version, metadata and every array shape
/// against the architecture the metadata declares. Any inconsistency or
/// truncation throws DataError; nothing partial is returned.
inline ModelCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  using namespace ckpt_detail;
  Reader r(bytes);
  auto magic = r.bytes(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw DataError("load_checkpoint: not a model checkpoint (bad magic)");
  }
  ModelCheckpoint ckpt;
  ckpt.version = r.uint<std::uint32_t>("version");
  if (ckpt.version != kCheckpointVersion) {
    throw DataError("load_checkpoint: unsupported format version " + std::to_string(ckpt.version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = r.uint<std::uint64_t>("metadata length");
  if (meta_len > r.remaining()) throw DataError("load_checkpoint: corrupt or truncated file (metadata)");
  const auto meta_bytes = r.bytes(static_cast<std::size_t>(meta_len), "metadata");
  try {
    const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    ckpt.encoder = encoder_from_json(meta.at("encoder"));
    ckpt.dsp = dsp_from_json(meta.at("dsp"));
    ckpt.word_dim = meta.at("word_dim").get<std::size_t>();
    ckpt.tag_vocab = meta.at("tag_vocab").get<std::vector<std::string>>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.epochs_completed = meta.at("epochs_completed").get<std::size_t>();
    ckpt.train_track_ids = meta.at("train_track_ids").get<std::vector<std::string>>();
    ckpt.resolution_policy = meta.at("resolution_policy").get<std::string>();
    ckpt.effective_config = meta.at("effective_config").get<std::string>();
    if (meta.at("joint_dim").get<std::size_t>() != ckpt.encoder.joint_dim) {
      throw DataError("joint_dim disagrees with encoder config");
    }
    ckpt.encoder.validate();
    ckpt.dsp.validate();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("load_checkpoint: corrupt metadata: ") + e.what());
  } catch (const Error& e) {
    throw DataError(std::string("load_checkpoint: corrupt metadata: ") + e.what());
  }

  // Expected layout comes from the declared architecture.
  const auto expected = init_model<float>(ckpt.encoder, ckpt.word_dim, 0).params;
  const auto n = r.uint<std::uint32_t>("array count");
  if (n != expected.size()) {
    throw DataError("load_checkpoint: corrupt manifest (" + std::to_string(n) + " arrays, expected " +
                    std::to_string(expected.size()) + ")");
  }
  struct Record {
    std::string name;
    std::uint8_t type;
    Shape shape;
  };
  std::vector<Record> manifest;
  for (std::uint32_t i = 0; i < n; ++i) {
    Record rec;
    const auto len = r.uint<std::uint16_t>("name length");
    auto name = r.bytes(len, "name");
    rec.name.assign(name.begin(), name.end());
    rec.type = r.uint<std::uint8_t>("element type");
    if (rec.type != kFloat32 && rec.type != kFloat64) {
      throw DataError("load_checkpoint: unknown element type " + std::to_string(rec.type) + " for '" +
                      rec.name + "'");
    }
    const auto rank = r.uint<std::uint8_t>("rank");
    for (std::uint8_t k = 0; k < rank; ++k) rec.shape.push_back(r.uint<std::uint64_t>("dimension"));
    if (!expected.contains(rec.name) || expected.value(rec.name).shape() != rec.shape) {
      throw DataError("load_checkpoint: corrupt manifest (array '" + rec.name + "' with shape " +
                      shape_string(rec.shape) + " does not fit the declared architecture)");
    }
    manifest.push_back(std::move(rec));
  }
  for (const auto& rec : manifest) {
    NdArray<float> a(rec.shape);
    const std::size_t width = rec.type == kFloat32 ? 4 : 8;
    if (a.size() > r.remaining() / width) {
      throw DataError("load_checkpoint: corrupt or truncated file (array '" + rec.name + "')");
    }
    for (auto& v : a.storage()) {
      if (rec.type == kFloat32) {
        v = std::bit_cast<float>(r.uint<std::uint32_t>("array data"));
      } else {
        v = static_cast<float>(std::bit_cast<double>(r.uint<std::uint64_t>("array data")));
      }
    }
    if (ckpt.params.contains(rec.name)) throw DataError("load_checkpoint: duplicate array '" + rec.name + "'");
    ckpt.params.add(rec.name, std::move(a));
  }
  if (r.remaining() != 0) {
    throw DataError("load_checkpoint: corrupt file (" + std::to_string(r.remaining()) +
                    " trailing bytes)");
  }
  return ckpt;
}

inline void save_checkpoint(const ModelCheckpoint& ckpt, std::ostream& out) {
  const auto bytes = serialize_checkpoint(ckpt);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("save_checkpoint: write failed");
}

inline ModelCheckpoint load_checkpoint(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

inline void save_checkpoint_file(const ModelCheckpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  save_checkpoint(ckpt, out);
}

inline ModelCheckpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  return load_checkpoint(in);
}

/// FNV-1a over the serialized bytes, as 16 hex digits.
inline std::string checkpoint_identity(const ModelCheckpoint& ckpt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : serialize_checkpoint(ckpt)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace zsl
