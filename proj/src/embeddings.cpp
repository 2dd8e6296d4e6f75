// Copyright 2026 The cmirm Authors.
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

#include "cmirm/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "cmirm/error.hpp"
#include "cmirm/hash.hpp"

namespace cmirm {

namespace {

constexpr std::string_view kStoreMagic{"CMIEMB\0\0", 8};
constexpr std::uint32_t kStoreVersion = 1;
constexpr std::size_t kTextBytesPerFrame = 30;
constexpr std::uint64_t kDimStride = 0xD1B54A32D192ED03ULL;

}  // namespace

std::string_view to_string(ContentKind kind) {
  switch (kind) {
    case ContentKind::kText:
      return "text";
    case ContentKind::kLyrics:
      return "lyrics";
    case ContentKind::kAudio:
      return "audio";
  }
  return "unknown";
}

ContentKind parse_content_kind(std::string_view s) {
  if (s == "text") return ContentKind::kText;
  if (s == "lyrics") return ContentKind::kLyrics;
  if (s == "audio") return ContentKind::kAudio;
  throw DataError("unknown content kind '" + std::string(s) + "'");
}

std::size_t frames_covering(double seconds, double frame_span) {
  if (!(frame_span > 0.0) || !std::isfinite(frame_span)) {
    throw ContractError("frame span must be positive");
  }
  // The epsilon keeps exact multiples (10 s at 0.1 s/frame) from rounding up.
  const double n = std::ceil(seconds / frame_span - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, n));
}

EmbeddingSequence synth_encode(std::string_view content, ContentKind kind,
                               std::size_t dim, std::uint64_t seed,
                               double audio_seconds) {
  if (dim == 0) throw ContractError("synth_encode: dim must be positive");
  if (content.empty()) {
    throw ContractError("synth_encode: empty content (model absent modalities upstream)");
  }
  std::size_t n_frames = 0;
  if (kind == ContentKind::kAudio) {
    if (!(audio_seconds > 0.0)) throw ContractError("synth_encode: audio duration must be positive");
    n_frames = frames_covering(audio_seconds, 1.0);
  } else {
    n_frames = (content.size() + kTextBytesPerFrame - 1) / kTextBytesPerFrame;
  }

  const std::uint64_t kind_key =
      splitmix64(seed ^ (static_cast<std::uint64_t>(kind) * kGoldenGamma));
  const std::uint64_t base = splitmix64(fnv1a64(content) ^ kind_key);

  Tensor frames({n_frames, dim});
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::uint64_t frame_hash = splitmix64(base + f * kGoldenGamma);
    for (std::size_t d = 0; d < dim; ++d) {
      const std::uint64_t bits = splitmix64(frame_hash ^ ((d + 1) * kDimStride));
      const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53;
      const float v = static_cast<float>(std::clamp(2.0 * unit - 1.0, -1.0, 1.0));
      frames.at(f, d) = static_cast<double>(v);
    }
  }
  EmbeddingSequence seq;
  seq.id = std::string(content);
  seq.frames = std::move(frames);
  seq.frame_span_seconds = 1.0;
  return seq;
}

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ContractError("embedding store dim must be positive");
}

void EmbeddingStore::add(EmbeddingSequence seq) {
  if (seq.num_frames() == 0) throw ContractError("sequence '" + seq.id + "' has no frames");
  if (seq.dim() != dim_) {
    throw ShapeError("sequence '" + seq.id + "' has dim " + std::to_string(seq.dim()) +
                     ", store dim is " + std::to_string(dim_));
  }
  if (!(seq.frame_span_seconds > 0.0)) {
    throw ContractError("sequence '" + seq.id + "' has non-positive frame span");
  }
  require_finite(seq.frames, "embedding frames");
  if (entries_.contains(seq.id)) throw DataError("duplicate embedding id '" + seq.id + "'");
  std::string key = seq.id;
  entries_.emplace(std::move(key), std::move(seq));
}

const EmbeddingSequence* EmbeddingStore::find(std::string_view id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

const EmbeddingSequence& EmbeddingStore::at(std::string_view id) const {
  if (const auto* seq = find(id)) return *seq;
  throw DataError("unknown embedding id '" + std::string(id) + "'");
}

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store) {
  detail::ByteWriter w;
  w.put_bytes(kStoreMagic);
  w.put_uint<std::uint32_t>(kStoreVersion);
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(store.dim()));
  w.put_uint<std::uint64_t>(store.size());
  for (const auto& [id, seq] : store.entries()) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw DataError("embedding id too long: " + id.substr(0, 32) + "...");
    }
    w.put_uint<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    w.put_bytes(id);
    w.put_f32(static_cast<float>(seq.frame_span_seconds));
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(seq.num_frames()));
    for (double v : seq.frames.data()) w.put_f32(static_cast<float>(v));
  }
  return std::move(w.bytes());
}

EmbeddingStore decode_store(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kStoreMagic.size() ||
      !std::equal(kStoreMagic.begin(), kStoreMagic.end(), bytes.begin())) {
    throw FormatError("not an embedding store (bad magic)");
  }
  detail::ByteReader r(bytes.subspan(kStoreMagic.size()));
  const auto version = r.get_uint<std::uint32_t>();
  if (version != kStoreVersion) {
    throw FormatError("unsupported embedding store version " + std::to_string(version));
  }
  const auto dim = r.get_uint<std::uint32_t>();
  const auto count = r.get_uint<std::uint64_t>();
  if (dim == 0) throw CorruptionError("embedding store header has dim 0");

  EmbeddingStore store(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id_len = r.get_uint<std::uint16_t>();
    EmbeddingSequence seq;
    seq.id = r.get_string(id_len);
    seq.frame_span_seconds = r.get_f32();
    const auto n_frames = r.get_uint<std::uint32_t>();
    if (n_frames == 0) throw CorruptionError("record '" + seq.id + "' has zero frames");
    if (!(seq.frame_span_seconds > 0.0)) {
      throw CorruptionError("record '" + seq.id + "' has non-positive frame span");
    }
    if (r.remaining() / 4 / dim < n_frames) {
      throw CorruptionError("record '" + seq.id + "' declares " + std::to_string(n_frames) +
                            " frames of dim " + std::to_string(dim) +
                            " but the file is too short");
    }
    Tensor frames({n_frames, dim});
    for (auto& v : frames.data()) v = r.get_f32();
    if (!frames.all_finite()) throw CorruptionError("record '" + seq.id + "' has non-finite values");
    seq.frames = std::move(frames);
    if (store.find(seq.id)) throw CorruptionError("duplicate record id '" + seq.id + "'");
    store.add(std::move(seq));
  }
  if (r.remaining() != 0) {
    throw CorruptionError(std::to_string(r.remaining()) +
                          " trailing bytes after last record (dim mismatch?)");
  }
  return store;
}

void write_store(const std::filesystem::path& path, const EmbeddingStore& store) {
  detail::write_file(path, encode_store(store));
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  return decode_store(detail::read_file(path));
}

std::string_view to_string(DurationMode mode) {
  switch (mode) {
    case DurationMode::kFirst10:
      return "first10";
    case DurationMode::kMean10:
      return "mean10";
    case DurationMode::kFirst120:
      return "first120";
  }
  return "unknown";
}

DurationMode parse_duration_mode(std::string_view s) {
  if (s == "first10") return DurationMode::kFirst10;
  if (s == "mean10") return DurationMode::kMean10;
  if (s == "first120") return DurationMode::kFirst120;
  throw ContractError("unknown duration mode '" + std::string(s) + "'");
}

namespace {

EmbeddingSequence frame_range(const EmbeddingSequence& seq, std::size_t start,
                              std::size_t count) {
  const std::size_t dim = seq.dim();
  EmbeddingSequence part;
  part.id = seq.id;
  part.frame_span_seconds = seq.frame_span_seconds;
  std::vector<double> data(seq.frames.data().begin() + start * dim,
                           seq.frames.data().begin() + (start + count) * dim);
  part.frames = Tensor({count, dim}, std::move(data));
  return part;
}

// Consecutive chunks of `chunk` frames over the first `limit` frames.
std::vector<EmbeddingSequence> chunked(const EmbeddingSequence& seq, std::size_t chunk,
                                       std::size_t limit, std::size_t max_chunks) {
  std::vector<EmbeddingSequence> parts;
  const std::size_t n = std::min(seq.num_frames(), limit);
  for (std::size_t start = 0; start < n && parts.size() < max_chunks; start += chunk)
    parts.push_back(frame_range(seq, start, std::min(chunk, n - start)));
  return parts;
}

}  // namespace

InferenceView select_inference_view(const EmbeddingSequence& seq, DurationMode mode) {
  if (!(seq.frame_span_seconds > 0.0)) {
    throw ContractError("select_inference_view: frame span must be positive");
  }
  if (seq.num_frames() == 0) throw ContractError("select_inference_view: empty sequence");
  const double span = seq.frame_span_seconds;
  const auto none = std::numeric_limits<std::size_t>::max();
  InferenceView view;
  view.mode = mode;
  switch (mode) {
    case DurationMode::kFirst10:
      view.parts = chunked(seq, frames_covering(10.0, span), frames_covering(10.0, span), 1);
      break;
    case DurationMode::kMean10:
      view.parts = chunked(seq, frames_covering(10.0, span), none, none);
      break;
    case DurationMode::kFirst120:
      view.parts = chunked(seq, frames_covering(30.0, span), frames_covering(120.0, span), 4);
      break;
  }
  return view;
}

EmbeddingSequence InferenceView::joined() const {
  if (parts.empty()) throw ContractError("empty inference view");
  if (parts.size() == 1) return parts.front();
  const std::size_t dim = parts.front().dim();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    data.insert(data.end(), p.frames.data().begin(), p.frames.data().end());
    rows += p.num_frames();
  }
  EmbeddingSequence out;
  out.id = parts.front().id;
  out.frame_span_seconds = parts.front().frame_span_seconds;
  out.frames = Tensor({rows, dim}, std::move(data));
  return out;
}

}  // namespace cmirm
