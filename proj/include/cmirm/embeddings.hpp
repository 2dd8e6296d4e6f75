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

#ifndef CMIRM_EMBEDDINGS_HPP_
#define CMIRM_EMBEDDINGS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmirm/tensor.hpp"

namespace cmirm {

// Frame-wise output of a frozen encoder for one piece of content.
struct EmbeddingSequence {
  std::string id;
  Tensor frames;  // [n_frames, dim]
  double frame_span_seconds = 1.0;

  std::size_t num_frames() const { return frames.empty() ? 0 : frames.rows(); }
  std::size_t dim() const { return frames.empty() ? 0 : frames.cols(); }
  double duration_seconds() const { return num_frames() * frame_span_seconds; }
};

enum class ContentKind : std::uint8_t { kText = 1, kLyrics = 2, kAudio = 3 };

std::string_view to_string(ContentKind kind);
ContentKind parse_content_kind(std::string_view s);

// Deterministic stand-in for the frozen encoders. Text and lyrics produce one
// frame per 30 bytes (rounded up); audio produces one frame per nominal second
// of `audio_seconds`. Every value lies in [-1, 1] and is exactly representable
// as a 32-bit float, so synthetic sequences survive the store round trip.
// Empty content raises ContractError.
EmbeddingSequence synth_encode(std::string_view content, ContentKind kind,
                               std::size_t dim, std::uint64_t seed,
                               double audio_seconds = 10.0);

// Immutable-after-load collection of sequences sharing one dimension.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 64);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Throws ShapeError on dim mismatch and DataError on a duplicate id.
  void add(EmbeddingSequence seq);
  const EmbeddingSequence* find(std::string_view id) const;
  // Throws DataError naming the id when absent.
  const EmbeddingSequence& at(std::string_view id) const;

  const std::map<std::string, EmbeddingSequence, std::less<>>& entries() const {
    return entries_;
  }

 private:
  std::size_t dim_;
  std::map<std::string, EmbeddingSequence, std::less<>> entries_;
};

// Little-endian binary format: "CMIEMB\0\0", u32 version (1), u32 dim,
// u64 count, then per record u16 id length, id bytes, f32 frame span,
// u32 n_frames and n_frames * dim f32 values. Records are written in id order.
std::vector<std::uint8_t> encode_store(const EmbeddingStore& store);
EmbeddingStore decode_store(std::span<const std::uint8_t> bytes);

void write_store(const std::filesystem::path& path, const EmbeddingStore& store);
// FormatError on bad magic or version; CorruptionError on truncated or
// inconsistent payloads.
EmbeddingStore load_store(const std::filesystem::path& path);

enum class DurationMode { kFirst10, kMean10, kFirst120 };

std::string_view to_string(DurationMode mode);
DurationMode parse_duration_mode(std::string_view s);

// Duration strategy view of one sequence. first10 holds one part; mean10
// holds the ordered non-overlapping 10 s chunks (a short trailing chunk is
// kept); first120 holds up to four consecutive 30 s segments.
struct InferenceView {
  DurationMode mode = DurationMode::kFirst120;
  std::vector<EmbeddingSequence> parts;

  // Parts concatenated in order.
  EmbeddingSequence joined() const;
};

InferenceView select_inference_view(const EmbeddingSequence& seq, DurationMode mode);

// Number of frames needed to cover `seconds` at `frame_span` seconds/frame.
std::size_t frames_covering(double seconds, double frame_span);

}  // namespace cmirm

#endif  // CMIRM_EMBEDDINGS_HPP_
