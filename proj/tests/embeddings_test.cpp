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

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cmirm/error.hpp"

namespace cmirm {
namespace {

std::string unhex(const std::string& hex) {
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  return out;
}

TEST(SynthEncodeTest, MatchesIndependentGolden) {
  std::ifstream in(std::string(CMIRM_GOLDEN_DIR) + "/synth_encode.txt");
  ASSERT_TRUE(in) << "missing golden file";
  std::string line;
  std::size_t checked = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    int kind;
    std::uint64_t seed;
    std::size_t dim, frame, d;
    double seconds;
    std::string content_hex, bits_hex;
    ss >> kind >> seed >> dim >> seconds >> content_hex >> frame >> d >> bits_hex;
    const auto seq = synth_encode(unhex(content_hex), static_cast<ContentKind>(kind), dim, seed,
                                  seconds);
    ASSERT_LT(frame, seq.num_frames());
    const float expected = std::bit_cast<float>(static_cast<std::uint32_t>(std::stoul(bits_hex, nullptr, 16)));
    EXPECT_EQ(seq.frames.at(frame, d), static_cast<double>(expected)) << line;
    ++checked;
  }
  EXPECT_GT(checked, 50u);
}

TEST(SynthEncodeTest, FrameCounts) {
  EXPECT_EQ(synth_encode(std::string(30, 'a'), ContentKind::kText, 4, 0).num_frames(), 1u);
  EXPECT_EQ(synth_encode(std::string(31, 'a'), ContentKind::kText, 4, 0).num_frames(), 2u);
  EXPECT_EQ(synth_encode("clip", ContentKind::kAudio, 4, 0, 10.0).num_frames(), 10u);
  EXPECT_EQ(synth_encode("clip", ContentKind::kAudio, 4, 0, 10.5).num_frames(), 11u);
  EXPECT_EQ(synth_encode("clip", ContentKind::kAudio, 4, 0, 0.2).num_frames(), 1u);
}

TEST(SynthEncodeTest, DependsOnKindSeedAndContent) {
  const auto base = synth_encode("hello", ContentKind::kText, 8, 0).frames;
  EXPECT_EQ(synth_encode("hello", ContentKind::kText, 8, 0).frames, base);
  EXPECT_NE(synth_encode("hello", ContentKind::kLyrics, 8, 0).frames, base);
  EXPECT_NE(synth_encode("hello", ContentKind::kText, 8, 1).frames, base);
  EXPECT_NE(synth_encode("hellp", ContentKind::kText, 8, 0).frames, base);
}

TEST(SynthEncodeTest, ValuesInRangeAndFloatRepresentable) {
  const auto seq = synth_encode("range check", ContentKind::kAudio, 64, 9, 30.0);
  for (double v : seq.frames.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(SynthEncodeTest, RejectsEmptyContent) {
  EXPECT_THROW(synth_encode("", ContentKind::kText, 8, 0), ContractError);
}

EmbeddingStore sample_store() {
  EmbeddingStore store(6);
  store.add(synth_encode("clip_b", ContentKind::kAudio, 6, 1, 12.0));
  store.add(synth_encode("clip_a", ContentKind::kAudio, 6, 1, 3.0));
  store.add(synth_encode("lyrics line", ContentKind::kLyrics, 6, 1));
  return store;
}

TEST(EmbeddingStoreTest, RoundTripIsBitExact) {
  const EmbeddingStore store = sample_store();
  const auto bytes = encode_store(store);
  const EmbeddingStore back = decode_store(bytes);
  ASSERT_EQ(back.size(), store.size());
  for (const auto& [id, seq] : store.entries()) {
    const auto& other = back.at(id);
    EXPECT_EQ(other.frames, seq.frames);
    EXPECT_EQ(other.frame_span_seconds, seq.frame_span_seconds);
  }
  EXPECT_EQ(encode_store(back), bytes);
}

TEST(EmbeddingStoreTest, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cmirm_store_test.bin";
  write_store(path, sample_store());
  EXPECT_EQ(encode_store(load_store(path)), encode_store(sample_store()));
  std::filesystem::remove(path);
}

TEST(EmbeddingStoreTest, HeaderLayout) {
  const auto bytes = encode_store(sample_store());
  ASSERT_GE(bytes.size(), 24u);
  EXPECT_EQ(std::memcmp(bytes.data(), "CMIEMB\0\0", 8), 0);
  EXPECT_EQ(bytes[8], 1);   // version
  EXPECT_EQ(bytes[12], 6);  // dim
  EXPECT_EQ(bytes[16], 3);  // count
}

TEST(EmbeddingStoreTest, DetectsDamage) {
  auto bytes = encode_store(sample_store());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_store(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[8] = 2;
  EXPECT_THROW(decode_store(bad_version), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_store(truncated), CorruptionError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_store(trailing), CorruptionError);
  auto nan_value = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan_value.data() + nan_value.size() - 4, &nan, 4);
  EXPECT_THROW(decode_store(nan_value), CorruptionError);
}

TEST(EmbeddingStoreTest, RejectsDuplicatesAndDimMismatch) {
  EmbeddingStore store(4);
  store.add(synth_encode("a", ContentKind::kText, 4, 0));
  EXPECT_THROW(store.add(synth_encode("a", ContentKind::kText, 4, 0)), DataError);
  EXPECT_THROW(store.add(synth_encode("b", ContentKind::kText, 5, 0)), ShapeError);
  try {
    store.at("missing_id");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing_id"), std::string::npos);
  }
}

EmbeddingSequence clip(double seconds) {
  return synth_encode("clip", ContentKind::kAudio, 4, 0, seconds);
}

TEST(InferenceViewTest, ShortClipsCoincide) {
  const auto seq = clip(7.0);
  for (auto mode : {DurationMode::kFirst10, DurationMode::kMean10, DurationMode::kFirst120}) {
    const auto view = select_inference_view(seq, mode);
    ASSERT_EQ(view.parts.size(), 1u);
    EXPECT_EQ(view.joined().frames, seq.frames);
  }
}

TEST(InferenceViewTest, ChunkLayouts) {
  const auto seq = clip(200.0);
  EXPECT_EQ(select_inference_view(seq, DurationMode::kFirst10).joined().num_frames(), 10u);
  const auto mean10 = select_inference_view(seq, DurationMode::kMean10);
  EXPECT_EQ(mean10.parts.size(), 20u);
  const auto first120 = select_inference_view(seq, DurationMode::kFirst120);
  ASSERT_EQ(first120.parts.size(), 4u);
  for (const auto& p : first120.parts) EXPECT_EQ(p.num_frames(), 30u);
  const auto joined = first120.joined();
  EXPECT_EQ(joined.num_frames(), 120u);
  for (std::size_t f = 0; f < 120; ++f)
    for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(joined.frames.at(f, d), seq.frames.at(f, d));
}

TEST(InferenceViewTest, TrailingChunkIsKept) {
  const auto view = select_inference_view(clip(25.0), DurationMode::kMean10);
  ASSERT_EQ(view.parts.size(), 3u);
  EXPECT_EQ(view.parts[2].num_frames(), 5u);
}

TEST(InferenceViewTest, FramesCovering) {
  EXPECT_EQ(frames_covering(10.0, 0.1), 100u);
  EXPECT_EQ(frames_covering(10.01, 0.1), 101u);
  EXPECT_EQ(frames_covering(0.0, 1.0), 1u);
  EXPECT_THROW(frames_covering(1.0, 0.0), ContractError);
}

TEST(EnumParsingTest, RoundTrips) {
  for (auto mode : {DurationMode::kFirst10, DurationMode::kMean10, DurationMode::kFirst120})
    EXPECT_EQ(parse_duration_mode(to_string(mode)), mode);
  for (auto kind : {ContentKind::kText, ContentKind::kLyrics, ContentKind::kAudio})
    EXPECT_EQ(parse_content_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_duration_mode("first30"), ContractError);
}

}  // namespace
}  // namespace cmirm
