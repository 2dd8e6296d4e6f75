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

#ifndef CMIRM_TYPES_HPP_
#define CMIRM_TYPES_HPP_

#include <cstddef>
#include <string_view>

namespace cmirm {

// The two reward heads. Values index the model's score vector.
enum class Dimension : std::size_t { kAlignment = 0, kMusicality = 1 };

// Pairwise preference outcome.
enum class Label { kA, kB, kTie };

enum class Source { kPseudo, kHuman };

std::string_view to_string(Dimension d);
std::string_view short_name(Dimension d);  // "mus" / "ali"
Dimension parse_dimension(std::string_view s);

std::string_view to_string(Label l);
Label parse_label(std::string_view s);

std::string_view to_string(Source s);
Source parse_source(std::string_view s);

inline constexpr Dimension kDimensions[] = {Dimension::kMusicality, Dimension::kAlignment};

inline std::size_t head_index(Dimension d) { return static_cast<std::size_t>(d); }

}  // namespace cmirm

#endif  // CMIRM_TYPES_HPP_
