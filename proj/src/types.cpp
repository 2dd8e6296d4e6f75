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

#include "cmirm/types.hpp"

#include <string>

#include "cmirm/error.hpp"

namespace cmirm {

std::string_view to_string(Dimension d) {
  return d == Dimension::kMusicality ? "musicality" : "alignment";
}

std::string_view short_name(Dimension d) {
  return d == Dimension::kMusicality ? "mus" : "ali";
}

Dimension parse_dimension(std::string_view s) {
  if (s == "MUS" || s == "mus" || s == "musicality") return Dimension::kMusicality;
  if (s == "ALI" || s == "ali" || s == "alignment") return Dimension::kAlignment;
  throw DataError("unknown dimension '" + std::string(s) + "'");
}

std::string_view to_string(Label l) {
  switch (l) {
    case Label::kA:
      return "A";
    case Label::kB:
      return "B";
    case Label::kTie:
      return "tie";
  }
  return "?";
}

Label parse_label(std::string_view s) {
  if (s == "A" || s == "a") return Label::kA;
  if (s == "B" || s == "b") return Label::kB;
  if (s == "tie" || s == "TIE" || s == "Tie") return Label::kTie;
  throw DataError("unknown label '" + std::string(s) + "'");
}

std::string_view to_string(Source s) { return s == Source::kPseudo ? "pseudo" : "human"; }

Source parse_source(std::string_view s) {
  if (s == "pseudo") return Source::kPseudo;
  if (s == "human") return Source::kHuman;
  throw DataError("unknown source '" + std::string(s) + "'");
}

}  // namespace cmirm
