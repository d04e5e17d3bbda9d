// Copyright 2025 The codeclm Authors
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

#include "codeclm/text_encoder.hpp"

#include <cctype>

namespace codeclm {

std::string normalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = false;
    for (char c : text) {
        bool ws = std::isspace((unsigned char)c);
        if (ws) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out += c;
        }
    }
    return out;
}

CharVocab CharVocab::from_alphabet(const std::string& alphabet) {
    CharVocab cv;
    for (char c : alphabet) {
        if (cv.chars.find(c) == std::string::npos) cv.chars += c;
    }
    return cv;
}

}  // namespace codeclm
