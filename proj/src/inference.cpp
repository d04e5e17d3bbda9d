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

#include "codeclm/inference.hpp"

#include <cmath>
#include <stdexcept>

namespace codeclm {
namespace {

// Decodes UTF-8 into code points with byte offsets, so segments can be
// re-emitted as exact byte ranges of the input.
struct CodePoint {
    char32_t cp;
    size_t byte_begin;
    size_t byte_end;
};

std::vector<CodePoint> decode_utf8(const std::string& s) {
    std::vector<CodePoint> out;
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = s[i];
        size_t len = 1;
        char32_t cp = c;
        if (c >= 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else if (c >= 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if (c >= 0xC0) {
            len = 2;
            cp = c & 0x1F;
        }
        if (i + len > s.size()) len = 1, cp = c;  // tolerate malformed tails
        for (size_t j = 1; j < len; ++j) {
            unsigned char cc = s[i + j];
            if ((cc & 0xC0) != 0x80) {  // malformed: treat lead byte alone
                len = 1;
                cp = c;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back({cp, i, i + len});
        i += len;
    }
    return out;
}

}  // namespace

const std::u32string& default_punctuation() {
    static const std::u32string p = U"，。！？；,.!?;";
    return p;
}

std::vector<std::string> segment_text(const std::string& text, int min_len) {
    return segment_text(text, min_len, default_punctuation());
}

std::vector<std::string> segment_text(const std::string& text, int min_len,
                                      const std::u32string& punctuation) {
    if (min_len < 1) throw std::invalid_argument("segment_text: min_len must be >= 1");
    std::vector<CodePoint> cps = decode_utf8(text);
    std::vector<std::string> segments;
    size_t start = 0;  // code-point index
    for (size_t i = 0; i < cps.size(); ++i) {
        bool is_punct = punctuation.find(cps[i].cp) != std::u32string::npos;
        if (is_punct && (int)(i - start + 1) >= min_len) {
            segments.push_back(
                text.substr(cps[start].byte_begin, cps[i].byte_end - cps[start].byte_begin));
            start = i + 1;
        }
    }
    if (start < cps.size()) {
        std::string tail =
            text.substr(cps[start].byte_begin, text.size() - cps[start].byte_begin);
        if ((int)(cps.size() - start) < min_len && !segments.empty()) {
            segments.back() += tail;  // trailing remainder merges backward
        } else {
            segments.push_back(std::move(tail));
        }
    }
    if (segments.empty() && !text.empty()) segments.push_back(text);
    return segments;
}

AudioClip concat_clips(const std::vector<AudioClip>& clips, int gap_ms) {
    AudioClip out;
    if (clips.empty()) return out;
    out.sample_rate = clips[0].sample_rate;
    for (const auto& c : clips) {
        if (c.sample_rate != out.sample_rate)
            throw std::invalid_argument("concat_clips: mixed sample rates (" +
                                        std::to_string(out.sample_rate) + " vs " +
                                        std::to_string(c.sample_rate) + ")");
    }
    size_t gap = (size_t)std::llround(gap_ms / 1000.0 * out.sample_rate);
    size_t total = 0;
    for (const auto& c : clips) total += c.samples.size();
    total += gap * (clips.size() - 1);
    out.samples.reserve(total);
    for (size_t i = 0; i < clips.size(); ++i) {
        if (i) out.samples.insert(out.samples.end(), gap, 0.0f);
        out.samples.insert(out.samples.end(), clips[i].samples.begin(),
                           clips[i].samples.end());
    }
    return out;
}

}  // namespace codeclm
