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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace codeclm {

using TokenId = int32_t;

// Token id spaces.
//
// Stream-level ids: semantic data tokens live in [0, st_size) with S_eos at
// the top of the space (== st_size); each acoustic codebook's data tokens
// live in [0, at_size) with the shared A_fill at the top (== at_size).
//
// The language model uses one combined embedding table with disjoint ranges
// (layout below, recorded verbatim in checkpoints):
//   [0, st_size]                                 semantic data + S_eos
//   [st_size+1 + k*(at_size+1), ... + at_size]   codebook k data + A_fill row
//   pad_row                                      PAD
//   pad_row + 1                                  NULL_COND
struct TokenVocabulary {
    int st_size = 500;
    int at_size = 64;
    int num_codebooks = 12;

    TokenVocabulary() = default;
    TokenVocabulary(int st, int at, int k)
        : st_size(st), at_size(at), num_codebooks(k) {
        validate();
    }

    void validate() const {
        if (num_codebooks < 1) throw std::invalid_argument("vocab: num_codebooks must be >= 1");
        if (st_size < 2) throw std::invalid_argument("vocab: st_size must be >= 2");
        if (at_size < 2) throw std::invalid_argument("vocab: at_size_per_codebook must be >= 2");
    }

    TokenId s_eos() const { return st_size; }
    TokenId a_fill() const { return at_size; }

    bool is_st_data(TokenId id) const { return id >= 0 && id < st_size; }
    bool is_at_data(TokenId id) const { return id >= 0 && id < at_size; }

    // Combined-table rows.
    int st_row(TokenId id) const { return id; }  // valid for data ids and s_eos
    int at_row(int k, TokenId id) const {
        return st_size + 1 + k * (at_size + 1) + id;  // id may be a_fill
    }
    int pad_row() const { return st_size + 1 + num_codebooks * (at_size + 1); }
    int null_cond_row() const { return pad_row() + 1; }
    int combined_size() const { return pad_row() + 2; }

    bool operator==(const TokenVocabulary&) const = default;
};

// Deduplicated semantic token sequence. `tokens` holds data ids only; the
// trailing S_eos is represented by the `terminated` flag so the id can never
// appear mid-sequence.
struct SemanticStream {
    std::vector<TokenId> tokens;
    bool terminated = false;

    size_t size() const { return tokens.size(); }
};

// T x K grid of acoustic data tokens, time-major.
struct AcousticGrid {
    int frames = 0;      // T
    int codebooks = 0;   // K
    std::vector<TokenId> tokens;  // frames*codebooks, row-major

    AcousticGrid() = default;
    AcousticGrid(int t, int k) : frames(t), codebooks(k), tokens((size_t)t * k, 0) {}

    TokenId& at(int t, int k) { return tokens[(size_t)t * codebooks + k]; }
    TokenId at(int t, int k) const { return tokens[(size_t)t * codebooks + k]; }

    bool operator==(const AcousticGrid&) const = default;
};

// validate_grid result: pass, or the first violating cell.
struct GridCheck {
    bool ok = true;
    int frame = -1;
    int codebook = -1;
    TokenId id = -1;

    explicit operator bool() const { return ok; }
};

// Collapses runs of consecutive equal ids, keeping first occurrences.
// Throws std::invalid_argument naming the first out-of-range position.
SemanticStream dedup_consecutive(const std::vector<TokenId>& raw,
                                 const TokenVocabulary& vocab);

// Checks every cell is a data token in range and the shape is consistent.
GridCheck validate_grid(const AcousticGrid& grid, const TokenVocabulary& vocab);

// sample_rate / downsample, in Hz. Throws on downsample == 0.
double derive_frame_rate(double sample_rate, int downsample);

}  // namespace codeclm
