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

#include "codeclm/vocab.hpp"

namespace codeclm {

// Delay-interleaved view of an acoustic grid: codebook k is shifted k steps
// later (0-indexed), so one decoder step emits one token per codebook while
// codebook k at a frame is generated after codebooks < k of the same frame.
//
// rows() == source_frames + K - 1 (or 0 when both are 0); column k has k
// leading and K-1-k trailing A_fill cells, data everywhere else.
struct DelayedGrid {
    int source_frames = 0;  // T of the underlying grid
    int codebooks = 0;      // K
    std::vector<TokenId> tokens;  // rows x K, row-major

    int rows() const { return codebooks == 0 ? 0 : source_frames + codebooks - 1; }
    TokenId& at(int r, int k) { return tokens[(size_t)r * codebooks + k]; }
    TokenId at(int r, int k) const { return tokens[(size_t)r * codebooks + k]; }

    bool operator==(const DelayedGrid&) const = default;
};

// D[r, k] = A[r - k, k] when 0 <= r - k < T, else A_fill.
DelayedGrid apply_delay(const AcousticGrid& grid, const TokenVocabulary& vocab);

// Exact inverse of apply_delay: A[t, k] = D[t + k, k]. Throws
// std::invalid_argument naming the first cell whose fill structure is wrong.
AcousticGrid remove_delay(const DelayedGrid& delayed, const TokenVocabulary& vocab);

// Row `step` (0-indexed) of the delayed grid: the K tokens the heads must
// predict at that decoder step. Throws on step out of [0, rows()).
std::vector<TokenId> head_targets(const DelayedGrid& delayed, int step);

}  // namespace codeclm
