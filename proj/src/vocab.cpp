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

#include "codeclm/vocab.hpp"

namespace codeclm {

SemanticStream dedup_consecutive(const std::vector<TokenId>& raw,
                                 const TokenVocabulary& vocab) {
    SemanticStream out;
    out.tokens.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        TokenId id = raw[i];
        if (!vocab.is_st_data(id)) {
            throw std::invalid_argument(
                "dedup_consecutive: id " + std::to_string(id) +
                " out of semantic data range at position " + std::to_string(i));
        }
        if (out.tokens.empty() || out.tokens.back() != id) out.tokens.push_back(id);
    }
    return out;
}

GridCheck validate_grid(const AcousticGrid& grid, const TokenVocabulary& vocab) {
    GridCheck check;
    if (grid.codebooks != vocab.num_codebooks && grid.frames > 0) {
        check.ok = false;
        check.frame = 0;
        check.codebook = grid.codebooks;
        check.id = -1;
        return check;
    }
    for (int t = 0; t < grid.frames; ++t) {
        for (int k = 0; k < grid.codebooks; ++k) {
            TokenId id = grid.at(t, k);
            if (!vocab.is_at_data(id)) {
                check.ok = false;
                check.frame = t;
                check.codebook = k;
                check.id = id;
                return check;
            }
        }
    }
    return check;
}

double derive_frame_rate(double sample_rate, int downsample) {
    if (downsample <= 0)
        throw std::invalid_argument("derive_frame_rate: downsample must be > 0");
    return sample_rate / downsample;
}

}  // namespace codeclm
