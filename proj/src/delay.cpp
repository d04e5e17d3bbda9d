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

#include "codeclm/delay.hpp"

#include <stdexcept>
#include <string>

namespace codeclm {

DelayedGrid apply_delay(const AcousticGrid& grid, const TokenVocabulary& vocab) {
    GridCheck check = validate_grid(grid, vocab);
    if (!check) {
        throw std::invalid_argument(
            "apply_delay: invalid grid at frame " + std::to_string(check.frame) +
            ", codebook " + std::to_string(check.codebook));
    }
    const int k_num = vocab.num_codebooks;
    const int t_num = grid.frames;
    DelayedGrid out;
    out.source_frames = t_num;
    out.codebooks = k_num;
    out.tokens.assign((size_t)out.rows() * k_num, vocab.a_fill());
    for (int r = 0; r < out.rows(); ++r) {
        for (int k = 0; k < k_num; ++k) {
            int t = r - k;
            if (t >= 0 && t < t_num) out.at(r, k) = grid.at(t, k);
        }
    }
    return out;
}

AcousticGrid remove_delay(const DelayedGrid& delayed, const TokenVocabulary& vocab) {
    const int k_num = delayed.codebooks;
    const int t_num = delayed.source_frames;
    if (k_num != vocab.num_codebooks)
        throw std::invalid_argument("remove_delay: codebook count mismatch");
    if ((int)delayed.tokens.size() != delayed.rows() * k_num)
        throw std::invalid_argument("remove_delay: token storage does not match shape");

    AcousticGrid out(t_num, k_num);
    for (int r = 0; r < delayed.rows(); ++r) {
        for (int k = 0; k < k_num; ++k) {
            int t = r - k;
            TokenId id = delayed.at(r, k);
            bool structural_fill = t < 0 || t >= t_num;
            if (structural_fill) {
                if (id != vocab.a_fill()) {
                    throw std::invalid_argument(
                        "remove_delay: expected fill at row " + std::to_string(r) +
                        ", codebook " + std::to_string(k) + ", found id " +
                        std::to_string(id));
                }
            } else {
                if (!vocab.is_at_data(id)) {
                    throw std::invalid_argument(
                        "remove_delay: non-data token at row " + std::to_string(r) +
                        ", codebook " + std::to_string(k) + " (id " +
                        std::to_string(id) + ")");
                }
                out.at(t, k) = id;
            }
        }
    }
    return out;
}

std::vector<TokenId> head_targets(const DelayedGrid& delayed, int step) {
    if (step < 0 || step >= delayed.rows()) {
        throw std::out_of_range("head_targets: step " + std::to_string(step) +
                                " outside [0, " + std::to_string(delayed.rows()) + ")");
    }
    std::vector<TokenId> row(delayed.codebooks);
    for (int k = 0; k < delayed.codebooks; ++k) row[k] = delayed.at(step, k);
    return row;
}

}  // namespace codeclm
