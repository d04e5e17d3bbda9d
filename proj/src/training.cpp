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

#include "codeclm/training.hpp"

namespace codeclm {

LossWeights LossWeights::reference_12() {
    return {{5, 2, 1, 0.5, 0.5, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1}};
}

LossWeights LossWeights::for_codebooks(int k) {
    LossWeights ref = reference_12();
    if (k <= (int)ref.alpha.size()) {
        ref.alpha.resize(k);
        return ref;
    }
    // Beyond 12 codebooks, extend with the final (smallest) weight.
    while ((int)ref.alpha.size() < k) ref.alpha.push_back(ref.alpha.back());
    return ref;
}

TrainingExample assemble_example(const std::string& id, const std::string& text,
                                 const std::vector<TokenId>& st_raw,
                                 const AcousticGrid& at_grid,
                                 const TokenVocabulary& vocab,
                                 const BackboneConfig& cfg) {
    TrainingExample ex;
    ex.id = id;
    ex.text = normalize_text(text);
    ex.text_chars = (int)ex.text.size();
    if (ex.text.empty())
        throw std::invalid_argument("assemble_example[" + id + "]: empty text");
    if (ex.text_chars > cfg.text_budget)
        throw std::length_error("assemble_example[" + id + "]: text (" +
                                std::to_string(ex.text_chars) +
                                " chars) exceeds text budget " +
                                std::to_string(cfg.text_budget));

    ex.st = dedup_consecutive(st_raw, vocab);
    ex.st.terminated = true;

    if (at_grid.frames > 0) {
        ex.at_delayed = apply_delay(at_grid, vocab);
        ex.at_rows = ex.at_delayed.rows();
    } else {
        // ST-only example: no acoustic region at all.
        ex.at_delayed.source_frames = 0;
        ex.at_delayed.codebooks = vocab.num_codebooks;
        ex.at_delayed.tokens.clear();
        ex.at_rows = 0;
    }

    int region = ex.st_len() + ex.at_rows;
    if (region > cfg.st_at_budget)
        throw std::length_error("assemble_example[" + id +
                                "]: semantic+acoustic region (" +
                                std::to_string(region) + " rows) exceeds budget " +
                                std::to_string(cfg.st_at_budget));

    ex.st_loss_mask.assign(ex.st_len(), 1);
    ex.at_loss_mask.assign((size_t)ex.at_rows * vocab.num_codebooks, 0);
    for (int r = 0; r < ex.at_rows; ++r)
        for (int k = 0; k < vocab.num_codebooks; ++k)
            if (ex.at_delayed.at(r, k) != vocab.a_fill())
                ex.at_loss_mask[(size_t)r * vocab.num_codebooks + k] = 1;
    // Head 0's first trailing fill (row T) is the acoustic stop signal and
    // stays in the loss; generation ends when head 0 emits A_fill, so the
    // model has to learn that emission. All other fill cells are
    // structurally determined and carry no signal. With one codebook there
    // is no trailing row, so stopping falls back to the length cap.
    if (ex.at_rows > 0 && vocab.num_codebooks >= 2) {
        int stop_row = ex.at_delayed.source_frames;
        ex.at_loss_mask[(size_t)stop_row * vocab.num_codebooks] = 1;
    }
    return ex;
}

TrainingExample drop_conditions(const TrainingExample& ex, Rng& rng, double p) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("drop_conditions: p outside [0, 1]");
    TrainingExample out = ex;
    out.drop_text = rng.bernoulli(p);
    out.drop_st = rng.bernoulli(p);
    if (out.drop_st) std::fill(out.st_loss_mask.begin(), out.st_loss_mask.end(), 0);
    return out;
}

}  // namespace codeclm
