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

#include <string>
#include <vector>

#include "codeclm/corpus.hpp"
#include "codeclm/model.hpp"
#include "codeclm/training.hpp"

namespace codeclm::testutil {

struct MicroSetup {
    TokenVocabulary vocab{11, 7, 3};
    BackboneConfig backbone;
    TextEncoderConfig encoder;
    CharVocab chars = CharVocab::from_alphabet("abcdef ~");

    MicroSetup() {
        backbone.layers = 2;
        backbone.width = 16;
        backbone.ffn_width = 32;
        backbone.heads = 2;
        backbone.text_budget = 6;
        backbone.st_at_budget = 18;
        encoder.width = 16;
        encoder.layers = 2;
        encoder.heads = 2;
        encoder.ffn_width = 32;
        encoder.budget = 6;
        encoder.lora = true;
        encoder.lora_rank = 2;
        encoder.lora_alpha = 4.0;
    }
};

template <typename S>
void init_micro(CodecLM<S>& model, const MicroSetup& s, uint64_t seed) {
    model.init(s.vocab, s.backbone, s.encoder, s.chars);
    model.random_init(seed);
}

// A couple of hand-sized examples exercising ST-only and ST+AT layouts.
inline std::vector<TrainingExample> micro_examples(const MicroSetup& s) {
    std::vector<TrainingExample> out;
    AcousticGrid g1(3, 3);
    for (int t = 0; t < 3; ++t)
        for (int k = 0; k < 3; ++k) g1.at(t, k) = (t * 3 + k) % 7;
    out.push_back(assemble_example("m0", "abca", {1, 1, 4, 2}, g1, s.vocab, s.backbone));
    AcousticGrid g2(2, 3);
    for (int t = 0; t < 2; ++t)
        for (int k = 0; k < 3; ++k) g2.at(t, k) = (5 + t + k) % 7;
    out.push_back(assemble_example("m1", "fed", {9, 3, 3}, g2, s.vocab, s.backbone));
    out.push_back(assemble_example("m2", "ca", {2, 7, 7, 7}, AcousticGrid(0, 3),
                                   s.vocab, s.backbone));
    return out;
}

// Forward-only loss of a batch (used as the functional for finite
// differences).
template <typename S>
double batch_loss(CodecLM<S>& model, const std::vector<TrainingExample>& exs,
                  const LossWeights& weights) {
    std::vector<typename CodecLM<S>::BatchItem> items;
    std::vector<const TrainingExample*> ptrs;
    for (const auto& ex : exs) {
        items.push_back({&ex, ex.drop_text, ex.drop_st});
        ptrs.push_back(&ex);
    }
    typename CodecLM<S>::BatchState bs;
    model.run_batch(items, bs);
    BatchLogits<S> bl;
    bl.st = &bs.st_logits;
    bl.at = &bs.at_logits;
    bl.st_off = bs.st_off;
    bl.at_off = bs.at_off;
    return compute_loss<S>(bl, ptrs, weights, model.vocab()).total;
}

// Forward+backward; gradients land in model params.
template <typename S>
LossBreakdown batch_loss_with_grads(CodecLM<S>& model,
                                    const std::vector<TrainingExample>& exs,
                                    const LossWeights& weights) {
    std::vector<typename CodecLM<S>::BatchItem> items;
    std::vector<const TrainingExample*> ptrs;
    for (const auto& ex : exs) {
        items.push_back({&ex, ex.drop_text, ex.drop_st});
        ptrs.push_back(&ex);
    }
    model.zero_grad();
    typename CodecLM<S>::BatchState bs;
    model.run_batch(items, bs);
    BatchLogits<S> bl;
    bl.st = &bs.st_logits;
    bl.at = &bs.at_logits;
    bl.st_off = bs.st_off;
    bl.at_off = bs.at_off;
    Mat<S> d_st;
    std::vector<Mat<S>> d_at;
    LossBreakdown lb = compute_loss<S>(bl, ptrs, weights, model.vocab(), &d_st, &d_at);
    model.backward_batch(bs, d_st, d_at);
    return lb;
}

}  // namespace codeclm::testutil
