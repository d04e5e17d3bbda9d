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

// Conditional-only reference decoders for the guidance-degeneracy contract:
// they never compute masked passes or blending, so guided generation with
// every strength at exactly 1 must be token-identical to them.

#include "codeclm/inference.hpp"

namespace codeclm::testref {

inline GenerateStResult<float> conditional_st(const CodecLM<float>& model,
                                              const TextEncoding<float>& text,
                                              const GuidanceConfig& g) {
    const auto& v = model.vocab();
    Rng rng(derive_seed(g.seed, "generate_st"));
    CodecLM<float>::Session cond(model);
    cond.append_text(text);
    GenerateStResult<float> out;
    std::vector<TokenId> raw;
    int cap = std::min(g.max_st_len, model.backbone().config().st_at_budget - 1);
    bool saw_eos = false;
    for (int step = 0; step < cap + 1; ++step) {
        auto lc = model.backbone().project_heads(cond.last_hidden(), StepKind::St);
        std::vector<float> logp(lc.st.size());
        nn::log_softmax<float>(lc.st, logp);
        TokenId id = sample_from_scores<float>(logp, {}, g.temperature, g.top_k, rng);
        if (id == v.s_eos()) {
            saw_eos = true;
            break;
        }
        if ((int)raw.size() >= cap) break;
        raw.push_back(id);
        cond.append_st_tokens(std::span<const TokenId>(&id, 1));
    }
    out.stream = dedup_consecutive(raw, v);
    out.stream.terminated = saw_eos;
    out.truncated = !saw_eos;
    return out;
}

inline GenerateAtResult<float> conditional_at(const CodecLM<float>& model,
                                              const TextEncoding<float>& text,
                                              const SemanticStream& st,
                                              const AcousticGrid& prompt,
                                              const GuidanceConfig& g) {
    const auto& v = model.vocab();
    const int k_num = v.num_codebooks;
    Rng rng(derive_seed(g.seed, "generate_at"));
    CodecLM<float>::Session full(model);
    full.append_text(text);
    std::vector<TokenId> st_ids(st.tokens);
    st_ids.push_back(v.s_eos());
    full.append_st_tokens(st_ids);

    int rows_budget = model.backbone().config().st_at_budget - (int)st_ids.size();
    int frame_cap = std::min(g.max_at_len, rows_budget - (k_num - 1));
    std::vector<std::vector<TokenId>> rows;
    if (prompt.frames > 0) {
        DelayedGrid pd = apply_delay(prompt, v);
        std::vector<std::vector<TokenId>> forced(prompt.frames);
        for (int r = 0; r < prompt.frames; ++r) {
            forced[r].resize(k_num);
            for (int k = 0; k < k_num; ++k) forced[r][k] = pd.at(r, k);
        }
        full.append_at_rows(forced);
        rows = std::move(forced);
    }

    GenerateAtResult<float> out;
    out.prompt_frames = prompt.frames;
    int frames = -1;
    std::vector<uint8_t> allow_data(v.at_size + 1, 1);
    allow_data[v.a_fill()] = 0;
    std::vector<uint8_t> allow_any(v.at_size + 1, 1);
    while (true) {
        int r = (int)rows.size();
        if (frames < 0 && r >= frame_cap) {
            frames = frame_cap;
            out.truncated = true;
        }
        if (frames >= 0 && r >= frames + k_num - 1) break;
        auto lf = model.backbone().project_heads(full.last_hidden(), StepKind::At);
        std::vector<TokenId> row(k_num, v.a_fill());
        for (int k = 0; k < k_num; ++k) {
            int t = r - k;
            bool structural = t < 0 || (frames >= 0 && t >= frames);
            if (structural) continue;
            std::vector<float> logp(lf.at[k].size());
            nn::log_softmax<float>(lf.at[k], logp);
            bool fill_ok = (k == 0 && frames < 0);
            TokenId id = sample_from_scores<float>(logp, fill_ok ? allow_any : allow_data,
                                                   g.temperature, g.top_k, rng);
            if (k == 0 && id == v.a_fill())
                frames = t;
            else
                row[k] = id;
        }
        rows.push_back(row);
        full.append_at_rows({row});
    }
    DelayedGrid dg;
    dg.source_frames = frames;
    dg.codebooks = k_num;
    dg.tokens.assign((size_t)dg.rows() * k_num, v.a_fill());
    for (int r = 0; r < dg.rows() && r < (int)rows.size(); ++r)
        for (int k = 0; k < k_num; ++k) dg.at(r, k) = rows[r][k];
    AcousticGrid all = remove_delay(dg, v);
    AcousticGrid cont(all.frames - prompt.frames, k_num);
    for (int t = prompt.frames; t < all.frames; ++t)
        for (int k = 0; k < k_num; ++k) cont.at(t - prompt.frames, k) = all.at(t, k);
    out.grid = std::move(cont);
    return out;
}

}  // namespace codeclm::testref
