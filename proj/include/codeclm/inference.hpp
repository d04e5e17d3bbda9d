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

#include <cmath>
#include <string>
#include <vector>

#include "codeclm/model.hpp"

namespace codeclm {

// Guidance strengths and sampling parameters for two-stage generation.
// gamma guides semantic prediction against a null text condition; alpha and
// beta guide acoustic prediction against null text and null semantics.
struct GuidanceConfig {
    double gamma = 1.5;
    double alpha = 1.3;
    double beta = 1.5;
    double temperature = 1.0;
    int top_k = 50;
    int max_st_len = 256;
    int max_at_len = 448;
    uint64_t seed = 0;

    void validate() const {
        if (!std::isfinite(gamma) || !std::isfinite(alpha) || !std::isfinite(beta))
            throw std::invalid_argument("guidance: strengths must be finite");
        if (!(temperature > 0))
            throw std::invalid_argument("guidance: temperature must be > 0");
        if (top_k < 1) throw std::invalid_argument("guidance: top_k must be >= 1");
    }
};

// Stage-1 blend: gamma * cond + (1 - gamma) * uncond, elementwise over
// log-softmax-normalized scores.
template <typename S>
std::vector<S> blend_stage1(std::span<const S> cond_logp,
                            std::span<const S> uncond_logp, double gamma) {
    if (cond_logp.size() != uncond_logp.size())
        throw std::invalid_argument("blend_stage1: length mismatch");
    std::vector<S> out(cond_logp.size());
    S g = (S)gamma, og = (S)(1.0 - gamma);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = g * cond_logp[i] + og * uncond_logp[i];
    return out;
}

// Stage-2 blend: beta * (alpha*cond + (1-alpha)*text_masked) +
// (1-beta) * sem_masked. Effective coefficients (beta*alpha,
// beta*(1-alpha), 1-beta) always sum to 1.
template <typename S>
std::vector<S> blend_stage2(std::span<const S> cond, std::span<const S> text_masked,
                            std::span<const S> sem_masked, double alpha,
                            double beta) {
    if (cond.size() != text_masked.size() || cond.size() != sem_masked.size())
        throw std::invalid_argument("blend_stage2: length mismatch");
    std::vector<S> out(cond.size());
    S a = (S)alpha, oa = (S)(1.0 - alpha);
    S b = (S)beta, ob = (S)(1.0 - beta);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = b * (a * cond[i] + oa * text_masked[i]) + ob * sem_masked[i];
    return out;
}

// Temperature + top-k draw over blended scores. `allowed` (when non-empty)
// masks candidate ids. Ties break toward the lower id; top_k == 1 is greedy
// argmax. Deterministic given the rng state.
template <typename S>
TokenId sample_from_scores(std::span<const S> scores,
                           std::span<const uint8_t> allowed, double temperature,
                           int top_k, Rng& rng) {
    int n = (int)scores.size();
    std::vector<int> idx;
    idx.reserve(n);
    for (int i = 0; i < n; ++i)
        if (allowed.empty() || allowed[i]) idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("sample: no allowed candidates");

    int keep = std::min<int>(top_k, (int)idx.size());
    std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                      [&](int a, int b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    idx.resize(keep);
    if (keep == 1) {
        rng.uniform();  // keep the draw count consistent across top_k settings
        return (TokenId)idx[0];
    }

    std::vector<double> p(keep);
    double mx = (double)scores[idx[0]];
    double sum = 0.0;
    for (int i = 0; i < keep; ++i) {
        p[i] = std::exp(((double)scores[idx[i]] - mx) / temperature);
        sum += p[i];
    }
    double u = rng.uniform() * sum;
    double cum = 0.0;
    for (int i = 0; i < keep; ++i) {
        cum += p[i];
        if (u < cum) return (TokenId)idx[i];
    }
    return (TokenId)idx[keep - 1];
}

// ---------------------------------------------------------------------------
// Per-step blended-score dumps (written only when requested).
template <typename S>
struct ScoreDump {
    std::string region;  // "st" or "at"
    int step = 0;
    std::vector<std::vector<S>> scores;  // st: one vector; at: one per codebook
};

template <typename S>
struct GenerateStResult {
    SemanticStream stream;
    bool truncated = false;
    std::vector<ScoreDump<S>> dumps;
};

template <typename S>
struct GenerateAtResult {
    AcousticGrid grid;   // continuation only (prompt stripped)
    int prompt_frames = 0;
    bool truncated = false;
    std::vector<ScoreDump<S>> dumps;
};

// Stage-1 generation: paired conditional/null-text passes per step, blended
// with gamma, sampled, stopped at S_eos or max_st_len (then flagged
// truncated). A sampled consecutive duplicate is re-deduplicated post-hoc.
template <typename S>
GenerateStResult<S> generate_st(const CodecLM<S>& model, const TextEncoding<S>& text,
                                const GuidanceConfig& guidance,
                                bool dump_scores = false) {
    guidance.validate();
    const auto& v = model.vocab();
    Rng rng(derive_seed(guidance.seed, "generate_st"));

    typename CodecLM<S>::Session cond(model), uncond(model);
    cond.append_text(text);
    uncond.append_text(model.encoder().null_condition());

    GenerateStResult<S> out;
    std::vector<TokenId> raw;
    int cap = std::min(guidance.max_st_len,
                       model.backbone().config().st_at_budget - 1);
    bool saw_eos = false;
    for (int step = 0; step < cap + 1; ++step) {
        auto lc = model.backbone().project_heads(cond.last_hidden(), StepKind::St);
        auto lu = model.backbone().project_heads(uncond.last_hidden(), StepKind::St);
        std::vector<S> logp_c(lc.st.size()), logp_u(lu.st.size());
        nn::log_softmax<S>(lc.st, logp_c);
        nn::log_softmax<S>(lu.st, logp_u);
        std::vector<S> blended = blend_stage1<S>(logp_c, logp_u, guidance.gamma);
        if (dump_scores)
            out.dumps.push_back({"st", step, {blended}});
        TokenId id = sample_from_scores<S>(blended, {}, guidance.temperature,
                                           guidance.top_k, rng);
        if (id == v.s_eos()) {
            saw_eos = true;
            break;
        }
        if ((int)raw.size() >= cap) break;  // room for tokens exhausted
        raw.push_back(id);
        cond.append_st_tokens(std::span<const TokenId>(&id, 1));
        uncond.append_st_tokens(std::span<const TokenId>(&id, 1));
    }
    out.stream = dedup_consecutive(raw, v);
    out.stream.terminated = saw_eos;
    out.truncated = !saw_eos;
    return out;
}

// Stage-2 generation: triple passes (full, text-masked, semantics-masked)
// per decoder step, blended with alpha/beta, K heads sampled per step in the
// delayed layout with structurally-known fills forced. The prompt grid is
// delayed and teacher-forced; generation stops when head 0 emits A_fill at a
// non-structural position or when the frame budget runs out (flagged
// truncated). Returns the un-delayed continuation with the prompt stripped.
template <typename S>
GenerateAtResult<S> generate_at(const CodecLM<S>& model, const TextEncoding<S>& text,
                                const SemanticStream& st, const AcousticGrid& prompt,
                                const GuidanceConfig& guidance,
                                bool dump_scores = false) {
    guidance.validate();
    const auto& v = model.vocab();
    const int k_num = v.num_codebooks;
    Rng rng(derive_seed(guidance.seed, "generate_at"));

    GridCheck pc = validate_grid(prompt, v);
    if (!pc)
        throw std::invalid_argument("generate_at: malformed prompt at frame " +
                                    std::to_string(pc.frame) + ", codebook " +
                                    std::to_string(pc.codebook));

    typename CodecLM<S>::Session full(model), text_masked(model), sem_masked(model);
    full.append_text(text);
    text_masked.append_text(model.encoder().null_condition());
    sem_masked.append_text(text);

    std::vector<TokenId> st_ids(st.tokens);
    st_ids.push_back(v.s_eos());
    full.append_st_tokens(st_ids);
    text_masked.append_st_tokens(st_ids);
    sem_masked.append_st_tokens(st_ids, /*as_null=*/true);

    // Frame budget: the delayed region needs T + K - 1 rows.
    int st_len = (int)st_ids.size();
    int rows_budget = model.backbone().config().st_at_budget - st_len;
    if (rows_budget < k_num - 1)
        throw std::length_error(
            "generate_at: semantic region leaves no room for acoustic rows");
    int frame_cap = std::min(guidance.max_at_len, rows_budget - (k_num - 1));
    int prompt_frames = prompt.frames;
    if (frame_cap < prompt_frames)
        throw std::length_error("generate_at: prompt does not fit the budget");

    // Teacher-force the prompt's delayed prefix (its first T_p rows).
    std::vector<std::vector<TokenId>> rows;
    if (prompt_frames > 0) {
        DelayedGrid pd = apply_delay(prompt, v);
        std::vector<std::vector<TokenId>> forced(prompt_frames);
        for (int r = 0; r < prompt_frames; ++r) {
            forced[r].resize(k_num);
            for (int k = 0; k < k_num; ++k) forced[r][k] = pd.at(r, k);
        }
        full.append_at_rows(forced);
        text_masked.append_at_rows(forced);
        sem_masked.append_at_rows(forced);
        rows = std::move(forced);
    }

    GenerateAtResult<S> out;
    out.prompt_frames = prompt_frames;

    int frames = -1;  // unknown until the stop rule fires
    std::vector<uint8_t> allow_data(v.at_size + 1, 1);
    allow_data[v.a_fill()] = 0;
    std::vector<uint8_t> allow_data_or_fill(v.at_size + 1, 1);

    while (true) {
        int r = (int)rows.size();
        if (frames < 0 && r >= frame_cap) {
            // No stop signal before the cap: truncate at the cap.
            frames = frame_cap;
            out.truncated = true;
        }
        if (frames >= 0 && r >= frames + k_num - 1) break;

        auto lf = model.backbone().project_heads(full.last_hidden(), StepKind::At);
        auto lt = model.backbone().project_heads(text_masked.last_hidden(), StepKind::At);
        auto ls = model.backbone().project_heads(sem_masked.last_hidden(), StepKind::At);

        std::vector<TokenId> row(k_num, v.a_fill());
        ScoreDump<S> dump{"at", r, {}};
        for (int k = 0; k < k_num; ++k) {
            int t = r - k;
            bool structural = t < 0 || (frames >= 0 && t >= frames);
            if (structural) {
                if (dump_scores) dump.scores.emplace_back();  // forced fill
                continue;
            }
            std::vector<S> lp_f(lf.at[k].size()), lp_t(lt.at[k].size()),
                lp_s(ls.at[k].size());
            nn::log_softmax<S>(lf.at[k], lp_f);
            nn::log_softmax<S>(lt.at[k], lp_t);
            nn::log_softmax<S>(ls.at[k], lp_s);
            std::vector<S> blended =
                blend_stage2<S>(lp_f, lp_t, lp_s, guidance.alpha, guidance.beta);
            if (dump_scores) dump.scores.push_back(blended);
            bool fill_allowed = (k == 0 && frames < 0);
            TokenId id = sample_from_scores<S>(
                blended, fill_allowed ? allow_data_or_fill : allow_data,
                guidance.temperature, guidance.top_k, rng);
            if (k == 0 && id == v.a_fill()) {
                frames = t;  // stop signal: this row starts the structural tail
            } else {
                row[k] = id;
            }
        }
        if (dump_scores) out.dumps.push_back(std::move(dump));
        rows.push_back(row);
        full.append_at_rows({row});
        text_masked.append_at_rows({row});
        sem_masked.append_at_rows({row});
    }

    // Assemble the delayed grid (dropping any rows past the structural end,
    // which can only be the K==1 stop row) and invert.
    DelayedGrid dg;
    dg.source_frames = frames;
    dg.codebooks = k_num;
    int want_rows = dg.rows();
    dg.tokens.assign((size_t)want_rows * k_num, v.a_fill());
    for (int r = 0; r < want_rows && r < (int)rows.size(); ++r)
        for (int k = 0; k < k_num; ++k) dg.at(r, k) = rows[r][k];
    AcousticGrid all = remove_delay(dg, v);

    AcousticGrid cont(all.frames - prompt_frames, k_num);
    for (int t = prompt_frames; t < all.frames; ++t)
        for (int k = 0; k < k_num; ++k) cont.at(t - prompt_frames, k) = all.at(t, k);
    out.grid = std::move(cont);
    return out;
}

// ---------------------------------------------------------------------------
// Long-text segmentation: cut at punctuation marks, every emitted segment at
// least min_len characters (Unicode code points); a trailing remainder
// shorter than min_len merges into the previous segment. Concatenation of
// the segments equals the input.
std::vector<std::string> segment_text(const std::string& text, int min_len = 30);
std::vector<std::string> segment_text(const std::string& text, int min_len,
                                      const std::u32string& punctuation);

// Sentence/clause terminators covering CJK and ASCII.
const std::u32string& default_punctuation();

// ---------------------------------------------------------------------------
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = 16000;
};

// Joins clips with round(gap_ms/1000 * rate) zero samples between
// consecutive clips. Throws on mixed sample rates.
AudioClip concat_clips(const std::vector<AudioClip>& clips, int gap_ms = 100);

}  // namespace codeclm
