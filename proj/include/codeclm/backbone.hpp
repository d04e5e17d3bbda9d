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

#include <span>
#include <string>
#include <vector>

#include "codeclm/nn.hpp"
#include "codeclm/vocab.hpp"

namespace codeclm {

// Decoder-only trunk over [text prefix | semantic tokens | delayed acoustic
// rows]. One input embedding per step (per-codebook embeddings summed on
// acoustic steps), one semantic head plus K acoustic heads reading the same
// final hidden state.
struct BackboneConfig {
    int layers = 4;
    int width = 256;
    int ffn_width = 1024;
    int heads = 4;
    int text_budget = 64;
    int st_at_budget = 512;

    int max_seq() const { return text_budget + st_at_budget; }

    void validate() const {
        if (width % heads != 0)
            throw std::invalid_argument("backbone: width must be divisible by heads");
        if (layers < 1 || text_budget < 1 || st_at_budget < 1)
            throw std::invalid_argument("backbone: non-positive dimension");
    }

    bool operator==(const BackboneConfig&) const = default;
};

// Per-step projection output. `st` is filled for semantic-region steps,
// `at` (one vector per codebook) for acoustic-region steps.
template <typename S>
struct StepLogits {
    std::vector<S> st;
    std::vector<std::vector<S>> at;
};

enum class StepKind { Text, St, At };

template <typename S>
class Backbone {
public:
    void init(const BackboneConfig& cfg, const TokenVocabulary& vocab) {
        cfg.validate();
        vocab.validate();
        cfg_ = cfg;
        vocab_ = vocab;
        tok_emb_.init("lm.tok_emb", vocab.combined_size(), cfg.width);
        text_proj_.init("lm.text_proj", cfg.width, cfg.width, false);
        nn::StackConfig sc;
        sc.layers = cfg.layers;
        sc.width = cfg.width;
        sc.ffn_width = cfg.ffn_width;
        sc.heads = cfg.heads;
        stack_.init("lm", sc);
        st_head_.init("lm.st_head", vocab.st_size + 1, cfg.width, true);
        at_heads_.resize(vocab.num_codebooks);
        for (int k = 0; k < vocab.num_codebooks; ++k) {
            at_heads_[k].init("lm.at_head" + std::to_string(k), vocab.at_size + 1,
                              cfg.width, true);
        }
    }

    void random_init(Rng& rng, double stddev = 0.02) {
        nn::init_normal(tok_emb_, rng, stddev);
        nn::init_normal(text_proj_.w, rng, stddev);
        stack_.random_init(rng, stddev);
        nn::init_normal(st_head_.w, rng, stddev);
        for (auto& h : at_heads_) nn::init_normal(h.w, rng, stddev);
    }

    const BackboneConfig& config() const { return cfg_; }
    const TokenVocabulary& vocab() const { return vocab_; }
    nn::TransformerStack<S>& stack() { return stack_; }
    const nn::TransformerStack<S>& stack() const { return stack_; }
    nn::Param<S>& token_embedding() { return tok_emb_; }
    nn::Linear<S>& text_projection() { return text_proj_; }
    const nn::Linear<S>& text_projection() const { return text_proj_; }
    nn::Linear<S>& st_head() { return st_head_; }
    std::vector<nn::Linear<S>>& at_heads() { return at_heads_; }

    void collect(nn::ParamList<S>& out) {
        out.push_back(&tok_emb_);
        text_proj_.collect(out);
        stack_.collect(out);
        st_head_.collect(out);
        for (auto& h : at_heads_) h.collect(out);
    }

    // --- Step embedding ------------------------------------------------
    // text: projects one encoding vector into LM space.
    void embed_text_rows(const Mat<S>& enc_rows, Mat<S>& out) const {
        text_proj_.forward(enc_rows, out, nullptr);
    }

    // st: combined-table lookup (data id, S_eos, or NULL_COND row).
    void embed_st(TokenId id, S* out) const {
        if (id < 0 || id > vocab_.s_eos())
            throw std::invalid_argument("embed_st: id out of range");
        std::copy_n(tok_emb_.w.data() + (size_t)vocab_.st_row(id) * cfg_.width,
                    cfg_.width, out);
    }
    void embed_null_cond(S* out) const {
        std::copy_n(tok_emb_.w.data() + (size_t)vocab_.null_cond_row() * cfg_.width,
                    cfg_.width, out);
    }

    // at: sum of per-codebook lookups; fill ids use each codebook's fill row.
    void embed_at(std::span<const TokenId> row, S* out) const {
        if ((int)row.size() != vocab_.num_codebooks)
            throw std::invalid_argument("embed_at: row width != num_codebooks");
        std::fill_n(out, cfg_.width, S(0));
        for (int k = 0; k < vocab_.num_codebooks; ++k) {
            TokenId id = row[k];
            if (id < 0 || id > vocab_.a_fill())
                throw std::invalid_argument("embed_at: id out of range in codebook " +
                                            std::to_string(k));
            const S* src = tok_emb_.w.data() + (size_t)vocab_.at_row(k, id) * cfg_.width;
            for (int j = 0; j < cfg_.width; ++j) out[j] += src[j];
        }
    }

    // Generic single-step embedding (text payload: one encoding vector).
    std::vector<S> embed_step(StepKind kind, std::span<const S> text_vec,
                              std::span<const TokenId> ids) const {
        std::vector<S> out(cfg_.width, S(0));
        switch (kind) {
            case StepKind::Text: {
                if ((int)text_vec.size() != cfg_.width)
                    throw std::invalid_argument("embed_step: bad text vector width");
                Mat<S> in(1, cfg_.width), proj;
                std::copy(text_vec.begin(), text_vec.end(), in.data());
                text_proj_.forward(in, proj, nullptr);
                std::copy_n(proj.data(), cfg_.width, out.data());
                break;
            }
            case StepKind::St:
                if (ids.size() != 1)
                    throw std::invalid_argument("embed_step: st payload is one id");
                embed_st(ids[0], out.data());
                break;
            case StepKind::At:
                embed_at(ids, out.data());
                break;
        }
        return out;
    }

    // --- Trunk ----------------------------------------------------------
    // Full-sequence forward over concatenated sequences (training path).
    void forward(const Mat<S>& x, nn::StackCache<S>& cache, Mat<S>& hidden,
                 bool causal = true) const {
        for (size_t s = 0; s + 1 < cache.offsets.size(); ++s) {
            int len = cache.offsets[s + 1] - cache.offsets[s];
            if (len > cfg_.max_seq())
                throw std::length_error("forward: sequence length " +
                                        std::to_string(len) + " exceeds max_seq " +
                                        std::to_string(cfg_.max_seq()));
        }
        cache.causal = causal;
        stack_.forward(x, cache, hidden);
    }

    // --- Heads ------------------------------------------------------
    void project_st(const Mat<S>& hidden, Mat<S>& logits,
                    typename nn::Linear<S>::Cache* c = nullptr) const {
        st_head_.forward(hidden, logits, c);
    }
    void project_at(int k, const Mat<S>& hidden, Mat<S>& logits,
                    typename nn::Linear<S>::Cache* c = nullptr) const {
        at_heads_[k].forward(hidden, logits, c);
    }

    // One-step projection for a region (contract-level op; generation uses
    // the Mat forms above).
    StepLogits<S> project_heads(std::span<const S> hidden, StepKind region) const {
        if ((int)hidden.size() != cfg_.width)
            throw std::invalid_argument("project_heads: bad hidden width");
        Mat<S> h(1, cfg_.width);
        std::copy(hidden.begin(), hidden.end(), h.data());
        StepLogits<S> out;
        if (region == StepKind::St) {
            Mat<S> l;
            st_head_.forward(h, l, nullptr);
            out.st.assign(l.data(), l.data() + l.cols());
        } else if (region == StepKind::At) {
            out.at.resize(at_heads_.size());
            for (size_t k = 0; k < at_heads_.size(); ++k) {
                Mat<S> l;
                at_heads_[k].forward(h, l, nullptr);
                out.at[k].assign(l.data(), l.data() + l.cols());
            }
        } else {
            throw std::invalid_argument("project_heads: region must be st or at");
        }
        return out;
    }

    // Closed-form trainable-parameter count for a config (asserted in tests
    // against the actual registry).
    static int64_t param_count(const BackboneConfig& cfg, const TokenVocabulary& v) {
        int64_t d = cfg.width, f = cfg.ffn_width;
        int64_t per_layer = d + 3 * d * d + d * d + d + 2 * f * d + f * d;
        int64_t trunk = cfg.layers * per_layer + d;  // + final norm
        int64_t emb = (int64_t)v.combined_size() * d;
        int64_t proj = d * d;
        int64_t heads = (int64_t)(v.st_size + 1) * (d + 1) +
                        (int64_t)v.num_codebooks * (v.at_size + 1) * (d + 1);
        return emb + proj + trunk + heads;
    }

private:
    BackboneConfig cfg_;
    TokenVocabulary vocab_;
    nn::Param<S> tok_emb_;
    nn::Linear<S> text_proj_;
    nn::TransformerStack<S> stack_;
    nn::Linear<S> st_head_;
    std::vector<nn::Linear<S>> at_heads_;
};

}  // namespace codeclm
