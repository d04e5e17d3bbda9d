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

#include <memory>
#include <string>
#include <vector>

#include "codeclm/backbone.hpp"
#include "codeclm/delay.hpp"
#include "codeclm/text_encoder.hpp"
#include "codeclm/vocab.hpp"

namespace codeclm {

// One training sequence after assembly. Targets are immutable once built;
// condition drops only flip flags and loss masks (see drop_conditions).
struct TrainingExample {
    std::string id;
    std::string text;          // normalized; the encoder input
    int text_chars = 0;        // m
    SemanticStream st;         // deduplicated, terminated
    DelayedGrid at_delayed;    // empty (0 rows) for ST-only examples
    int at_rows = 0;

    bool drop_text = false;
    bool drop_st = false;

    std::vector<uint8_t> st_loss_mask;  // st_len entries
    std::vector<uint8_t> at_loss_mask;  // at_rows * K, false on fill cells

    int st_len() const { return (int)st.tokens.size() + 1; }  // + S_eos
};

// The full trainable model: character encoder conditioning a decoder-only
// trunk with one semantic head and K acoustic heads.
template <typename S>
class CodecLM {
public:
    void init(const TokenVocabulary& vocab, const BackboneConfig& bb_cfg,
              const TextEncoderConfig& enc_cfg, const CharVocab& cv) {
        if (enc_cfg.width != bb_cfg.width)
            throw std::invalid_argument("model: encoder width must equal LM width");
        if (enc_cfg.budget != bb_cfg.text_budget)
            throw std::invalid_argument("model: encoder budget must equal text_budget");
        backbone_.init(bb_cfg, vocab);
        encoder_.init(enc_cfg, cv);
        params_.clear();
        backbone_.collect(params_);
        encoder_.collect(params_);
    }

    void random_init(uint64_t seed) {
        Rng rng(derive_seed(seed, "model_init"));
        backbone_.random_init(rng);
        encoder_.random_init(rng);
    }

    const TokenVocabulary& vocab() const { return backbone_.vocab(); }
    Backbone<S>& backbone() { return backbone_; }
    const Backbone<S>& backbone() const { return backbone_; }
    TextEncoder<S>& encoder() { return encoder_; }
    const TextEncoder<S>& encoder() const { return encoder_; }
    nn::ParamList<S>& params() { return params_; }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (auto* p : params_) n += (int64_t)p->w.size();
        return n;
    }

    // ----- batched training forward/backward --------------------------
    struct BatchItem {
        const TrainingExample* ex = nullptr;
        bool drop_text = false;
        bool drop_st = false;
    };

    struct BatchState {
        std::vector<BatchItem> items;
        std::vector<int> text_rows, st_rows, at_rows, row0;
        int total_rows = 0;

        typename TextEncoder<S>::BatchCache enc_cache;
        std::vector<int> encoded_of_item;  // -1 for dropped-text items
        Mat<S> text_in;                    // pre-projection text rows, concatenated
        Mat<S> text_proj_out;
        typename nn::Linear<S>::Cache text_proj_cache;

        Mat<S> lm_in;
        nn::StackCache<S> lm_cache;
        Mat<S> hidden;

        // Gathered head inputs + per-item logit row offsets.
        std::vector<int> st_gather, at_gather;
        std::vector<int> st_off, at_off;  // size items+1
        Mat<S> st_head_in, at_head_in;
        Mat<S> st_logits;
        std::vector<Mat<S>> at_logits;
    };

    void run_batch(const std::vector<BatchItem>& items, BatchState& bs) const {
        const auto& v = vocab();
        const auto& cfg = backbone_.config();
        const int d = cfg.width;
        const int k_num = v.num_codebooks;

        bs.items = items;
        int n_items = (int)items.size();
        bs.text_rows.resize(n_items);
        bs.st_rows.resize(n_items);
        bs.at_rows.resize(n_items);
        bs.row0.resize(n_items);
        bs.encoded_of_item.assign(n_items, -1);

        // Encode all non-dropped texts in one pass.
        std::vector<std::string> texts;
        for (int i = 0; i < n_items; ++i) {
            if (!items[i].drop_text) {
                bs.encoded_of_item[i] = (int)texts.size();
                texts.push_back(items[i].ex->text);
            }
        }
        if (!texts.empty()) encoder_.encode_batch(texts, bs.enc_cache);

        // Layout.
        int total = 0;
        for (int i = 0; i < n_items; ++i) {
            const auto& ex = *items[i].ex;
            bs.text_rows[i] = items[i].drop_text ? encoder_.config().budget
                                                 : ex.text_chars;
            bs.st_rows[i] = ex.st_len();
            bs.at_rows[i] = ex.at_rows;
            bs.row0[i] = total;
            int len = bs.text_rows[i] + bs.st_rows[i] + bs.at_rows[i];
            if (bs.st_rows[i] + bs.at_rows[i] > cfg.st_at_budget)
                throw std::length_error("run_batch: example exceeds st+at budget");
            if (len > cfg.max_seq())
                throw std::length_error("run_batch: sequence exceeds max_seq");
            total += len;
        }
        bs.total_rows = total;

        // Text region: encoder rows (or null embedding), then one projection.
        int n_text_rows = 0;
        for (int i = 0; i < n_items; ++i) n_text_rows += bs.text_rows[i];
        bs.text_in.resize_uninit(n_text_rows, d);
        {
            int r = 0;
            for (int i = 0; i < n_items; ++i) {
                if (items[i].drop_text) {
                    const S* null_row = encoder_.null_embedding().w.data();
                    for (int j = 0; j < bs.text_rows[i]; ++j)
                        std::copy_n(null_row, d, bs.text_in.data() + (size_t)(r++) * d);
                } else {
                    int e = bs.encoded_of_item[i];
                    int e0 = bs.enc_cache.offsets[e];
                    for (int j = 0; j < bs.text_rows[i]; ++j)
                        std::copy_n(bs.enc_cache.out.data() + (size_t)(e0 + j) * d, d,
                                    bs.text_in.data() + (size_t)(r++) * d);
                }
            }
        }
        backbone_.text_projection().forward(bs.text_in, bs.text_proj_out,
                                            &bs.text_proj_cache);

        // Assemble the LM input and position ids.
        bs.lm_in.resize_uninit(total, d);
        bs.lm_cache.offsets.assign(1, 0);
        bs.lm_cache.pos.assign(total, 0);
        {
            int r = 0, text_src = 0;
            for (int i = 0; i < n_items; ++i) {
                const auto& ex = *items[i].ex;
                for (int j = 0; j < bs.text_rows[i]; ++j) {
                    std::copy_n(bs.text_proj_out.data() + (size_t)text_src++ * d, d,
                                bs.lm_in.data() + (size_t)r * d);
                    bs.lm_cache.pos[r] = j;
                    ++r;
                }
                for (int j = 0; j < bs.st_rows[i]; ++j) {
                    S* dst = bs.lm_in.data() + (size_t)r * d;
                    if (items[i].drop_st) {
                        backbone_.embed_null_cond(dst);
                    } else {
                        TokenId id = j < (int)ex.st.tokens.size() ? ex.st.tokens[j]
                                                                  : v.s_eos();
                        backbone_.embed_st(id, dst);
                    }
                    bs.lm_cache.pos[r] = cfg.text_budget + j;
                    ++r;
                }
                for (int j = 0; j < bs.at_rows[i]; ++j) {
                    S* dst = bs.lm_in.data() + (size_t)r * d;
                    backbone_.embed_at(
                        std::span<const TokenId>(
                            ex.at_delayed.tokens.data() + (size_t)j * k_num, k_num),
                        dst);
                    bs.lm_cache.pos[r] = cfg.text_budget + bs.st_rows[i] + j;
                    ++r;
                }
                bs.lm_cache.offsets.push_back(r);
            }
        }

        backbone_.forward(bs.lm_in, bs.lm_cache, bs.hidden, /*causal=*/true);

        // Gather prediction rows.
        bs.st_gather.clear();
        bs.at_gather.clear();
        bs.st_off.assign(1, 0);
        bs.at_off.assign(1, 0);
        for (int i = 0; i < n_items; ++i) {
            int text_end = bs.row0[i] + bs.text_rows[i];
            int st_begin = text_end;
            int st_end = st_begin + bs.st_rows[i];
            for (int j = 0; j < bs.st_rows[i]; ++j)
                bs.st_gather.push_back(j == 0 ? text_end - 1 : st_begin + j - 1);
            for (int j = 0; j < bs.at_rows[i]; ++j)
                bs.at_gather.push_back(j == 0 ? st_end - 1 : st_end + j - 1);
            bs.st_off.push_back((int)bs.st_gather.size());
            bs.at_off.push_back((int)bs.at_gather.size());
        }

        gather_rows(bs.hidden, bs.st_gather, bs.st_head_in);
        gather_rows(bs.hidden, bs.at_gather, bs.at_head_in);
        backbone_.project_st(bs.st_head_in, bs.st_logits);
        bs.at_logits.resize(k_num);
        for (int k = 0; k < k_num; ++k)
            backbone_.project_at(k, bs.at_head_in, bs.at_logits[k]);
    }

    // d_st_logits / d_at_logits laid out exactly like bs.st_logits /
    // bs.at_logits. Accumulates into parameter grads.
    void backward_batch(BatchState& bs, const Mat<S>& d_st_logits,
                        const std::vector<Mat<S>>& d_at_logits) {
        const auto& v = vocab();
        const int d = backbone_.config().width;
        const int k_num = v.num_codebooks;

        // Heads -> gathered hidden grads.
        Mat<S> d_st_in, d_at_in;
        backbone_.st_head().backward(bs.st_head_in, d_st_logits, d_st_in, nullptr,
                                     false);
        for (int k = 0; k < k_num; ++k)
            backbone_.at_heads()[k].backward(bs.at_head_in, d_at_logits[k], d_at_in,
                                             nullptr, k != 0);

        // Scatter into the full hidden grad.
        Mat<S> d_hidden(bs.total_rows, d);
        scatter_rows(d_st_in, bs.st_gather, d_hidden);
        scatter_rows(d_at_in, bs.at_gather, d_hidden);

        Mat<S> d_lm_in;
        backbone_.stack().backward(bs.lm_cache, d_hidden, d_lm_in);

        // Split d_lm_in back into text / st / at contributions.
        int n_items = (int)bs.items.size();
        int n_text_rows = bs.text_in.rows();
        Mat<S> d_text_proj_out;
        d_text_proj_out.resize_uninit(n_text_rows, d);
        auto& tok_g = backbone_.token_embedding().g;
        {
            int r = 0, text_dst = 0;
            for (int i = 0; i < n_items; ++i) {
                const auto& ex = *bs.items[i].ex;
                for (int j = 0; j < bs.text_rows[i]; ++j) {
                    std::copy_n(d_lm_in.data() + (size_t)r * d, d,
                                d_text_proj_out.data() + (size_t)text_dst++ * d);
                    ++r;
                }
                for (int j = 0; j < bs.st_rows[i]; ++j) {
                    int row;
                    if (bs.items[i].drop_st) {
                        row = v.null_cond_row();
                    } else {
                        TokenId id = j < (int)ex.st.tokens.size() ? ex.st.tokens[j]
                                                                  : v.s_eos();
                        row = v.st_row(id);
                    }
                    const S* src = d_lm_in.data() + (size_t)r * d;
                    S* dst = tok_g.data() + (size_t)row * d;
                    for (int c = 0; c < d; ++c) dst[c] += src[c];
                    ++r;
                }
                for (int j = 0; j < bs.at_rows[i]; ++j) {
                    const S* src = d_lm_in.data() + (size_t)r * d;
                    for (int k = 0; k < k_num; ++k) {
                        TokenId id = ex.at_delayed.at(j, k);
                        S* dst = tok_g.data() + (size_t)v.at_row(k, id) * d;
                        for (int c = 0; c < d; ++c) dst[c] += src[c];
                    }
                    ++r;
                }
            }
        }

        // Text projection -> encoder / null embedding.
        Mat<S> d_text_in;
        backbone_.text_projection().backward(bs.text_in, d_text_proj_out, d_text_in,
                                             &bs.text_proj_cache, false);
        Mat<S> d_enc(bs.enc_cache.out.rows(), d);
        bool any_encoded = false;
        {
            int r = 0;
            S* null_g = encoder_.null_embedding().g.data();
            for (int i = 0; i < n_items; ++i) {
                if (bs.items[i].drop_text) {
                    for (int j = 0; j < bs.text_rows[i]; ++j) {
                        const S* src = d_text_in.data() + (size_t)(r++) * d;
                        for (int c = 0; c < d; ++c) null_g[c] += src[c];
                    }
                } else {
                    any_encoded = true;
                    int e = bs.encoded_of_item[i];
                    int e0 = bs.enc_cache.offsets[e];
                    for (int j = 0; j < bs.text_rows[i]; ++j) {
                        std::copy_n(d_text_in.data() + (size_t)(r++) * d, d,
                                    d_enc.data() + (size_t)(e0 + j) * d);
                    }
                }
            }
            if (any_encoded) encoder_.backward_batch(bs.enc_cache, d_enc);
        }
    }

    // ----- incremental decoding ----------------------------------------
    // One generation pass owns one session; conditioning variants (null
    // text, null semantics) are expressed through what gets appended.
    class Session {
    public:
        explicit Session(const CodecLM<S>& m) : model_(&m) {
            state_.reset(m.backbone_.stack().config(), m.backbone_.config().max_seq());
        }

        void append_text(const TextEncoding<S>& enc) {
            int m_valid = enc.valid;
            Mat<S> rows(m_valid, width());
            for (int i = 0; i < m_valid; ++i)
                std::copy_n(enc.vectors.data() + (size_t)i * width(), width(),
                            rows.data() + (size_t)i * width());
            Mat<S> proj;
            model_->backbone_.embed_text_rows(rows, proj);
            std::vector<int> pos(m_valid);
            for (int i = 0; i < m_valid; ++i) pos[i] = i;
            model_->backbone_.stack().decode_append(state_, proj, pos, last_);
        }

        void append_st_tokens(std::span<const TokenId> ids, bool as_null = false) {
            int n = (int)ids.size();
            if (n == 0) return;
            Mat<S> rows(n, width());
            std::vector<int> pos(n);
            for (int i = 0; i < n; ++i) {
                if (as_null)
                    model_->backbone_.embed_null_cond(rows.data() + (size_t)i * width());
                else
                    model_->backbone_.embed_st(ids[i], rows.data() + (size_t)i * width());
                pos[i] = model_->backbone_.config().text_budget + n_st_ + i;
            }
            model_->backbone_.stack().decode_append(state_, rows, pos, last_);
            n_st_ += n;
        }

        void append_at_rows(const std::vector<std::vector<TokenId>>& delayed_rows) {
            int n = (int)delayed_rows.size();
            if (n == 0) return;
            Mat<S> rows(n, width());
            std::vector<int> pos(n);
            for (int i = 0; i < n; ++i) {
                model_->backbone_.embed_at(delayed_rows[i],
                                           rows.data() + (size_t)i * width());
                pos[i] = model_->backbone_.config().text_budget + n_st_ + n_at_ + i;
            }
            model_->backbone_.stack().decode_append(state_, rows, pos, last_);
            n_at_ += n;
        }

        // Hidden state of the last appended row.
        std::span<const S> last_hidden() const {
            return {last_.data() + (size_t)(last_.rows() - 1) * last_.cols(),
                    (size_t)last_.cols()};
        }

        int st_count() const { return n_st_; }
        int at_count() const { return n_at_; }
        int total_rows() const { return state_.len; }

    private:
        int width() const { return model_->backbone_.config().width; }
        const CodecLM<S>* model_;
        typename nn::TransformerStack<S>::DecodeState state_;
        Mat<S> last_;
        int n_st_ = 0;
        int n_at_ = 0;
    };

private:
    static void gather_rows(const Mat<S>& src, const std::vector<int>& rows,
                            Mat<S>& dst) {
        dst.resize_uninit((int)rows.size(), src.cols());
        for (size_t i = 0; i < rows.size(); ++i)
            std::copy_n(src.data() + (size_t)rows[i] * src.cols(), src.cols(),
                        dst.data() + i * src.cols());
    }
    static void scatter_rows(const Mat<S>& src, const std::vector<int>& rows,
                             Mat<S>& dst) {
        for (size_t i = 0; i < rows.size(); ++i) {
            const S* s = src.data() + i * src.cols();
            S* d = dst.data() + (size_t)rows[i] * dst.cols();
            for (int c = 0; c < src.cols(); ++c) d[c] += s[c];
        }
    }

    Backbone<S> backbone_;
    TextEncoder<S> encoder_;
    nn::ParamList<S> params_;
};

}  // namespace codeclm
