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
#include <string>
#include <vector>

#include "codeclm/nn.hpp"

namespace codeclm {

// Trim leading/trailing whitespace, collapse internal whitespace runs to a
// single space. The stable normalization rule for every text entry point.
std::string normalize_text(const std::string& text);

// Character-level vocabulary. Ids are indices into `chars`; unknown
// characters map to the trailing UNK id. Serialized as the raw `chars`
// string next to checkpoints, so id assignment is stable.
struct CharVocab {
    std::string chars;

    static CharVocab from_alphabet(const std::string& alphabet);

    int size() const { return (int)chars.size() + 1; }
    int unk_id() const { return (int)chars.size(); }
    int id_of(char c) const {
        auto pos = chars.find(c);
        return pos == std::string::npos ? unk_id() : (int)pos;
    }
    std::vector<int> encode(const std::string& text) const {
        std::vector<int> ids;
        ids.reserve(text.size());
        for (char c : text) ids.push_back(id_of(c));
        return ids;
    }

    bool operator==(const CharVocab&) const = default;
};

struct TextEncoderConfig {
    int width = 256;       // d_txt; equals the LM width
    int layers = 2;
    int heads = 4;
    int ffn_width = 1024;
    int budget = 64;       // padded conditioning slots
    bool lora = true;
    int lora_rank = 16;
    double lora_alpha = 16.0;

    bool operator==(const TextEncoderConfig&) const = default;
};

// Fixed-width conditioning prefix. `vectors` is padded_length x width with
// rows beyond `valid` zeroed; `mask[i]` marks the real positions.
template <typename S>
struct TextEncoding {
    Mat<S> vectors;
    std::vector<uint8_t> mask;
    int padded_length = 0;
    int valid = 0;  // m

    int mask_sum() const {
        int s = 0;
        for (uint8_t b : mask) s += b;
        return s;
    }
};

// Standalone adapter application on row vectors:
// base + (alpha/rank) * (input*down)*up. nn::LoraAdapter holds the weights.
template <typename S>
std::vector<S> apply_adapter(std::span<const S> base_output,
                             const nn::LoraAdapter<S>& adapter,
                             std::span<const S> input) {
    int in_dim = adapter.down.w.rows();
    int out_dim = adapter.out_width;
    if ((int)input.size() != in_dim || (int)base_output.size() != out_dim)
        throw std::invalid_argument("apply_adapter: dimension mismatch");
    std::vector<S> h(adapter.rank, S(0));
    for (int r = 0; r < adapter.rank; ++r)
        for (int i = 0; i < in_dim; ++i) h[r] += input[i] * adapter.down.w(i, r);
    std::vector<S> out(base_output.begin(), base_output.end());
    S s = adapter.scale();
    for (int j = 0; j < out_dim; ++j) {
        S acc = S(0);
        for (int r = 0; r < adapter.rank; ++r) acc += h[r] * adapter.up.w(r, j);
        out[j] += s * acc;
    }
    return out;
}

// Character-level bidirectional encoder standing in for a pre-trained text
// encoder: embedding + self-attention blocks, with optional low-rank
// adapters on the query/value projections. The null condition is a single
// learned embedding broadcast across the budget, so conditional and
// unconditional passes share the same positional layout.
template <typename S>
class TextEncoder {
public:
    void init(const TextEncoderConfig& cfg, const CharVocab& cv) {
        cfg_ = cfg;
        cvocab_ = cv;
        char_emb_.init("enc.char_emb", cvocab_.size(), cfg.width);
        nn::StackConfig sc;
        sc.layers = cfg.layers;
        sc.width = cfg.width;
        sc.ffn_width = cfg.ffn_width;
        sc.heads = cfg.heads;
        stack_.init("enc", sc);
        if (cfg.lora) {
            for (auto& layer : stack_.layers()) {
                layer.qkv.add_lora(layer.qkv.w.name + ".lora_q", 0, cfg.width,
                                   cfg.lora_rank, (S)cfg.lora_alpha);
                layer.qkv.add_lora(layer.qkv.w.name + ".lora_v", 2 * cfg.width,
                                   cfg.width, cfg.lora_rank, (S)cfg.lora_alpha);
            }
        }
        null_emb_.init("enc.null_emb", 1, cfg.width);
    }

    void random_init(Rng& rng, double stddev = 0.02) {
        nn::init_normal(char_emb_, rng, stddev);
        stack_.random_init(rng, stddev);
        for (auto& layer : stack_.layers()) {
            for (auto& a : layer.qkv.adapters) {
                nn::init_normal(a.down, rng, stddev);
                a.up.w.fill(S(0));  // adapters start as exact identity
            }
        }
        nn::init_normal(null_emb_, rng, stddev);
    }

    const TextEncoderConfig& config() const { return cfg_; }
    const CharVocab& char_vocab() const { return cvocab_; }
    nn::Param<S>& null_embedding() { return null_emb_; }
    const nn::Param<S>& null_embedding() const { return null_emb_; }
    nn::TransformerStack<S>& stack() { return stack_; }
    nn::Param<S>& char_embedding() { return char_emb_; }

    void collect(nn::ParamList<S>& out) {
        out.push_back(&char_emb_);
        stack_.collect(out);
        out.push_back(&null_emb_);
    }

    struct BatchCache {
        std::vector<std::vector<int>> char_ids;
        nn::StackCache<S> stack_cache;
        Mat<S> emb;      // concatenated char embeddings (stack input)
        Mat<S> out;      // concatenated encodings
        std::vector<int> offsets;
    };

    // Encodes several texts in one batched pass (training path). Texts must
    // already be normalized, non-empty, and within budget.
    void encode_batch(const std::vector<std::string>& texts, BatchCache& cache) const {
        cache.char_ids.clear();
        cache.offsets.assign(1, 0);
        std::vector<int> pos;
        for (const auto& t : texts) {
            check_encodable(t);
            cache.char_ids.push_back(cvocab_.encode(t));
            cache.offsets.push_back(cache.offsets.back() +
                                    (int)cache.char_ids.back().size());
            for (int i = 0; i < (int)cache.char_ids.back().size(); ++i)
                pos.push_back(i);
        }
        int n = cache.offsets.back();
        cache.emb.resize_uninit(n, cfg_.width);
        int r = 0;
        for (const auto& ids : cache.char_ids)
            for (int id : ids) {
                std::copy_n(char_emb_.w.data() + (size_t)id * cfg_.width, cfg_.width,
                            cache.emb.data() + (size_t)r++ * cfg_.width);
            }
        cache.stack_cache.offsets = cache.offsets;
        cache.stack_cache.pos = std::move(pos);
        cache.stack_cache.causal = false;
        stack_.forward(cache.emb, cache.stack_cache, cache.out);
    }

    // dout: gradient of the concatenated encodings. Accumulates into
    // parameter grads.
    void backward_batch(const BatchCache& cache, const Mat<S>& dout) {
        Mat<S> demb;
        stack_.backward(cache.stack_cache, dout, demb);
        int r = 0;
        for (const auto& ids : cache.char_ids)
            for (int id : ids) {
                S* g = char_emb_.g.data() + (size_t)id * cfg_.width;
                const S* src = demb.data() + (size_t)r++ * cfg_.width;
                for (int j = 0; j < cfg_.width; ++j) g[j] += src[j];
            }
    }

    // encode_text: deterministic for fixed weights. Throws on empty or
    // over-budget text (after normalization).
    TextEncoding<S> encode_text(const std::string& raw_text) const {
        std::string text = normalize_text(raw_text);
        check_encodable(text);
        BatchCache cache;
        encode_batch({text}, cache);
        TextEncoding<S> enc;
        int m = cache.out.rows();
        enc.vectors.resize(cfg_.budget, cfg_.width);
        for (int i = 0; i < m; ++i)
            std::copy_n(cache.out.data() + (size_t)i * cfg_.width, cfg_.width,
                        enc.vectors.data() + (size_t)i * cfg_.width);
        enc.mask.assign(cfg_.budget, 0);
        for (int i = 0; i < m; ++i) enc.mask[i] = 1;
        enc.padded_length = cfg_.budget;
        enc.valid = m;
        return enc;
    }

    // The learned NULL_COND encoding broadcast to the full budget, every
    // position valid.
    TextEncoding<S> null_condition() const {
        TextEncoding<S> enc;
        enc.vectors.resize(cfg_.budget, cfg_.width);
        for (int i = 0; i < cfg_.budget; ++i)
            std::copy_n(null_emb_.w.data(), cfg_.width,
                        enc.vectors.data() + (size_t)i * cfg_.width);
        enc.mask.assign(cfg_.budget, 1);
        enc.padded_length = cfg_.budget;
        enc.valid = cfg_.budget;
        return enc;
    }

    void check_encodable(const std::string& normalized_text) const {
        if (normalized_text.empty())
            throw std::invalid_argument("encode_text: text empty after normalization");
        if ((int)normalized_text.size() > cfg_.budget)
            throw std::invalid_argument(
                "encode_text: text length " + std::to_string(normalized_text.size()) +
                " exceeds budget " + std::to_string(cfg_.budget) +
                "; segment the text first");
    }

private:
    TextEncoderConfig cfg_;
    CharVocab cvocab_;
    nn::Param<S> char_emb_;
    nn::TransformerStack<S> stack_;
    nn::Param<S> null_emb_;
};

}  // namespace codeclm
