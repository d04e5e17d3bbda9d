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
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "codeclm/model.hpp"

namespace codeclm {

// Per-codebook loss weights; earlier codebooks carry more information and
// get larger weights.
struct LossWeights {
    std::vector<double> alpha;

    static LossWeights reference_12();  // {5,2,1,.5,.5,.2,.2,.2,.1,.1,.1,.1}
    static LossWeights for_codebooks(int k);  // first k entries of the above

    void validate(int k) const {
        if ((int)alpha.size() != k)
            throw std::invalid_argument("loss weights: expected " + std::to_string(k) +
                                        " entries, got " + std::to_string(alpha.size()));
        for (double a : alpha)
            if (!(a > 0)) throw std::invalid_argument("loss weights must be > 0");
    }
};

struct TrainingConfig {
    int steps = 3000;
    int batch_size = 16;
    double peak_lr = 1e-4;
    double warmup_frac = 0.05;
    double condition_drop_p = 0.1;
    double grad_clip = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;
    LossWeights weights;
    uint64_t seed = 0;
};

// Linear warmup over the first warmup_frac of steps (0 at step 0), then
// cosine decay from the peak.
inline double lr_at_step(const TrainingConfig& cfg, int step) {
    int warm = std::max(1, (int)std::llround(cfg.warmup_frac * cfg.steps));
    if (step < warm) return cfg.peak_lr * step / warm;
    if (cfg.steps <= warm) return cfg.peak_lr;
    double progress = std::min(1.0, (double)(step - warm) / (cfg.steps - warm));
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// assemble_example: dedups the raw semantic ids, terminates with S_eos,
// delays the grid, and lays out loss masks. Throws naming the offending
// component when a budget is exceeded.
TrainingExample assemble_example(const std::string& id, const std::string& text,
                                 const std::vector<TokenId>& st_raw,
                                 const AcousticGrid& at_grid,
                                 const TokenVocabulary& vocab,
                                 const BackboneConfig& cfg);

// drop_conditions: independently with probability p, replaces the text
// prefix with the null condition and/or the semantic region with NULL_COND
// rows (length preserved). Dropped ST region is excluded from the loss;
// stored targets are never rewritten.
TrainingExample drop_conditions(const TrainingExample& ex, Rng& rng, double p);

// ---------------------------------------------------------------------------
struct LossBreakdown {
    double total = 0.0;
    double l_st = 0.0;
    std::vector<double> l_at;  // per-head mean CE
    int st_tokens = 0;
    std::vector<int> at_tokens;
};

// Logits for a batch, concatenated in example order. st has one row per
// semantic target (data tokens then S_eos); at[k] has one row per delayed
// row of the acoustic region.
template <typename S>
struct BatchLogits {
    const Mat<S>* st = nullptr;
    const std::vector<Mat<S>>* at = nullptr;
    std::vector<int> st_off, at_off;  // per-example row offsets (size n+1)
};

// compute_loss: mean-per-token CE over the semantic region plus the
// alpha-weighted sum of per-head mean CEs over unmasked acoustic cells.
// When d_st/d_at are given, writes the gradients of the total loss.
template <typename S>
LossBreakdown compute_loss(const BatchLogits<S>& logits,
                           const std::vector<const TrainingExample*>& examples,
                           const LossWeights& weights, const TokenVocabulary& vocab,
                           Mat<S>* d_st = nullptr, std::vector<Mat<S>>* d_at = nullptr) {
    const int k_num = vocab.num_codebooks;
    weights.validate(k_num);
    const int st_vocab = vocab.st_size + 1;
    const int at_vocab = vocab.at_size + 1;

    if ((int)examples.size() + 1 != (int)logits.st_off.size())
        throw std::invalid_argument("compute_loss: offsets do not match examples");

    LossBreakdown out;
    out.l_at.assign(k_num, 0.0);
    out.at_tokens.assign(k_num, 0);

    if (d_st) d_st->resize(logits.st->rows(), st_vocab);
    if (d_at) {
        d_at->resize(k_num);
        for (int k = 0; k < k_num; ++k)
            (*d_at)[k].resize((*logits.at)[k].rows(), at_vocab);
    }

    double st_sum = 0.0;
    std::vector<double> at_sum(k_num, 0.0);

    for (size_t e = 0; e < examples.size(); ++e) {
        const TrainingExample& ex = *examples[e];
        int st_rows = logits.st_off[e + 1] - logits.st_off[e];
        int at_rows = logits.at_off[e + 1] - logits.at_off[e];
        if (st_rows != ex.st_len() || at_rows != ex.at_rows)
            throw std::invalid_argument("compute_loss: logits misaligned with example " +
                                        ex.id);
        for (int j = 0; j < st_rows; ++j) {
            if (!ex.st_loss_mask[j]) continue;
            TokenId target = j < (int)ex.st.tokens.size() ? ex.st.tokens[j]
                                                          : vocab.s_eos();
            ++out.st_tokens;
            int row = logits.st_off[e] + j;
            std::span<const S> lr{logits.st->data() + (size_t)row * st_vocab,
                                  (size_t)st_vocab};
            // log-softmax CE
            S mx = lr[0];
            for (int c = 1; c < st_vocab; ++c) mx = std::max(mx, lr[c]);
            double sum = 0.0;
            for (int c = 0; c < st_vocab; ++c) sum += std::exp((double)(lr[c] - mx));
            double lse = (double)mx + std::log(sum);
            st_sum += lse - (double)lr[target];
            if (d_st) {
                S* dr = d_st->data() + (size_t)row * st_vocab;
                for (int c = 0; c < st_vocab; ++c)
                    dr[c] = (S)(std::exp((double)lr[c] - lse));
                dr[target] -= S(1);
            }
        }
        for (int j = 0; j < at_rows; ++j) {
            for (int k = 0; k < k_num; ++k) {
                if (!ex.at_loss_mask[(size_t)j * k_num + k]) continue;
                TokenId target = ex.at_delayed.at(j, k);
                ++out.at_tokens[k];
                int row = logits.at_off[e] + j;
                const Mat<S>& lm = (*logits.at)[k];
                std::span<const S> lr{lm.data() + (size_t)row * at_vocab,
                                      (size_t)at_vocab};
                S mx = lr[0];
                for (int c = 1; c < at_vocab; ++c) mx = std::max(mx, lr[c]);
                double sum = 0.0;
                for (int c = 0; c < at_vocab; ++c) sum += std::exp((double)(lr[c] - mx));
                double lse = (double)mx + std::log(sum);
                at_sum[k] += lse - (double)lr[target];
                if (d_at) {
                    S* dr = (*d_at)[k].data() + (size_t)row * at_vocab;
                    for (int c = 0; c < at_vocab; ++c)
                        dr[c] = (S)(std::exp((double)lr[c] - lse));
                    dr[target] -= S(1);
                }
            }
        }
    }

    out.l_st = out.st_tokens > 0 ? st_sum / out.st_tokens : 0.0;
    out.total = out.l_st;
    for (int k = 0; k < k_num; ++k) {
        out.l_at[k] = out.at_tokens[k] > 0 ? at_sum[k] / out.at_tokens[k] : 0.0;
        out.total += weights.alpha[k] * out.l_at[k];
    }

    // Scale gradients by the mean/weight factors.
    if (d_st && out.st_tokens > 0) {
        S f = (S)(1.0 / out.st_tokens);
        for (size_t i = 0; i < d_st->size(); ++i) d_st->data()[i] *= f;
    }
    if (d_at) {
        for (int k = 0; k < k_num; ++k) {
            if (out.at_tokens[k] == 0) continue;
            S f = (S)(weights.alpha[k] / out.at_tokens[k]);
            for (size_t i = 0; i < (*d_at)[k].size(); ++i) (*d_at)[k].data()[i] *= f;
        }
    }
    return out;
}

// Single-example convenience wrapper.
template <typename S>
LossBreakdown compute_loss(const Mat<S>& st_logits, const std::vector<Mat<S>>& at_logits,
                           const TrainingExample& ex, const LossWeights& weights,
                           const TokenVocabulary& vocab) {
    BatchLogits<S> bl;
    bl.st = &st_logits;
    bl.at = &at_logits;
    bl.st_off = {0, st_logits.rows()};
    bl.at_off = {0, at_logits.empty() ? 0 : at_logits[0].rows()};
    return compute_loss<S>(bl, {&ex}, weights, vocab);
}

// ---------------------------------------------------------------------------
struct StepMetrics {
    int step = 0;
    double total = 0.0;
    double l_st = 0.0;
    std::vector<double> l_at;
    double lr = 0.0;
    double grad_norm = 0.0;
    int dropped_text = 0;
    int dropped_st = 0;
};

// One optimizer step per call; batches are drawn as shuffled epochs over the
// corpus. Deterministic for a fixed seed.
template <typename S>
class Trainer {
public:
    Trainer(CodecLM<S>& model, std::vector<TrainingExample> examples,
            const TrainingConfig& cfg)
        : model_(model),
          examples_(std::move(examples)),
          cfg_(cfg),
          rng_(derive_seed(cfg.seed, "trainer")) {
        if (examples_.empty()) throw std::invalid_argument("trainer: empty corpus");
        cfg_.weights.validate(model.vocab().num_codebooks);
        opt_.beta1 = cfg.adam_beta1;
        opt_.beta2 = cfg.adam_beta2;
        opt_.eps = cfg.adam_eps;
        opt_.attach(model.params());
    }

    int step_index() const { return step_; }
    void set_step_index(int s) { step_ = s; }
    nn::Adam<S>& optimizer() { return opt_; }
    Rng& rng() { return rng_; }
    const TrainingConfig& config() const { return cfg_; }
    std::vector<TrainingExample>& examples() { return examples_; }

    StepMetrics train_step() {
        int n = (int)examples_.size();
        int bsz = std::min(cfg_.batch_size, n);
        std::vector<const TrainingExample*> batch;
        std::vector<typename CodecLM<S>::BatchItem> items;
        std::vector<TrainingExample> dropped;
        dropped.reserve(bsz);
        StepMetrics m;
        for (int b = 0; b < bsz; ++b) {
            int idx = next_example_index();
            dropped.push_back(
                drop_conditions(examples_[idx], rng_, cfg_.condition_drop_p));
            m.dropped_text += dropped.back().drop_text ? 1 : 0;
            m.dropped_st += dropped.back().drop_st ? 1 : 0;
        }
        for (auto& ex : dropped) {
            batch.push_back(&ex);
            items.push_back({&ex, ex.drop_text, ex.drop_st});
        }

        model_.zero_grad();
        typename CodecLM<S>::BatchState& bs = bs_;  // buffers reused across steps
        model_.run_batch(items, bs);

        BatchLogits<S> bl;
        bl.st = &bs.st_logits;
        bl.at = &bs.at_logits;
        bl.st_off = bs.st_off;
        bl.at_off = bs.at_off;
        LossBreakdown lb = compute_loss<S>(bl, batch, cfg_.weights, model_.vocab(),
                                           &d_st_, &d_at_);
        if (!std::isfinite(lb.total)) {
            throw std::runtime_error(
                "train_step: non-finite loss at step " + std::to_string(step_) +
                " (l_st=" + std::to_string(lb.l_st) + "); aborting");
        }
        model_.backward_batch(bs, d_st_, d_at_);

        m.grad_norm = opt_.clip_global_norm(model_.params(), cfg_.grad_clip);
        m.lr = lr_at_step(cfg_, step_);
        opt_.step(model_.params(), m.lr);

        m.step = step_;
        m.total = lb.total;
        m.l_st = lb.l_st;
        m.l_at = lb.l_at;
        ++step_;
        return m;
    }

    // Corpus loss with condition dropping disabled; no gradient, no
    // optimizer state change.
    LossBreakdown eval_corpus() {
        std::vector<const TrainingExample*> batch;
        std::vector<typename CodecLM<S>::BatchItem> items;
        for (const auto& ex : examples_) {
            batch.push_back(&ex);
            items.push_back({&ex, false, false});
        }
        typename CodecLM<S>::BatchState bs;
        model_.run_batch(items, bs);
        BatchLogits<S> bl;
        bl.st = &bs.st_logits;
        bl.at = &bs.at_logits;
        bl.st_off = bs.st_off;
        bl.at_off = bs.at_off;
        return compute_loss<S>(bl, batch, cfg_.weights, model_.vocab());
    }

private:
    int next_example_index() {
        if (cursor_ >= (int)order_.size()) {
            order_.resize(examples_.size());
            for (size_t i = 0; i < order_.size(); ++i) order_[i] = (int)i;
            // Fisher-Yates with the trainer rng.
            for (int i = (int)order_.size() - 1; i > 0; --i) {
                int j = rng_.uniform_int(i + 1);
                std::swap(order_[i], order_[j]);
            }
            cursor_ = 0;
        }
        return order_[cursor_++];
    }

    CodecLM<S>& model_;
    std::vector<TrainingExample> examples_;
    TrainingConfig cfg_;
    Rng rng_;
    nn::Adam<S> opt_;
    int step_ = 0;
    std::vector<int> order_;
    int cursor_ = 1 << 30;  // forces a shuffle on first use
    typename CodecLM<S>::BatchState bs_;
    Mat<S> d_st_;
    std::vector<Mat<S>> d_at_;
};

}  // namespace codeclm
