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

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "codeclm/blas.hpp"
#include "codeclm/mat.hpp"
#include "codeclm/rng.hpp"

// Transformer building blocks with explicit forward/backward passes.
// Templated on the scalar so training runs in float and gradient checks can
// run the identical code in double.
namespace codeclm::nn {

template <typename S>
struct Param {
    std::string name;
    Mat<S> w;
    Mat<S> g;

    void init(const std::string& n, int rows, int cols) {
        name = n;
        w.resize(rows, cols);
        g.resize(rows, cols);
    }
    void zero_grad() { g.fill(S(0)); }
};

template <typename S>
using ParamList = std::vector<Param<S>*>;

template <typename S>
void init_normal(Param<S>& p, Rng& rng, double stddev) {
    for (size_t i = 0; i < p.w.size(); ++i) p.w.data()[i] = (S)rng.normal(0.0, stddev);
}

template <typename S>
void init_const(Param<S>& p, S v) {
    p.w.fill(v);
}

// ---------------------------------------------------------------------------
// Low-rank adapter attached to an output slice of a Linear.
// Effective update: Y[:, begin:begin+width] += (alpha/rank) * (X*down)*up.
// With `up` all-zero the wrapped projection is exactly the base projection.
template <typename S>
struct LoraAdapter {
    int out_begin = 0;
    int out_width = 0;
    int rank = 0;
    S alpha = S(16);
    Param<S> down;  // in x r
    Param<S> up;    // r x out_width

    S scale() const { return alpha / (S)rank; }
};

template <typename S>
struct Linear {
    Param<S> w;               // out x in
    Param<S> b;               // 1 x out (empty when bias-free)
    bool has_bias = false;
    std::vector<LoraAdapter<S>> adapters;

    int in_dim() const { return w.w.cols(); }
    int out_dim() const { return w.w.rows(); }

    void init(const std::string& name, int out, int in, bool bias) {
        w.init(name + ".weight", out, in);
        has_bias = bias;
        if (bias) b.init(name + ".bias", 1, out);
    }

    void add_lora(const std::string& name, int out_begin, int out_width, int rank,
                  S alpha) {
        LoraAdapter<S> a;
        a.out_begin = out_begin;
        a.out_width = out_width;
        a.rank = rank;
        a.alpha = alpha;
        a.down.init(name + ".down", in_dim(), rank);
        a.up.init(name + ".up", rank, out_width);
        adapters.push_back(std::move(a));
    }

    void collect(ParamList<S>& out) {
        out.push_back(&w);
        if (has_bias) out.push_back(&b);
        for (auto& a : adapters) {
            out.push_back(&a.down);
            out.push_back(&a.up);
        }
    }

    struct Cache {
        std::vector<Mat<S>> lora_h;  // per adapter: N x r
    };

    void forward(const Mat<S>& x, Mat<S>& y, Cache* cache = nullptr) const {
        int n = x.rows();
        y.resize_uninit(n, out_dim());
        gemm(false, true, n, out_dim(), in_dim(), S(1), x.data(), in_dim(),
             w.w.data(), in_dim(), S(0), y.data(), out_dim());
        if (has_bias) {
            for (int i = 0; i < n; ++i) {
                S* yr = y.data() + (size_t)i * out_dim();
                const S* br = b.w.data();
                for (int j = 0; j < out_dim(); ++j) yr[j] += br[j];
            }
        }
        if (cache) cache->lora_h.resize(adapters.size());
        for (size_t ai = 0; ai < adapters.size(); ++ai) {
            const auto& a = adapters[ai];
            Mat<S> h(n, a.rank);
            gemm(false, false, n, a.rank, in_dim(), S(1), x.data(), in_dim(),
                 a.down.w.data(), a.rank, S(0), h.data(), a.rank);
            gemm(false, false, n, a.out_width, a.rank, a.scale(), h.data(), a.rank,
                 a.up.w.data(), a.out_width, S(1), y.data() + a.out_begin, out_dim());
            if (cache) cache->lora_h[ai] = std::move(h);
        }
    }

    // Accumulates parameter grads; accumulates into dx when accumulate_dx.
    void backward(const Mat<S>& x, const Mat<S>& dy, Mat<S>& dx, const Cache* cache,
                  bool accumulate_dx) {
        int n = x.rows();
        if (!accumulate_dx) dx.resize_uninit(n, in_dim());
        gemm(false, false, n, in_dim(), out_dim(), S(1), dy.data(), out_dim(),
             w.w.data(), in_dim(), accumulate_dx ? S(1) : S(0), dx.data(), in_dim());
        gemm(true, false, out_dim(), in_dim(), n, S(1), dy.data(), out_dim(),
             x.data(), in_dim(), S(1), w.g.data(), in_dim());
        if (has_bias) {
            S* bg = b.g.data();
            for (int i = 0; i < n; ++i) {
                const S* dyr = dy.data() + (size_t)i * out_dim();
                for (int j = 0; j < out_dim(); ++j) bg[j] += dyr[j];
            }
        }
        for (size_t ai = 0; ai < adapters.size(); ++ai) {
            auto& a = adapters[ai];
            const Mat<S>& h = cache->lora_h[ai];
            Mat<S> dh(n, a.rank);
            // dh = scale * dy_slice * up^T
            gemm(false, true, n, a.rank, a.out_width, a.scale(),
                 dy.data() + a.out_begin, out_dim(), a.up.w.data(), a.out_width,
                 S(0), dh.data(), a.rank);
            // dup += scale * h^T * dy_slice
            gemm(true, false, a.rank, a.out_width, n, a.scale(), h.data(), a.rank,
                 dy.data() + a.out_begin, out_dim(), S(1), a.up.g.data(),
                 a.out_width);
            // ddown += x^T * dh
            gemm(true, false, in_dim(), a.rank, n, S(1), x.data(), in_dim(),
                 dh.data(), a.rank, S(1), a.down.g.data(), a.rank);
            // dx += dh * down^T
            gemm(false, true, n, in_dim(), a.rank, S(1), dh.data(), a.rank,
                 a.down.w.data(), a.rank, S(1), dx.data(), in_dim());
        }
    }
};

// ---------------------------------------------------------------------------
template <typename S>
struct RmsNorm {
    Param<S> g;  // 1 x d
    S eps = S(1e-5);

    void init(const std::string& name, int d) {
        g.init(name + ".weight", 1, d);
        init_const(g, S(1));
    }
    void collect(ParamList<S>& out) { out.push_back(&g); }

    struct Cache {
        std::vector<S> inv;  // per row: 1/rms
    };

    void forward(const Mat<S>& x, Mat<S>& y, Cache* cache = nullptr) const {
        int n = x.rows(), d = x.cols();
        y.resize_uninit(n, d);
        if (cache) cache->inv.resize(n);
        for (int i = 0; i < n; ++i) {
            const S* xr = x.data() + (size_t)i * d;
            S* yr = y.data() + (size_t)i * d;
            S ms = S(0);
            for (int j = 0; j < d; ++j) ms += xr[j] * xr[j];
            ms /= (S)d;
            S inv = S(1) / std::sqrt(ms + eps);
            if (cache) cache->inv[i] = inv;
            const S* gw = g.w.data();
            for (int j = 0; j < d; ++j) yr[j] = xr[j] * inv * gw[j];
        }
    }

    void backward(const Mat<S>& x, const Mat<S>& dy, const Cache& cache, Mat<S>& dx,
                  bool accumulate_dx) {
        int n = x.rows(), d = x.cols();
        if (!accumulate_dx) dx.resize_uninit(n, d);
        S* gg = g.g.data();
        const S* gw = g.w.data();
        for (int i = 0; i < n; ++i) {
            const S* xr = x.data() + (size_t)i * d;
            const S* dyr = dy.data() + (size_t)i * d;
            S* dxr = dx.data() + (size_t)i * d;
            S inv = cache.inv[i];
            S dot = S(0);
            for (int j = 0; j < d; ++j) {
                gg[j] += dyr[j] * xr[j] * inv;
                dot += dyr[j] * gw[j] * xr[j];
            }
            S coef = inv * inv * inv * dot / (S)d;
            for (int j = 0; j < d; ++j) {
                S v = dyr[j] * gw[j] * inv - xr[j] * coef;
                if (accumulate_dx) dxr[j] += v; else dxr[j] = v;
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Rotary position tables for a set of absolute positions.
template <typename S>
struct RopeTable {
    Mat<S> cos_t, sin_t;  // N x hd/2

    void build(std::span<const int> pos, int head_dim, double base) {
        int n = (int)pos.size(), half = head_dim / 2;
        cos_t.resize_uninit(n, half);
        sin_t.resize_uninit(n, half);
        std::vector<double> freq(half);
        for (int f = 0; f < half; ++f) freq[f] = std::pow(base, -2.0 * f / head_dim);
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < half; ++f) {
                double angle = pos[i] * freq[f];
                cos_t(i, f) = (S)std::cos(angle);
                sin_t(i, f) = (S)std::sin(angle);
            }
        }
    }
};

// Rotates pairs (2f, 2f+1) of every head slice in rows of `x` (layout:
// heads*head_dim contiguous). `inverse` applies the transpose rotation
// (used for gradients; rotation matrices are orthogonal).
template <typename S>
void rope_apply(Mat<S>& x, const RopeTable<S>& t, int col_begin, int heads,
                int head_dim, bool inverse) {
    int n = x.rows(), half = head_dim / 2;
    for (int i = 0; i < n; ++i) {
        S* row = x.data() + (size_t)i * x.cols() + col_begin;
        const S* cr = t.cos_t.data() + (size_t)i * half;
        const S* sr = t.sin_t.data() + (size_t)i * half;
        for (int h = 0; h < heads; ++h) {
            S* hp = row + h * head_dim;
            for (int f = 0; f < half; ++f) {
                S c = cr[f], s = inverse ? -sr[f] : sr[f];
                S a = hp[2 * f], b = hp[2 * f + 1];
                hp[2 * f] = a * c - b * s;
                hp[2 * f + 1] = a * s + b * c;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Softmax helpers (row vectors).
template <typename S>
void softmax_inplace(S* v, int n) {
    S mx = v[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, v[i]);
    S sum = S(0);
    for (int i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - mx);
        sum += v[i];
    }
    S inv = S(1) / sum;
    for (int i = 0; i < n; ++i) v[i] *= inv;
}

template <typename S>
void log_softmax(std::span<const S> in, std::span<S> out) {
    S mx = in[0];
    for (size_t i = 1; i < in.size(); ++i) mx = std::max(mx, in[i]);
    S sum = S(0);
    for (size_t i = 0; i < in.size(); ++i) sum += std::exp(in[i] - mx);
    S lse = mx + std::log(sum);
    for (size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lse;
}

// ---------------------------------------------------------------------------
// Transformer stack: pre-norm blocks with rotary attention and a gated
// feed-forward, then a final norm. Causality is a per-call property so the
// same stack serves the bidirectional text encoder and the causal decoder.
struct StackConfig {
    int layers = 2;
    int width = 64;
    int ffn_width = 256;
    int heads = 2;
    double rope_base = 10000.0;

    int head_dim() const { return width / heads; }

    void validate() const {
        if (width % heads != 0)
            throw std::invalid_argument("stack: width must be divisible by heads");
        if (head_dim() % 2 != 0)
            throw std::invalid_argument("stack: head_dim must be even for rotary");
    }
};

template <typename S>
struct StackLayer {
    RmsNorm<S> norm1;
    Linear<S> qkv;       // d -> 3d, fused q|k|v
    Linear<S> attn_out;  // d -> d
    RmsNorm<S> norm2;
    Linear<S> gate_up;   // d -> 2f, fused gate|up
    Linear<S> down;      // f -> d

    void collect(ParamList<S>& out) {
        norm1.collect(out);
        qkv.collect(out);
        attn_out.collect(out);
        norm2.collect(out);
        gate_up.collect(out);
        down.collect(out);
    }
};

// Activation caches for one batched forward (sequences concatenated row-wise).
template <typename S>
struct StackCache {
    std::vector<int> offsets;  // seq s occupies rows [offsets[s], offsets[s+1])
    std::vector<int> pos;      // absolute position ids per row
    bool causal = true;
    RopeTable<S> rope;

    struct LayerCache {
        Mat<S> x_in;       // residual stream entering the layer
        Mat<S> norm1_out;
        typename RmsNorm<S>::Cache norm1_c;
        typename Linear<S>::Cache qkv_c;
        Mat<S> qkv;        // rotated q,k and raw v
        std::vector<Mat<S>> probs;  // [seq*heads + h], T x T
        Mat<S> ctx;        // pre-projection attention context
        typename Linear<S>::Cache attn_out_c;
        Mat<S> x_mid;      // after attention residual
        Mat<S> norm2_out;
        typename RmsNorm<S>::Cache norm2_c;
        typename Linear<S>::Cache gate_up_c;
        Mat<S> gu;         // pre-activation gate|up
        Mat<S> sig;        // sigmoid(gate), cached for backward
        Mat<S> act;        // silu(gate) * up
        typename Linear<S>::Cache down_c;
    };
    std::vector<LayerCache> layers;
    Mat<S> final_in;
    typename RmsNorm<S>::Cache final_c;
};

template <typename S>
class TransformerStack {
public:
    void init(const std::string& name, const StackConfig& cfg) {
        cfg.validate();
        cfg_ = cfg;
        layers_.resize(cfg.layers);
        for (int l = 0; l < cfg.layers; ++l) {
            std::string p = name + ".layer" + std::to_string(l);
            layers_[l].norm1.init(p + ".norm1", cfg.width);
            layers_[l].qkv.init(p + ".qkv", 3 * cfg.width, cfg.width, false);
            layers_[l].attn_out.init(p + ".attn_out", cfg.width, cfg.width, false);
            layers_[l].norm2.init(p + ".norm2", cfg.width);
            layers_[l].gate_up.init(p + ".gate_up", 2 * cfg.ffn_width, cfg.width, false);
            layers_[l].down.init(p + ".down", cfg.width, cfg.ffn_width, false);
        }
        final_norm_.init(name + ".final_norm", cfg.width);
    }

    const StackConfig& config() const { return cfg_; }
    std::vector<StackLayer<S>>& layers() { return layers_; }
    const std::vector<StackLayer<S>>& layers_const() const { return layers_; }

    void collect(ParamList<S>& out) {
        for (auto& l : layers_) l.collect(out);
        final_norm_.collect(out);
    }

    void random_init(Rng& rng, double stddev) {
        double resid_std = stddev / std::sqrt(2.0 * cfg_.layers);
        for (auto& l : layers_) {
            init_normal(l.qkv.w, rng, stddev);
            init_normal(l.attn_out.w, rng, resid_std);
            init_normal(l.gate_up.w, rng, stddev);
            init_normal(l.down.w, rng, resid_std);
        }
    }

    // x: concatenated sequences; offsets/pos/causal already set in cache.
    // Returns final-normed hidden states for every row.
    void forward(const Mat<S>& x, StackCache<S>& cache, Mat<S>& out) const {
        const int d = cfg_.width, f = cfg_.ffn_width;
        const int heads = cfg_.heads, hd = cfg_.head_dim();
        const S scale = S(1) / (S)std::sqrt((double)hd);
        const int n_seq = (int)cache.offsets.size() - 1;

        cache.rope.build(cache.pos, hd, cfg_.rope_base);
        cache.layers.resize(layers_.size());

        Mat<S> x_cur = x;
        for (size_t li = 0; li < layers_.size(); ++li) {
            const auto& layer = layers_[li];
            auto& lc = cache.layers[li];
            lc.x_in = x_cur;

            layer.norm1.forward(lc.x_in, lc.norm1_out, &lc.norm1_c);
            layer.qkv.forward(lc.norm1_out, lc.qkv, &lc.qkv_c);
            rope_apply(lc.qkv, cache.rope, 0, heads, hd, false);      // q
            rope_apply(lc.qkv, cache.rope, d, heads, hd, false);      // k
            lc.ctx.resize_uninit(x_cur.rows(), d);
            lc.probs.resize((size_t)n_seq * heads);

            for (int s = 0; s < n_seq; ++s) {
                int r0 = cache.offsets[s], r1 = cache.offsets[s + 1];
                int t = r1 - r0;
                if (t == 0) continue;
                for (int h = 0; h < heads; ++h) {
                    const S* q = lc.qkv.data() + (size_t)r0 * 3 * d + h * hd;
                    const S* k = lc.qkv.data() + (size_t)r0 * 3 * d + d + h * hd;
                    const S* v = lc.qkv.data() + (size_t)r0 * 3 * d + 2 * d + h * hd;
                    Mat<S>& p = lc.probs[(size_t)s * heads + h];
                    p.resize_uninit(t, t);
                    gemm(false, true, t, t, hd, scale, q, 3 * d, k, 3 * d, S(0),
                         p.data(), t);
                    for (int i = 0; i < t; ++i) {
                        S* prow = p.data() + (size_t)i * t;
                        int limit = cache.causal ? i + 1 : t;
                        softmax_inplace(prow, limit);
                        for (int j = limit; j < t; ++j) prow[j] = S(0);
                    }
                    S* ctx = lc.ctx.data() + (size_t)r0 * d + h * hd;
                    gemm(false, false, t, hd, t, S(1), p.data(), t, v, 3 * d, S(0),
                         ctx, d);
                }
            }

            Mat<S> attn_proj;
            layer.attn_out.forward(lc.ctx, attn_proj, &lc.attn_out_c);
            lc.x_mid.resize_uninit(x_cur.rows(), d);
            for (size_t i = 0; i < lc.x_mid.size(); ++i)
                lc.x_mid.data()[i] = lc.x_in.data()[i] + attn_proj.data()[i];

            layer.norm2.forward(lc.x_mid, lc.norm2_out, &lc.norm2_c);
            layer.gate_up.forward(lc.norm2_out, lc.gu, &lc.gate_up_c);
            lc.act.resize_uninit(x_cur.rows(), f);
            lc.sig.resize_uninit(x_cur.rows(), f);
            for (int i = 0; i < x_cur.rows(); ++i) {
                const S* g = lc.gu.data() + (size_t)i * 2 * f;
                const S* u = g + f;
                S* a = lc.act.data() + (size_t)i * f;
                S* sg_row = lc.sig.data() + (size_t)i * f;
                for (int j = 0; j < f; ++j) {
                    S sg = S(1) / (S(1) + std::exp(-g[j]));
                    sg_row[j] = sg;
                    a[j] = g[j] * sg * u[j];
                }
            }
            Mat<S> ffn_out;
            layer.down.forward(lc.act, ffn_out, &lc.down_c);
            for (size_t i = 0; i < x_cur.size(); ++i)
                x_cur.data()[i] = lc.x_mid.data()[i] + ffn_out.data()[i];
        }

        cache.final_in = x_cur;
        final_norm_.forward(cache.final_in, out, &cache.final_c);
    }

    // dout: gradient w.r.t. forward()'s output. Returns gradient w.r.t. x.
    void backward(const StackCache<S>& cache, const Mat<S>& dout, Mat<S>& dx) {
        const int d = cfg_.width, f = cfg_.ffn_width;
        const int heads = cfg_.heads, hd = cfg_.head_dim();
        const S scale = S(1) / (S)std::sqrt((double)hd);
        const int n_seq = (int)cache.offsets.size() - 1;

        Mat<S> dcur;
        final_norm_.backward(cache.final_in, dout, cache.final_c, dcur, false);

        for (int li = (int)layers_.size() - 1; li >= 0; --li) {
            auto& layer = layers_[li];
            const auto& lc = cache.layers[li];
            int n = lc.x_in.rows();

            // FFN branch: dcur is d(x_out) = d(x_mid) + d(ffn_out).
            Mat<S> dact;
            layer.down.backward(lc.act, dcur, dact, &lc.down_c, false);
            Mat<S> dgu;
            dgu.resize_uninit(n, 2 * f);
            for (int i = 0; i < n; ++i) {
                const S* g = lc.gu.data() + (size_t)i * 2 * f;
                const S* u = g + f;
                const S* da = dact.data() + (size_t)i * f;
                const S* sg_row = lc.sig.data() + (size_t)i * f;
                S* dg = dgu.data() + (size_t)i * 2 * f;
                S* du = dg + f;
                for (int j = 0; j < f; ++j) {
                    S sg = sg_row[j];
                    S silu = g[j] * sg;
                    dg[j] = da[j] * u[j] * (sg + silu * (S(1) - sg));
                    du[j] = da[j] * silu;
                }
            }
            Mat<S> dnorm2;
            layer.gate_up.backward(lc.norm2_out, dgu, dnorm2, &lc.gate_up_c, false);
            // dcur becomes d(x_mid): residual passthrough + norm2 path.
            layer.norm2.backward(lc.x_mid, dnorm2, lc.norm2_c, dcur, true);

            // Attention branch: d(x_mid) = d(x_in) + d(attn_proj).
            Mat<S> dctx;
            layer.attn_out.backward(lc.ctx, dcur, dctx, &lc.attn_out_c, false);
            Mat<S> dqkv(n, 3 * d);
            dqkv.fill(S(0));
            for (int s = 0; s < n_seq; ++s) {
                int r0 = cache.offsets[s], r1 = cache.offsets[s + 1];
                int t = r1 - r0;
                if (t == 0) continue;
                for (int h = 0; h < heads; ++h) {
                    const Mat<S>& p = lc.probs[(size_t)s * heads + h];
                    const S* q = lc.qkv.data() + (size_t)r0 * 3 * d + h * hd;
                    const S* k = lc.qkv.data() + (size_t)r0 * 3 * d + d + h * hd;
                    const S* v = lc.qkv.data() + (size_t)r0 * 3 * d + 2 * d + h * hd;
                    const S* dc = dctx.data() + (size_t)r0 * d + h * hd;
                    S* dq = dqkv.data() + (size_t)r0 * 3 * d + h * hd;
                    S* dk = dqkv.data() + (size_t)r0 * 3 * d + d + h * hd;
                    S* dv = dqkv.data() + (size_t)r0 * 3 * d + 2 * d + h * hd;

                    Mat<S> dp(t, t);
                    gemm(false, true, t, t, hd, S(1), dc, d, v, 3 * d, S(0),
                         dp.data(), t);
                    gemm(true, false, t, hd, t, S(1), p.data(), t, dc, d, S(1), dv,
                         3 * d);
                    // Softmax backward, rows (masked cells have p == 0).
                    Mat<S> ds(t, t);
                    for (int i = 0; i < t; ++i) {
                        const S* pr = p.data() + (size_t)i * t;
                        const S* dpr = dp.data() + (size_t)i * t;
                        S* dsr = ds.data() + (size_t)i * t;
                        S dot = S(0);
                        for (int j = 0; j < t; ++j) dot += dpr[j] * pr[j];
                        for (int j = 0; j < t; ++j) dsr[j] = pr[j] * (dpr[j] - dot);
                    }
                    gemm(false, false, t, hd, t, scale, ds.data(), t, k, 3 * d, S(1),
                         dq, 3 * d);
                    gemm(true, false, t, hd, t, scale, ds.data(), t, q, 3 * d, S(1),
                         dk, 3 * d);
                }
            }
            rope_apply(dqkv, cache.rope, 0, heads, hd, true);
            rope_apply(dqkv, cache.rope, d, heads, hd, true);
            Mat<S> dnorm1;
            layer.qkv.backward(lc.norm1_out, dqkv, dnorm1, &lc.qkv_c, false);
            layer.norm1.backward(lc.x_in, dnorm1, lc.norm1_c, dcur, true);
        }
        dx = std::move(dcur);
    }

    RmsNorm<S>& final_norm() { return final_norm_; }
    const RmsNorm<S>& final_norm() const { return final_norm_; }

    // Incremental decoding state: per-layer K/V caches over appended tokens.
    struct DecodeState {
        std::vector<Mat<S>> k_cache, v_cache;  // per layer, capacity x d
        int len = 0;
        std::vector<int> pos;

        void reset(const StackConfig& cfg, int capacity) {
            k_cache.assign(cfg.layers, Mat<S>(capacity, cfg.width));
            v_cache.assign(cfg.layers, Mat<S>(capacity, cfg.width));
            len = 0;
            pos.clear();
            pos.reserve(capacity);
        }
    };

    // Appends a chunk of embedded tokens (causal within the chunk, full
    // attention to the cache) and returns the final-normed hidden states of
    // the appended rows.
    void decode_append(DecodeState& st, const Mat<S>& x,
                       std::span<const int> positions, Mat<S>& out) const {
        const int d = cfg_.width, f = cfg_.ffn_width;
        const int heads = cfg_.heads, hd = cfg_.head_dim();
        const S scale = S(1) / (S)std::sqrt((double)hd);
        const int t = x.rows();
        if (t == 0) {
            out.resize(0, d);
            return;
        }
        if (st.len + t > st.k_cache[0].rows())
            throw std::length_error("decode_append: cache capacity exceeded");

        RopeTable<S> rope;
        rope.build(positions, hd, cfg_.rope_base);
        for (int i = 0; i < t; ++i) st.pos.push_back(positions[i]);

        Mat<S> x_cur = x;
        Mat<S> normed, qkv, ctx, attn_proj, gu, act, ffn_out, scores;
        for (size_t li = 0; li < layers_.size(); ++li) {
            const auto& layer = layers_[li];
            layer.norm1.forward(x_cur, normed, nullptr);
            layer.qkv.forward(normed, qkv, nullptr);
            rope_apply(qkv, rope, 0, heads, hd, false);
            rope_apply(qkv, rope, d, heads, hd, false);

            Mat<S>& kc = st.k_cache[li];
            Mat<S>& vc = st.v_cache[li];
            for (int i = 0; i < t; ++i) {
                const S* src = qkv.data() + (size_t)i * 3 * d;
                std::copy(src + d, src + 2 * d, kc.data() + (size_t)(st.len + i) * d);
                std::copy(src + 2 * d, src + 3 * d,
                          vc.data() + (size_t)(st.len + i) * d);
            }

            ctx.resize_uninit(t, d);
            int total = st.len + t;
            for (int h = 0; h < heads; ++h) {
                const S* q = qkv.data() + h * hd;
                scores.resize_uninit(t, total);
                gemm(false, true, t, total, hd, scale, q, 3 * d,
                     kc.data() + h * hd, d, S(0), scores.data(), total);
                for (int i = 0; i < t; ++i) {
                    S* srow = scores.data() + (size_t)i * total;
                    int limit = st.len + i + 1;  // causal: own position inclusive
                    softmax_inplace(srow, limit);
                    for (int j = limit; j < total; ++j) srow[j] = S(0);
                }
                gemm(false, false, t, hd, total, S(1), scores.data(), total,
                     vc.data() + h * hd, d, S(0), ctx.data() + h * hd, d);
            }

            layer.attn_out.forward(ctx, attn_proj, nullptr);
            for (size_t i = 0; i < x_cur.size(); ++i)
                x_cur.data()[i] += attn_proj.data()[i];

            layer.norm2.forward(x_cur, normed, nullptr);
            layer.gate_up.forward(normed, gu, nullptr);
            act.resize_uninit(t, f);
            for (int i = 0; i < t; ++i) {
                const S* g = gu.data() + (size_t)i * 2 * f;
                const S* u = g + f;
                S* a = act.data() + (size_t)i * f;
                for (int j = 0; j < f; ++j) {
                    S sg = S(1) / (S(1) + std::exp(-g[j]));
                    a[j] = g[j] * sg * u[j];
                }
            }
            layer.down.forward(act, ffn_out, nullptr);
            for (size_t i = 0; i < x_cur.size(); ++i)
                x_cur.data()[i] += ffn_out.data()[i];
        }
        st.len += t;
        final_norm_.forward(x_cur, out, nullptr);
    }

private:
    StackConfig cfg_;
    std::vector<StackLayer<S>> layers_;
    RmsNorm<S> final_norm_;
};

// ---------------------------------------------------------------------------
// Adam with bias correction, applied after an optional global-norm clip.
template <typename S>
class Adam {
public:
    double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;

    void attach(const ParamList<S>& params) {
        m_.clear();
        v_.clear();
        for (auto* p : params) {
            m_.emplace_back((int)p->w.rows(), (int)p->w.cols());
            v_.emplace_back((int)p->w.rows(), (int)p->w.cols());
        }
        t_ = 0;
    }

    int step_count() const { return t_; }
    void set_step_count(int t) { t_ = t; }

    // Returns the pre-clip global gradient norm. Fixed-order reduction with
    // unrolled accumulators (vectorizer-friendly, still deterministic).
    double clip_global_norm(const ParamList<S>& params, double max_norm) {
        double sq = 0.0;
        for (auto* p : params) {
            const S* g = p->g.data();
            size_t n = p->g.size();
            S acc[8] = {};
            size_t i = 0;
            for (; i + 8 <= n; i += 8)
                for (int j = 0; j < 8; ++j) acc[j] += g[i + j] * g[i + j];
            S tail = S(0);
            for (; i < n; ++i) tail += g[i] * g[i];
            double part = (double)tail;
            for (int j = 0; j < 8; ++j) part += (double)acc[j];
            sq += part;
        }
        double norm = std::sqrt(sq);
        if (max_norm > 0 && norm > max_norm) {
            S s = (S)(max_norm / norm);
            for (auto* p : params) {
                S* g = p->g.data();
                for (size_t i = 0; i < p->g.size(); ++i) g[i] *= s;
            }
        }
        return norm;
    }

    void step(const ParamList<S>& params, double lr) {
        ++t_;
        const S b1 = (S)beta1, b2 = (S)beta2;
        const S ib1 = S(1) - b1, ib2 = S(1) - b2;
        const S inv_bc1 = (S)(1.0 / (1.0 - std::pow(beta1, t_)));
        const S inv_bc2 = (S)(1.0 / (1.0 - std::pow(beta2, t_)));
        const S step_lr = (S)lr, e = (S)eps;
        for (size_t pi = 0; pi < params.size(); ++pi) {
            Param<S>* p = params[pi];
            S* w = p->w.data();
            const S* g = p->g.data();
            S* m = m_[pi].data();
            S* v = v_[pi].data();
            size_t n = p->w.size();
            for (size_t i = 0; i < n; ++i) {
                m[i] = b1 * m[i] + ib1 * g[i];
                v[i] = b2 * v[i] + ib2 * g[i] * g[i];
                w[i] -= step_lr * (m[i] * inv_bc1) /
                        (std::sqrt(v[i] * inv_bc2) + e);
            }
        }
    }

    std::vector<Mat<S>>& moments_m() { return m_; }
    std::vector<Mat<S>>& moments_v() { return v_; }

private:
    std::vector<Mat<S>> m_, v_;
    int t_ = 0;
};

}  // namespace codeclm::nn
