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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "codeclm/backbone.hpp"
#include "test_util.hpp"

using namespace codeclm;

namespace {

Backbone<float> make_backbone(int layers = 3, int k = 4, uint64_t seed = 17) {
    BackboneConfig cfg;
    cfg.layers = layers;
    cfg.width = 32;
    cfg.ffn_width = 64;
    cfg.heads = 2;
    cfg.text_budget = 8;
    cfg.st_at_budget = 40;
    TokenVocabulary vocab(20, 9, k);
    Backbone<float> bb;
    bb.init(cfg, vocab);
    Rng rng(seed);
    bb.random_init(rng);
    return bb;
}

Mat<float> random_input(Rng& rng, int t, int d) {
    Mat<float> x(t, d);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = (float)rng.normal(0, 1);
    return x;
}

}  // namespace

TEST_CASE("embed_step: equal acoustic rows embed equally; K=1 is a plain lookup") {
    auto bb = make_backbone(2, 3);
    std::vector<TokenId> row = {1, 4, 7};
    auto e1 = bb.embed_step(StepKind::At, {}, row);
    auto e2 = bb.embed_step(StepKind::At, {}, row);
    CHECK(e1 == e2);

    auto bb1 = make_backbone(2, 1);
    std::vector<TokenId> single = {5};
    auto e = bb1.embed_step(StepKind::At, {}, single);
    const auto& table = bb1.token_embedding().w;
    int r = bb1.vocab().at_row(0, 5);
    for (int j = 0; j < (int)e.size(); ++j) CHECK(e[j] == table(r, j));
}

TEST_CASE("embed_step: permuting values across codebooks changes the embedding") {
    auto bb = make_backbone(2, 3);
    std::vector<TokenId> a = {1, 4, 7};
    std::vector<TokenId> b = {4, 1, 7};  // same multiset, different columns
    CHECK(bb.embed_step(StepKind::At, {}, a) != bb.embed_step(StepKind::At, {}, b));
}

TEST_CASE("embed_step: fills use the fill embedding and st uses the table") {
    auto bb = make_backbone(2, 3);
    const auto& v = bb.vocab();
    std::vector<TokenId> all_fill(3, v.a_fill());
    auto e = bb.embed_step(StepKind::At, {}, all_fill);
    std::vector<float> expect(32, 0.0f);
    for (int k = 0; k < 3; ++k) {
        int r = v.at_row(k, v.a_fill());
        for (int j = 0; j < 32; ++j) expect[j] += bb.token_embedding().w(r, j);
    }
    for (int j = 0; j < 32; ++j) CHECK(e[j] == doctest::Approx(expect[j]));

    std::vector<TokenId> st_id = {7};
    auto es = bb.embed_step(StepKind::St, {}, st_id);
    for (int j = 0; j < 32; ++j)
        CHECK(es[j] == bb.token_embedding().w(v.st_row(7), j));

    CHECK_THROWS_AS(bb.embed_step(StepKind::St, {}, std::vector<TokenId>{99}),
                    std::invalid_argument);
}

TEST_CASE("causality: perturbing step t leaves hidden states before t bit-identical") {
    for (int layers : {1, 2, 4}) {
        auto bb = make_backbone(layers);
        Rng rng(31);
        int t_len = 12;
        Mat<float> x = random_input(rng, t_len, 32);
        nn::StackCache<float> cache;
        cache.offsets = {0, t_len};
        cache.pos.resize(t_len);
        for (int i = 0; i < t_len; ++i) cache.pos[i] = i;
        Mat<float> h1;
        bb.forward(x, cache, h1, true);

        int t_perturb = 7;
        Mat<float> x2 = x;
        for (int j = 0; j < 32; ++j) x2(t_perturb, j) += 1.25f;
        nn::StackCache<float> cache2;
        cache2.offsets = cache.offsets;
        cache2.pos = cache.pos;
        Mat<float> h2;
        bb.forward(x2, cache2, h2, true);

        for (int i = 0; i < t_perturb; ++i)
            for (int j = 0; j < 32; ++j) CHECK(h1(i, j) == h2(i, j));
        // And the perturbed step itself does change.
        bool changed = false;
        for (int j = 0; j < 32; ++j) changed |= h1(t_perturb, j) != h2(t_perturb, j);
        CHECK(changed);
    }
}

TEST_CASE("single-step sequences and repeat determinism") {
    auto bb = make_backbone();
    Rng rng(41);
    Mat<float> x = random_input(rng, 1, 32);
    nn::StackCache<float> c1, c2;
    c1.offsets = c2.offsets = {0, 1};
    c1.pos = c2.pos = {0};
    Mat<float> h1, h2;
    bb.forward(x, c1, h1, true);
    bb.forward(x, c2, h2, true);
    CHECK(h1.rows() == 1);
    CHECK(h1 == h2);
    for (int j = 0; j < 32; ++j) CHECK(std::isfinite(h1(0, j)));
}

TEST_CASE("over-length sequences are rejected") {
    auto bb = make_backbone();
    int too_long = bb.config().max_seq() + 1;
    Rng rng(43);
    Mat<float> x = random_input(rng, too_long, 32);
    nn::StackCache<float> c;
    c.offsets = {0, too_long};
    c.pos.resize(too_long);
    for (int i = 0; i < too_long; ++i) c.pos[i] = i;
    Mat<float> h;
    CHECK_THROWS_AS(bb.forward(x, c, h, true), std::length_error);
}

TEST_CASE("project_heads: zero hidden gives each head's bias; K heads emitted") {
    auto bb = make_backbone(2, 4);
    std::vector<float> zero(32, 0.0f);
    auto st = bb.project_heads(zero, StepKind::St);
    CHECK((int)st.st.size() == bb.vocab().st_size + 1);
    for (int c = 0; c < (int)st.st.size(); ++c)
        CHECK(st.st[c] == bb.st_head().b.w(0, c));

    auto at = bb.project_heads(zero, StepKind::At);
    CHECK((int)at.at.size() == 4);
    for (int k = 0; k < 4; ++k) {
        CHECK((int)at.at[k].size() == bb.vocab().at_size + 1);
        for (int c = 0; c < (int)at.at[k].size(); ++c)
            CHECK(at.at[k][c] == bb.at_heads()[k].b.w(0, c));
    }
}

TEST_CASE("twelve codebooks produce twelve head vectors") {
    auto bb = make_backbone(1, 12);
    std::vector<float> h(32, 0.1f);
    auto logits = bb.project_heads(h, StepKind::At);
    CHECK(logits.at.size() == 12);
}

TEST_CASE("distinct hidden states give distinct st logits") {
    auto bb = make_backbone();
    Rng rng(53);
    std::vector<float> h1(32), h2(32);
    for (auto& x : h1) x = (float)rng.normal(0, 1);
    for (auto& x : h2) x = (float)rng.normal(0, 1);
    auto l1 = bb.project_heads(h1, StepKind::St);
    auto l2 = bb.project_heads(h2, StepKind::St);
    CHECK(l1.st != l2.st);
}

TEST_CASE("parameter count matches the closed-form formula") {
    testutil::MicroSetup s;
    CodecLM<float> model;
    testutil::init_micro(model, s, 3);

    int64_t lm_expected = Backbone<float>::param_count(s.backbone, s.vocab);
    int64_t lm_actual = 0, enc_actual = 0;
    for (auto* p : model.params()) {
        if (p->name.rfind("lm.", 0) == 0)
            lm_actual += (int64_t)p->w.size();
        else
            enc_actual += (int64_t)p->w.size();
    }
    CHECK(lm_actual == lm_expected);

    // Encoder: char table + same trunk formula + adapters + null embedding.
    int64_t d = s.encoder.width, f = s.encoder.ffn_width;
    int64_t per_layer = d + 3 * d * d + d * d + d + 2 * f * d + f * d;
    int64_t enc_expected = (int64_t)s.chars.size() * d + s.encoder.layers * per_layer +
                           d +
                           (int64_t)s.encoder.layers * 2 *
                               (d * s.encoder.lora_rank + s.encoder.lora_rank * d) +
                           d;
    CHECK(enc_actual == enc_expected);
    CHECK(model.param_count() == lm_expected + enc_expected);
}

TEST_CASE("incremental decoding matches full forward") {
    auto bb = make_backbone(3);
    Rng rng(61);
    int t_len = 10;
    Mat<float> x = random_input(rng, t_len, 32);
    nn::StackCache<float> cache;
    cache.offsets = {0, t_len};
    cache.pos.resize(t_len);
    for (int i = 0; i < t_len; ++i) cache.pos[i] = i;
    Mat<float> full;
    bb.forward(x, cache, full, true);

    nn::TransformerStack<float>::DecodeState st;
    st.reset(bb.stack().config(), 64);
    Mat<float> out;
    // Prefill 6 rows, then single steps.
    Mat<float> chunk(6, 32);
    for (int i = 0; i < 6; ++i)
        std::copy_n(x.data() + (size_t)i * 32, 32, chunk.data() + (size_t)i * 32);
    std::vector<int> pos = {0, 1, 2, 3, 4, 5};
    bb.stack().decode_append(st, chunk, pos, out);
    for (int j = 0; j < 32; ++j)
        CHECK(out(5, j) == doctest::Approx(full(5, j)).epsilon(1e-4));
    for (int i = 6; i < t_len; ++i) {
        Mat<float> one(1, 32);
        std::copy_n(x.data() + (size_t)i * 32, 32, one.data());
        std::vector<int> p1 = {i};
        bb.stack().decode_append(st, one, p1, out);
        for (int j = 0; j < 32; ++j)
            CHECK(out(0, j) == doctest::Approx(full(i, j)).epsilon(1e-4));
    }
}
