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

#include <set>

#include "codeclm/corpus.hpp"
#include "codeclm/vocab.hpp"

using namespace codeclm;

namespace {

CorpusConfig small_cfg(uint64_t seed = 11) {
    CorpusConfig c;
    c.size = 24;
    c.speakers = 3;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("same seed reproduces the corpus bit for bit") {
    TokenVocabulary v(500, 64, 4);
    auto a = gen_corpus(small_cfg(), v);
    auto b = gen_corpus(small_cfg(), v);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].text == b[i].text);
        CHECK(a[i].st_raw == b[i].st_raw);
        CHECK(a[i].at == b[i].at);
    }
    auto c = gen_corpus(small_cfg(12), v);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) any_diff |= a[i].text != c[i].text;
    CHECK(any_diff);
}

TEST_CASE("oracle_st re-derives every stored sequence") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    for (const auto& u : gen_corpus(cfg, v)) {
        CHECK(oracle_st(u.text, cfg, v, u.speaker) == u.st_raw);
        CHECK(oracle_at(u.st_raw, cfg, v, u.speaker) == u.at);
    }
    CHECK(oracle_st("", cfg, v, 0).empty());
}

TEST_CASE("dedup of oracle sequences has no consecutive duplicates") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    for (const auto& u : gen_corpus(cfg, v)) {
        auto s = dedup_consecutive(u.st_raw, v);
        for (size_t i = 1; i < s.tokens.size(); ++i)
            CHECK(s.tokens[i] != s.tokens[i - 1]);
        CHECK(s.tokens.size() <= u.st_raw.size());
    }
}

TEST_CASE("hesitation markers run longer than ordinary characters") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    // A single-character text's raw sequence length IS that character's run
    // length; average over many (speaker) draws.
    const int n = 1500;
    double hes_total = 0, ord_total = 0;
    for (int i = 0; i < n; ++i) {
        hes_total += (double)oracle_st("~", cfg, v, i).size();
        std::string otext = {cfg.alphabet[i % cfg.alphabet.size()]};
        ord_total += (double)oracle_st(otext, cfg, v, i).size();
    }
    double hes_mean = hes_total / n;
    double ord_mean = ord_total / n;
    CHECK(hes_mean > ord_mean);
    CHECK(hes_mean > 2.5);
    CHECK(ord_mean < 2.2);
}

TEST_CASE("size one yields a single valid utterance") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    cfg.size = 1;
    auto utts = gen_corpus(cfg, v);
    REQUIRE(utts.size() == 1);
    const auto& u = utts[0];
    CHECK(!u.text.empty());
    CHECK(u.st_raw.size() >= u.text.size());
    for (TokenId t : u.st_raw) CHECK(v.is_st_data(t));
    CHECK(validate_grid(u.at, v).ok);
    CHECK(u.at.frames == (int)u.st_raw.size());
}

TEST_CASE("speaker signature: same speaker and semantics give identical grids") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    std::vector<TokenId> st = oracle_st("abca~", cfg, v, 1);
    CHECK(oracle_at(st, cfg, v, 1) == oracle_at(st, cfg, v, 1));
    // Different speakers disagree somewhere.
    AcousticGrid g1 = oracle_at(st, cfg, v, 1);
    AcousticGrid g2 = oracle_at(st, cfg, v, 2);
    CHECK(g1.tokens != g2.tokens);
}

TEST_CASE("speaker permutations are bijections of the codebook space") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    for (int spk = 0; spk < 3; ++spk)
        for (int k = 0; k < 4; ++k) {
            auto p = speaker_permutation(cfg, v, spk, k);
            std::set<TokenId> seen(p.begin(), p.end());
            CHECK((int)seen.size() == v.at_size);
            CHECK(*seen.begin() == 0);
            CHECK(*seen.rbegin() == v.at_size - 1);
        }
}

TEST_CASE("acoustic_codes agrees with oracle_at per frame") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    std::vector<TokenId> st = oracle_st("fed", cfg, v, 2);
    AcousticGrid g = oracle_at(st, cfg, v, 2);
    for (int t = 0; t < g.frames; ++t) {
        auto codes = acoustic_codes(cfg, v, st[t], 2);
        for (int k = 0; k < 4; ++k) CHECK(g.at(t, k) == codes[k]);
    }
}

TEST_CASE("pseudo-waveform expansion") {
    TokenVocabulary v(500, 64, 4);
    CorpusConfig cfg = small_cfg();
    AcousticGrid g(5, 4);
    for (int t = 0; t < 5; ++t)
        for (int k = 0; k < 4; ++k) g.at(t, k) = (3 * t + k) % 64;
    auto wave = render_pseudo_waveform(g, 16000, 320);
    CHECK(wave.size() == 5 * 320);
    for (float s : wave) {
        CHECK(std::isfinite(s));
        CHECK(std::abs(s) <= 1.0f);
    }

    CHECK(render_pseudo_waveform(AcousticGrid(0, 4), 16000, 320).empty());

    // Identical frames produce identical sample blocks.
    AcousticGrid rep(2, 4);
    for (int k = 0; k < 4; ++k) {
        rep.at(0, k) = 7 + k;
        rep.at(1, k) = 7 + k;
    }
    auto w2 = render_pseudo_waveform(rep, 16000, 320);
    for (int j = 0; j < 320; ++j) CHECK(w2[j] == w2[320 + j]);
}

TEST_CASE("corpus records round-trip through the record format") {
    TokenVocabulary v(500, 64, 4);
    auto utts = gen_corpus(small_cfg(), v);
    auto recs = to_records(utts);
    for (size_t i = 0; i < recs.size(); ++i) {
        UtteranceRecord back = parse_record(format_record(recs[i]));
        CHECK(back == recs[i]);
        CHECK(back.speaker == utts[i].speaker);
    }
}
