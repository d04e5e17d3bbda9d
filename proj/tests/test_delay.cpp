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

#include <map>

#include "codeclm/delay.hpp"
#include "codeclm/rng.hpp"

using namespace codeclm;

namespace {

AcousticGrid random_grid(Rng& rng, int t, int k, int at_size) {
    AcousticGrid g(t, k);
    for (auto& v : g.tokens) v = rng.uniform_int(at_size);
    return g;
}

}  // namespace

TEST_CASE("delay layout for T=2, K=3") {
    TokenVocabulary v(10, 8, 3);
    const TokenId F = v.a_fill();
    // Rows: a=codebook0, b=codebook1, c=codebook2; values encode (frame+1).
    AcousticGrid g(2, 3);
    TokenId a1 = 1, b1 = 2, c1 = 3, a2 = 4, b2 = 5, c2 = 6;
    g.at(0, 0) = a1; g.at(0, 1) = b1; g.at(0, 2) = c1;
    g.at(1, 0) = a2; g.at(1, 1) = b2; g.at(1, 2) = c2;

    DelayedGrid d = apply_delay(g, v);
    CHECK(d.rows() == 4);
    CHECK(head_targets(d, 0) == std::vector<TokenId>{a1, F, F});
    CHECK(head_targets(d, 1) == std::vector<TokenId>{a2, b1, F});
    CHECK(head_targets(d, 2) == std::vector<TokenId>{F, b2, c1});
    CHECK(head_targets(d, 3) == std::vector<TokenId>{F, F, c2});

    CHECK(remove_delay(d, v) == g);
}

TEST_CASE("single codebook is a no-op delay") {
    TokenVocabulary v(10, 8, 1);
    Rng rng(7);
    AcousticGrid g = random_grid(rng, 5, 1, 8);
    DelayedGrid d = apply_delay(g, v);
    CHECK(d.rows() == 5);
    for (int t = 0; t < 5; ++t) CHECK(d.at(t, 0) == g.at(t, 0));
    CHECK(remove_delay(d, v) == g);
}

TEST_CASE("empty time axis delays to an all-fill (K-1)xK grid") {
    TokenVocabulary v(10, 8, 4);
    AcousticGrid g(0, 4);
    DelayedGrid d = apply_delay(g, v);
    CHECK(d.rows() == 3);
    for (int r = 0; r < d.rows(); ++r)
        for (int k = 0; k < 4; ++k) CHECK(d.at(r, k) == v.a_fill());
    AcousticGrid back = remove_delay(d, v);
    CHECK(back.frames == 0);
}

TEST_CASE("fill structure: k leading and K-1-k trailing fills per column") {
    TokenVocabulary v(10, 8, 5);
    Rng rng(11);
    AcousticGrid g = random_grid(rng, 9, 5, 8);
    DelayedGrid d = apply_delay(g, v);
    int fills = 0;
    for (int k = 0; k < 5; ++k) {
        for (int r = 0; r < d.rows(); ++r) {
            bool fill = d.at(r, k) == v.a_fill();
            bool expected = r < k || r >= k + g.frames;
            CHECK(fill == expected);
            fills += fill ? 1 : 0;
        }
    }
    CHECK(fills == 5 * 4);  // K(K-1)
}

TEST_CASE("apply_delay preserves each column's token multiset") {
    TokenVocabulary v(10, 8, 4);
    Rng rng(13);
    AcousticGrid g = random_grid(rng, 20, 4, 8);
    DelayedGrid d = apply_delay(g, v);
    for (int k = 0; k < 4; ++k) {
        std::map<TokenId, int> want, got;
        for (int t = 0; t < g.frames; ++t) ++want[g.at(t, k)];
        for (int r = 0; r < d.rows(); ++r)
            if (d.at(r, k) != v.a_fill()) ++got[d.at(r, k)];
        CHECK(want == got);
    }
}

TEST_CASE("round-trip identity over random shapes") {
    Rng rng(999);
    for (int trial = 0; trial < 300; ++trial) {
        int k = 1 + rng.uniform_int(12);
        int t = rng.uniform_int(201);
        TokenVocabulary v(10, 8, k);
        AcousticGrid g = random_grid(rng, t, k, 8);
        CHECK(remove_delay(apply_delay(g, v), v) == g);
    }
}

TEST_CASE("head 12's first data token is frame 1 of codebook 12") {
    TokenVocabulary v(10, 8, 12);
    Rng rng(5);
    AcousticGrid g = random_grid(rng, 12, 12, 8);
    DelayedGrid d = apply_delay(g, v);
    auto row = head_targets(d, 11);  // step 12, 1-indexed
    CHECK(row[11] == g.at(0, 11));
    for (int k = 0; k < 12; ++k) CHECK(row[k] == g.at(11 - k, k));
}

TEST_CASE("malformed fill structure is rejected with the violating cell") {
    TokenVocabulary v(10, 8, 3);
    Rng rng(21);
    AcousticGrid g = random_grid(rng, 4, 3, 8);
    DelayedGrid d = apply_delay(g, v);
    d.at(0, 2) = 3;  // should be a leading fill
    CHECK_THROWS_WITH_AS(remove_delay(d, v), doctest::Contains("row 0"),
                         std::invalid_argument);

    DelayedGrid d2 = apply_delay(g, v);
    d2.at(2, 1) = v.a_fill();  // fill in a data position
    CHECK_THROWS_AS(remove_delay(d2, v), std::invalid_argument);
}

TEST_CASE("head_targets rejects out-of-range steps") {
    TokenVocabulary v(10, 8, 3);
    AcousticGrid g(2, 3);
    DelayedGrid d = apply_delay(g, v);
    CHECK_THROWS_AS(head_targets(d, -1), std::out_of_range);
    CHECK_THROWS_AS(head_targets(d, d.rows()), std::out_of_range);
}
