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

#include <vector>

#include "codeclm/blas.hpp"
#include "codeclm/rng.hpp"

using namespace codeclm;

namespace {

// Cross-checks the dispatched backend against the plain-loop reference on a
// given shape, including alpha/beta accumulation.
void check_shape(Rng& rng, bool ta, bool tb, int m, int n, int k, float alpha,
                 float beta) {
    std::vector<float> a((size_t)m * k), b((size_t)k * n);
    for (auto& x : a) x = (float)rng.normal(0, 1);
    for (auto& x : b) x = (float)rng.normal(0, 1);
    std::vector<float> c0((size_t)m * n), c1;
    for (auto& x : c0) x = (float)rng.normal(0, 1);
    c1 = c0;

    int lda = ta ? m : k, ldb = tb ? k : n;
    gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c0.data(), n);
    gemm_reference(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta,
                   c1.data(), n);

    double worst = 0;
    for (size_t i = 0; i < c0.size(); ++i)
        worst = std::max(worst, (double)std::abs(c0[i] - c1[i]));
    // fp32 with K up to 300: generous but meaningful bound.
    CHECK(worst < 1e-3);
}

}  // namespace

TEST_CASE("backend agrees with the reference kernel on small shapes") {
    Rng rng(606);
    check_shape(rng, false, false, 7, 5, 9, 1.0f, 0.0f);
    check_shape(rng, false, true, 12, 8, 16, 1.0f, 0.0f);
    check_shape(rng, true, false, 8, 12, 10, 1.0f, 1.0f);
    check_shape(rng, true, true, 6, 6, 6, 0.5f, 0.25f);
    check_shape(rng, false, false, 1, 1, 1, 2.0f, 3.0f);
}

TEST_CASE("backend agrees with the reference kernel above the split threshold") {
    // 300*300*300 = 27M > the row-split threshold; exercises the two-way
    // split including transposed-A splitting.
    Rng rng(707);
    check_shape(rng, false, false, 300, 300, 300, 1.0f, 0.0f);
    check_shape(rng, false, true, 300, 300, 300, 1.0f, 1.0f);
    check_shape(rng, true, false, 300, 300, 300, 1.0f, 0.0f);
}

TEST_CASE("k = 0 behaves as a beta scale") {
    std::vector<float> c = {2.0f, 4.0f};
    gemm(false, false, 1, 2, 0, 1.0f, nullptr, 1, nullptr, 2, 0.5f, c.data(), 2);
    CHECK(c[0] == doctest::Approx(1.0f));
    CHECK(c[1] == doctest::Approx(2.0f));
}
