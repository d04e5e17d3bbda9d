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

#include <string>

namespace codeclm {

// C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is MxK, op(B) is KxN, C is MxN. lda/ldb/ldc are row strides of the
// stored (untransposed) arrays.
//
// Backed by OpenBLAS when available (loaded at first use), otherwise by a
// built-in blocked kernel. Results are deterministic for a fixed backend
// and thread count.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

// Name of the backend actually in use ("openblas" or "builtin").
std::string gemm_backend();

// The built-in fallback kernel, exposed so tests can cross-check whatever
// backend gemm() dispatches to against a plain-loop implementation.
void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                    const float* a, int lda, const float* b, int ldb, float beta,
                    float* c, int ldc);
void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta,
                    double* c, int ldc);

}  // namespace codeclm
