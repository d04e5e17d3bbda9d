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

#include "codeclm/blas.hpp"

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#if defined(__unix__) || defined(__APPLE__)
#include <dlfcn.h>
#define CODECLM_HAVE_DLOPEN 1
#endif

namespace codeclm {
namespace {

// CBLAS enums, by value (the header is not required at build time).
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*,
                          int, const float*, int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*,
                          int, const double*, int, double, double*, int);
using set_threads_fn = void (*)(int);

struct Backend {
    sgemm_fn sgemm = nullptr;
    dgemm_fn dgemm = nullptr;
    const char* name = "builtin";
};

#ifdef CODECLM_HAVE_DLOPEN
// OpenBLAS picks its kernels from CPUID in a library constructor, and this
// can land on a generic SSE2 kernel when the CPU model string is masked
// (common inside containers). OPENBLAS_CORETYPE overrides the detection but
// is snapshotted when the library loads, so it must be in the environment
// *before* dlopen. Loading lazily here, after setenv, wins that race; a
// build-time -lopenblas link cannot.
void pin_core_type() {
    if (std::getenv("OPENBLAS_CORETYPE")) return;
#if defined(__x86_64__) || defined(__i386__)
    if (__builtin_cpu_supports("avx512f"))
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
    else if (__builtin_cpu_supports("avx2"))
        setenv("OPENBLAS_CORETYPE", "HASWELL", 1);
#endif
}

Backend load_backend() {
    Backend b;
    pin_core_type();
    void* h = nullptr;
    for (const char* lib : {"libopenblas.so.0", "libopenblas.so", "libopenblas.dylib"}) {
        h = dlopen(lib, RTLD_NOW | RTLD_LOCAL);
        if (h) break;
    }
    if (!h) return b;
    auto* sg = reinterpret_cast<sgemm_fn>(dlsym(h, "cblas_sgemm"));
    auto* dg = reinterpret_cast<dgemm_fn>(dlsym(h, "cblas_dgemm"));
    if (sg && dg) {
        b.sgemm = sg;
        b.dgemm = dg;
        b.name = "openblas";
        // OpenBLAS's own pool synchronizes per call, which costs more than
        // it buys on the many small products (attention blocks, head
        // projections). Pin it to one thread; big multiplies are split
        // across our own worker below.
        auto* set = reinterpret_cast<set_threads_fn>(
            dlsym(h, "openblas_set_num_threads"));
        if (set) set(1);
    }
    return b;
}
#else
Backend load_backend() { return {}; }
#endif

const Backend& backend() {
    static Backend b = load_backend();
    return b;
}

// Persistent second worker for row-splitting large GEMMs. The split point
// is a pure function of the shape, so results are run-to-run deterministic.
class SplitWorker {
public:
    SplitWorker() {
        if (std::thread::hardware_concurrency() >= 2) {
            worker_ = std::thread([this] { loop(); });
            usable_ = true;
        }
    }
    ~SplitWorker() {
        if (usable_) {
            {
                std::lock_guard<std::mutex> lk(mu_);
                stop_ = true;
            }
            cv_.notify_all();
            worker_.join();
        }
    }

    bool usable() const { return usable_; }

    // Runs `a` on the worker and `b` here; returns when both finish. Safe
    // for concurrent callers (they serialize on the worker).
    void run_pair(const std::function<void()>& a, const std::function<void()>& b) {
        std::lock_guard<std::mutex> caller_lk(caller_mu_);
        {
            std::lock_guard<std::mutex> lk(mu_);
            task_ = &a;
        }
        cv_.notify_all();
        b();
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return task_ == nullptr; });
    }

private:
    void loop() {
        std::unique_lock<std::mutex> lk(mu_);
        for (;;) {
            cv_.wait(lk, [this] { return task_ != nullptr || stop_; });
            if (stop_) return;
            const std::function<void()>* t = task_;
            lk.unlock();
            (*t)();
            lk.lock();
            task_ = nullptr;
            done_cv_.notify_all();
        }
    }

    std::thread worker_;
    std::mutex caller_mu_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void()>* task_ = nullptr;
    bool stop_ = false;
    bool usable_ = false;
};

SplitWorker& split_worker() {
    static SplitWorker w;
    return w;
}

constexpr int64_t kSplitWork = 1 << 23;

// Dispatches one half of the output rows to the worker thread. op(A)'s row
// m0 starts at a + m0*lda when untransposed, or at column offset m0 when
// transposed; B is shared.
template <typename S, typename Fn>
bool split_gemm(Fn&& call, bool ta, int m, int n, int k, const S* a, int lda,
                S* c, int ldc) {
    if ((int64_t)m * n * k < kSplitWork || m < 2) return false;
    SplitWorker& w = split_worker();
    if (!w.usable()) return false;
    int m0 = m / 2;
    const S* a_hi = ta ? a + m0 : a + (size_t)m0 * lda;
    S* c_hi = c + (size_t)m0 * ldc;
    std::function<void()> lo = [&] { call(m0, a, c); };
    std::function<void()> hi = [&] { call(m - m0, a_hi, c_hi); };
    w.run_pair(hi, lo);
    return true;
}

// Fallback kernel: fixed accumulation order, blocked over rows.
template <typename S>
void gemm_builtin(bool ta, bool tb, int m, int n, int k, S alpha, const S* a,
                  int lda, const S* b, int ldb, S beta, S* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        S* crow = c + (size_t)i * ldc;
        if (beta == S(0)) {
            for (int j = 0; j < n; ++j) crow[j] = S(0);
        } else if (beta != S(1)) {
            for (int j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (int p = 0; p < k; ++p) {
            S av = ta ? a[(size_t)p * lda + i] : a[(size_t)i * lda + p];
            av *= alpha;
            if (av == S(0)) continue;
            const S* brow = tb ? nullptr : b + (size_t)p * ldb;
            if (!tb) {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * b[(size_t)j * ldb + p];
            }
        }
    }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    if (m == 0 || n == 0) return;
    const Backend& be = backend();
    if (be.sgemm) {
        auto call = [&](int rows, const float* a_part, float* c_part) {
            be.sgemm(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans,
                     rows, n, k, alpha, a_part, lda, b, ldb, beta, c_part, ldc);
        };
        if (!split_gemm<float>(call, ta, m, n, k, a, lda, c, ldc)) call(m, a, c);
    } else {
        gemm_builtin(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    if (m == 0 || n == 0) return;
    const Backend& be = backend();
    if (be.dgemm) {
        auto call = [&](int rows, const double* a_part, double* c_part) {
            be.dgemm(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans,
                     rows, n, k, alpha, a_part, lda, b, ldb, beta, c_part, ldc);
        };
        if (!split_gemm<double>(call, ta, m, n, k, a, lda, c, ldc)) call(m, a, c);
    } else {
        gemm_builtin(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

std::string gemm_backend() { return backend().name; }

void gemm_reference(bool ta, bool tb, int m, int n, int k, float alpha,
                    const float* a, int lda, const float* b, int ldb, float beta,
                    float* c, int ldc) {
    gemm_builtin(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm_reference(bool ta, bool tb, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta,
                    double* c, int ldc) {
    gemm_builtin(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace codeclm
