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
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace codeclm {

// All randomness in the project flows from one master seed. Subsystem
// seeds are derived as splitmix64(master ^ fnv1a64(subsystem name)), so
// runs are reproducible and subsystems are decorrelated.

constexpr uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= (uint64_t)(unsigned char)c;
        h *= 1099511628211ull;
    }
    return h;
}

constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, std::string_view subsystem) {
    return splitmix64(master ^ fnv1a64(subsystem));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution. Hand-rolled so draws are
    // bit-identical across standard library implementations.
    double uniform() { return (double)(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here;
    // n is always tiny relative to 2^64.
    int uniform_int(int n) { return (int)(engine_() % (uint64_t)n); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller on hand-rolled uniforms; std::normal_distribution is
        // implementation-defined and would break cross-platform determinism.
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace codeclm
