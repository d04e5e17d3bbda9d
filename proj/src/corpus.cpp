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

#include "codeclm/corpus.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "codeclm/rng.hpp"

namespace codeclm {
namespace {

// Run length of the semantic token a character expands to. Hesitation
// markers run longer (elongated fillers); lengths are a pure function of
// (seed, text, speaker, position).
int run_length(const CorpusConfig& cfg, const std::string& text, int speaker,
               size_t pos, bool hesitation) {
    uint64_t key = cfg.seed;
    key = splitmix64(key ^ fnv1a64(text));
    key = splitmix64(key ^ (uint64_t)speaker);
    key = splitmix64(key ^ (uint64_t)pos);
    double u = (double)(key >> 11) * 0x1.0p-53;
    if (hesitation) {
        if (u < 0.25) return 2;
        if (u < 0.70) return 3;
        return 4;
    }
    if (u < 0.50) return 1;
    if (u < 0.85) return 2;
    return 3;
}

bool is_hesitation(const CorpusConfig& cfg, char c) {
    return cfg.hesitations.find(c) != std::string::npos;
}

}  // namespace

TokenId char_semantic_id(const CorpusConfig& cfg, const TokenVocabulary& vocab,
                         char c) {
    // Alphabet characters get well-spread distinct ids; anything else falls
    // back to a hash.
    std::string all = cfg.alphabet + cfg.hesitations + " ";
    auto idx = all.find(c);
    uint64_t base = splitmix64(cfg.seed ^ fnv1a64("char_sem_base"));
    if (idx != std::string::npos)
        return (TokenId)((base + 7 * (uint64_t)idx) % (uint64_t)vocab.st_size);
    return (TokenId)(splitmix64(cfg.seed ^ fnv1a64("char_sem") ^ (uint64_t)(unsigned char)c) %
                     (uint64_t)vocab.st_size);
}

std::vector<TokenId> speaker_permutation(const CorpusConfig& cfg,
                                         const TokenVocabulary& vocab, int speaker,
                                         int k) {
    std::vector<TokenId> perm(vocab.at_size);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(splitmix64(cfg.seed ^ fnv1a64("speaker_perm") ^
                       ((uint64_t)speaker << 20) ^ (uint64_t)k));
    for (int i = vocab.at_size - 1; i > 0; --i) {
        int j = rng.uniform_int(i + 1);
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

std::vector<TokenId> acoustic_codes(const CorpusConfig& cfg,
                                    const TokenVocabulary& vocab, TokenId semantic_id,
                                    int speaker) {
    std::vector<TokenId> codes(vocab.num_codebooks);
    for (int k = 0; k < vocab.num_codebooks; ++k) {
        TokenId base = (TokenId)(splitmix64(cfg.seed ^ fnv1a64("at_code") ^
                                            ((uint64_t)semantic_id << 8) ^ (uint64_t)k) %
                                 (uint64_t)vocab.at_size);
        codes[k] = speaker_permutation(cfg, vocab, speaker, k)[base];
    }
    return codes;
}

std::vector<TokenId> oracle_st(const std::string& text, const CorpusConfig& cfg,
                               const TokenVocabulary& vocab, int speaker) {
    std::vector<TokenId> out;
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        TokenId id = char_semantic_id(cfg, vocab, c);
        int len = run_length(cfg, text, speaker, i, is_hesitation(cfg, c));
        out.insert(out.end(), len, id);
    }
    return out;
}

AcousticGrid oracle_at(const std::vector<TokenId>& st_raw, const CorpusConfig& cfg,
                       const TokenVocabulary& vocab, int speaker) {
    AcousticGrid grid((int)st_raw.size(), vocab.num_codebooks);
    // Permutations are reused across frames; build once per codebook.
    std::vector<std::vector<TokenId>> perms(vocab.num_codebooks);
    for (int k = 0; k < vocab.num_codebooks; ++k)
        perms[k] = speaker_permutation(cfg, vocab, speaker, k);
    for (int t = 0; t < grid.frames; ++t) {
        for (int k = 0; k < vocab.num_codebooks; ++k) {
            TokenId base = (TokenId)(splitmix64(cfg.seed ^ fnv1a64("at_code") ^
                                                ((uint64_t)st_raw[t] << 8) ^ (uint64_t)k) %
                                     (uint64_t)vocab.at_size);
            grid.at(t, k) = perms[k][base];
        }
    }
    return grid;
}

std::vector<SyntheticUtterance> gen_corpus(const CorpusConfig& cfg,
                                           const TokenVocabulary& vocab) {
    if (cfg.size < 1) throw std::invalid_argument("gen_corpus: size must be >= 1");
    if (cfg.alphabet.empty()) throw std::invalid_argument("gen_corpus: empty alphabet");
    std::vector<SyntheticUtterance> out;
    out.reserve(cfg.size);
    for (int i = 0; i < cfg.size; ++i) {
        SyntheticUtterance u;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "u%04d", i);
        u.id = idbuf;
        u.speaker = cfg.speakers > 0 ? i % cfg.speakers : 0;
        Rng rng(splitmix64(cfg.seed ^ fnv1a64("utterance_text") ^ (uint64_t)i));
        int len = cfg.min_text_len + rng.uniform_int(cfg.max_text_len - cfg.min_text_len + 1);
        for (int j = 0; j < len; ++j) {
            if (!cfg.hesitations.empty() && rng.bernoulli(cfg.hesitation_prob))
                u.text += cfg.hesitations[rng.uniform_int((int)cfg.hesitations.size())];
            else
                u.text += cfg.alphabet[rng.uniform_int((int)cfg.alphabet.size())];
        }
        u.st_raw = oracle_st(u.text, cfg, vocab, u.speaker);
        u.at = oracle_at(u.st_raw, cfg, vocab, u.speaker);
        out.push_back(std::move(u));
    }
    return out;
}

std::vector<UtteranceRecord> to_records(const std::vector<SyntheticUtterance>& utts) {
    std::vector<UtteranceRecord> recs;
    recs.reserve(utts.size());
    for (const auto& u : utts) {
        UtteranceRecord r;
        r.id = u.id;
        r.speaker = u.speaker;
        r.text = u.text;
        r.st_raw = u.st_raw;
        r.at = u.at;
        recs.push_back(std::move(r));
    }
    return recs;
}

std::vector<float> render_pseudo_waveform(const AcousticGrid& at, int sample_rate,
                                          int downsample) {
    (void)sample_rate;
    if (downsample <= 0)
        throw std::invalid_argument("render_pseudo_waveform: downsample must be > 0");
    std::vector<float> samples;
    samples.reserve((size_t)at.frames * downsample);
    const double two_pi = 6.283185307179586476925287;
    for (int t = 0; t < at.frames; ++t) {
        for (int j = 0; j < downsample; ++j) {
            double x = 0.0;
            for (int k = 0; k < at.codebooks; ++k) {
                double cycles = at.at(t, k) + 1;
                x += std::sin(two_pi * cycles * (j + 1) / downsample + k);
            }
            samples.push_back((float)(x / std::max(1, at.codebooks)));
        }
    }
    return samples;
}

}  // namespace codeclm
