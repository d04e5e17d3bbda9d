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
#include <vector>

#include "codeclm/records.hpp"
#include "codeclm/vocab.hpp"

namespace codeclm {

// Deterministic synthetic data: text maps to semantic-token runs (hesitation
// markers produce longer runs, standing in for elongated fillers), and each
// (semantic id, speaker) pair maps to K acoustic codes through per-speaker
// codebook permutations. Everything derives from (seed, text, speaker), so
// the generator doubles as the ground-truth oracle for tests.
struct CorpusConfig {
    int size = 32;
    int speakers = 4;
    uint64_t seed = 0;
    int min_text_len = 3;
    int max_text_len = 8;
    std::string alphabet = "abcdefghijklmnop";
    std::string hesitations = "~";
    double hesitation_prob = 0.15;
    int sample_rate = 16000;
    int downsample = 320;
};

struct SyntheticUtterance {
    std::string id;
    int speaker = 0;
    std::string text;
    std::vector<TokenId> st_raw;  // pre-dedup, one run per character
    AcousticGrid at;
};

// Semantic id of one character (stable, distinct per alphabet entry).
TokenId char_semantic_id(const CorpusConfig& cfg, const TokenVocabulary& vocab,
                         char c);

// Per-speaker permutation of codebook k's id space.
std::vector<TokenId> speaker_permutation(const CorpusConfig& cfg,
                                         const TokenVocabulary& vocab, int speaker,
                                         int k);

// The K acoustic codes a frame with this semantic id gets, for this speaker.
std::vector<TokenId> acoustic_codes(const CorpusConfig& cfg,
                                    const TokenVocabulary& vocab, TokenId semantic_id,
                                    int speaker);

// Re-derives the raw semantic sequence for (text, seed, speaker). gen_corpus
// stores exactly this.
std::vector<TokenId> oracle_st(const std::string& text, const CorpusConfig& cfg,
                               const TokenVocabulary& vocab, int speaker);

// The acoustic grid implied by a raw semantic sequence and speaker.
AcousticGrid oracle_at(const std::vector<TokenId>& st_raw, const CorpusConfig& cfg,
                       const TokenVocabulary& vocab, int speaker);

std::vector<SyntheticUtterance> gen_corpus(const CorpusConfig& cfg,
                                           const TokenVocabulary& vocab);

std::vector<UtteranceRecord> to_records(const std::vector<SyntheticUtterance>& utts);

// Expands each frame to `downsample` samples of a deterministic signature of
// its K tokens. Not a vocoder; just a stable frame-to-sample expansion.
std::vector<float> render_pseudo_waveform(const AcousticGrid& at, int sample_rate,
                                          int downsample);

}  // namespace codeclm
