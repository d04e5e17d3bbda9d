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

#include <optional>
#include <string>

#include "codeclm/corpus.hpp"
#include "codeclm/inference.hpp"
#include "codeclm/training.hpp"

namespace codeclm {

// Everything a run needs, mirrored 1:1 in the JSON config file. One master
// seed; subsystems derive their own (see rng.hpp).
struct RunConfig {
    uint64_t seed = 1234;
    TokenVocabulary vocab;
    BackboneConfig backbone;
    TextEncoderConfig text_encoder;
    TrainingConfig training;
    CorpusConfig corpus;
    GuidanceConfig inference;
    std::string corpus_file = "corpus.txt";
    std::string finetune_corpus_file;  // optional second phase
    int finetune_steps = 0;
    int checkpoint_every = 1000;

    // Fills derived fields (encoder width/budget from the backbone, subsystem
    // seeds, K-sized loss weights) and validates consistency.
    void finalize();
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);
void write_run_config(const std::string& path, const RunConfig& cfg);

// Synthesis request/response records (JSON files on the CLI surface).
struct SynthesisRequest {
    std::string text;
    std::string prompt_utterance_id;     // empty when using an inline grid
    std::optional<AcousticGrid> prompt;  // inline prompt grid
    std::optional<double> gamma, alpha, beta, temperature;
    std::optional<int> top_k, max_st_len, max_at_len;
    std::optional<uint64_t> seed;
    bool debug_dump_scores = false;
};

SynthesisRequest load_request(const std::string& path);

struct SegmentResult {
    std::string text;
    std::vector<TokenId> st;
    bool st_terminated = false;
    bool st_truncated = false;
    AcousticGrid at;
    bool at_truncated = false;
    std::vector<ScoreDump<float>> dumps;
};

struct SynthesisResponse {
    std::string text;
    uint64_t seed = 0;
    GuidanceConfig guidance;
    std::vector<SegmentResult> segments;
};

std::string response_to_json_text(const SynthesisResponse& resp);

}  // namespace codeclm
