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

#include "codeclm/model.hpp"
#include "codeclm/nn.hpp"
#include "codeclm/training.hpp"

namespace codeclm {

// Single-file checkpoint: magic + format version, a JSON header describing
// configs and tensor layout, then raw little-endian float32 data. The
// version is checked before any weight is read; writes go through a
// temp-file rename so a crash never leaves a torn file.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointExtras {
    int step = 0;
    std::string rng_state;             // trainer rng, empty when absent
    bool has_optimizer = false;
    int optimizer_step = 0;
};

// Saves model weights (+ optimizer moments when `trainer` is given).
void save_checkpoint(const std::string& path, CodecLM<float>& model,
                     const BackboneConfig& bb_cfg, const TextEncoderConfig& enc_cfg,
                     Trainer<float>* trainer = nullptr);

struct LoadedCheckpoint {
    TokenVocabulary vocab;
    BackboneConfig backbone;
    TextEncoderConfig encoder;
    CharVocab char_vocab;
    CheckpointExtras extras;
    std::unique_ptr<CodecLM<float>> model;
    // Optimizer moments keyed by parameter order; empty when absent.
    std::vector<Mat<float>> adam_m, adam_v;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace codeclm
