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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "codeclm/checkpoint.hpp"
#include "codeclm/config.hpp"
#include "test_util.hpp"

using namespace codeclm;
using testutil::MicroSetup;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round-trip reproduces forward outputs bit for bit") {
    MicroSetup s;
    CodecLM<float> model;
    testutil::init_micro(model, s, 404);
    auto exs = testutil::micro_examples(s);
    LossWeights w = LossWeights::for_codebooks(3);

    // Probe: full forward logits on a fixed batch.
    std::vector<CodecLM<float>::BatchItem> items;
    for (const auto& ex : exs) items.push_back({&ex, false, false});
    CodecLM<float>::BatchState before;
    model.run_batch(items, before);

    std::string path = temp_path("codeclm_test_roundtrip.ckpt");
    save_checkpoint(path, model, s.backbone, s.encoder);
    LoadedCheckpoint lc = load_checkpoint(path);
    CHECK(lc.vocab == s.vocab);
    CHECK(lc.backbone == s.backbone);
    CHECK(lc.encoder == s.encoder);
    CHECK(lc.char_vocab == s.chars);

    CodecLM<float>::BatchState after;
    lc.model->run_batch(items, after);
    CHECK(before.st_logits == after.st_logits);
    for (int k = 0; k < 3; ++k) CHECK(before.at_logits[k] == after.at_logits[k]);
    std::remove(path.c_str());
}

TEST_CASE("version mismatch is detected before any weight is read") {
    MicroSetup s;
    CodecLM<float> model;
    testutil::init_micro(model, s, 5);
    std::string path = temp_path("codeclm_test_version.ckpt");
    save_checkpoint(path, model, s.backbone, s.encoder);

    // Corrupt the container version field (bytes 8..11).
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        uint32_t bogus = 999;
        f.write(reinterpret_cast<const char*>(&bogus), 4);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"),
                         std::runtime_error);

    // Corrupt the magic: also rejected.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXXXXXX", 8);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("optimizer state and trainer position survive a round-trip") {
    MicroSetup s;
    CodecLM<float> model;
    testutil::init_micro(model, s, 42);
    TrainingConfig tc;
    tc.steps = 40;
    tc.batch_size = 3;
    tc.peak_lr = 1e-3;
    tc.weights = LossWeights::for_codebooks(3);
    tc.seed = 17;
    Trainer<float> tr(model, testutil::micro_examples(s), tc);
    for (int i = 0; i < 7; ++i) tr.train_step();

    std::string path = temp_path("codeclm_test_resume.ckpt");
    save_checkpoint(path, model, s.backbone, s.encoder, &tr);

    // Continue the original for 3 steps.
    std::vector<double> want;
    for (int i = 0; i < 3; ++i) want.push_back(tr.train_step().total);

    // Restore into a fresh model and trainer; traces must continue equally.
    LoadedCheckpoint lc = load_checkpoint(path);
    CHECK(lc.extras.step == 7);
    Trainer<float> tr2(*lc.model, testutil::micro_examples(s), tc);
    tr2.set_step_index(lc.extras.step);
    tr2.optimizer().set_step_count(lc.extras.optimizer_step);
    tr2.optimizer().moments_m() = std::move(lc.adam_m);
    tr2.optimizer().moments_v() = std::move(lc.adam_v);
    tr2.rng().set_state(lc.extras.rng_state);

    for (int i = 0; i < 3; ++i) {
        StepMetrics m = tr2.train_step();
        CHECK(m.step == 7 + i);
        CHECK(m.total == want[i]);
    }
    std::remove(path.c_str());
}

TEST_CASE("run config: json round-trip and derived fields") {
    RunConfig cfg = run_config_from_json_text(R"({
        "seed": 77,
        "vocab": {"st_size": 40, "at_size": 16, "num_codebooks": 3},
        "backbone": {"layers": 2, "width": 64, "ffn_width": 128, "heads": 2,
                     "text_budget": 12, "st_at_budget": 60},
        "training": {"steps": 100, "batch_size": 4}
    })");
    CHECK(cfg.text_encoder.width == 64);
    CHECK(cfg.text_encoder.budget == 12);
    CHECK(cfg.training.weights.alpha == std::vector<double>{5, 2, 1});
    CHECK(cfg.training.seed == 77);
    CHECK(cfg.corpus.seed == derive_seed(77, "corpus"));

    RunConfig back = run_config_from_json_text(run_config_to_json_text(cfg));
    CHECK(back.seed == cfg.seed);
    CHECK(back.vocab == cfg.vocab);
    CHECK(back.backbone == cfg.backbone);
    CHECK(back.text_encoder == cfg.text_encoder);
    CHECK(back.training.weights.alpha == cfg.training.weights.alpha);
}

TEST_CASE("synthesis request parsing") {
    std::string path = temp_path("codeclm_test_req.json");
    {
        std::ofstream os(path);
        os << R"({"text": "hello", "prompt": [[1,2,3],[4,5,6]],
                  "gamma": 1.25, "seed": 9, "debug_dump_scores": true})";
    }
    SynthesisRequest req = load_request(path);
    CHECK(req.text == "hello");
    REQUIRE(req.prompt.has_value());
    CHECK(req.prompt->frames == 2);
    CHECK(req.prompt->codebooks == 3);
    CHECK(req.prompt->at(1, 2) == 6);
    CHECK(req.gamma.value() == doctest::Approx(1.25));
    CHECK(req.seed.value() == 9);
    CHECK(req.debug_dump_scores);
    CHECK_FALSE(req.alpha.has_value());
    std::remove(path.c_str());
}
