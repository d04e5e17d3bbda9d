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

#include "codeclm/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace codeclm {
namespace {

using nlohmann::json;

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json grid_to_json(const AcousticGrid& g) {
    json rows = json::array();
    for (int t = 0; t < g.frames; ++t) {
        json row = json::array();
        for (int k = 0; k < g.codebooks; ++k) row.push_back(g.at(t, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

AcousticGrid grid_from_json(const json& j) {
    int t_num = (int)j.size();
    int k_num = t_num > 0 ? (int)j[0].size() : 0;
    AcousticGrid g(t_num, k_num);
    for (int t = 0; t < t_num; ++t) {
        if ((int)j[t].size() != k_num)
            throw std::invalid_argument("prompt grid: ragged rows");
        for (int k = 0; k < k_num; ++k) g.at(t, k) = j[t][k].get<TokenId>();
    }
    return g;
}

}  // namespace

void RunConfig::finalize() {
    text_encoder.width = backbone.width;
    text_encoder.budget = backbone.text_budget;
    if (training.weights.alpha.empty())
        training.weights = LossWeights::for_codebooks(vocab.num_codebooks);
    training.seed = seed;
    corpus.seed = derive_seed(seed, "corpus");
    if (inference.seed == 0) inference.seed = derive_seed(seed, "inference");
    vocab.validate();
    backbone.validate();
    training.weights.validate(vocab.num_codebooks);
    inference.validate();
}

RunConfig run_config_from_json_text(const std::string& text) {
    json j = json::parse(text);
    RunConfig cfg;
    get_if(j, "seed", cfg.seed);
    if (j.contains("vocab")) {
        const json& v = j["vocab"];
        get_if(v, "st_size", cfg.vocab.st_size);
        get_if(v, "at_size", cfg.vocab.at_size);
        get_if(v, "num_codebooks", cfg.vocab.num_codebooks);
    }
    if (j.contains("backbone")) {
        const json& b = j["backbone"];
        get_if(b, "layers", cfg.backbone.layers);
        get_if(b, "width", cfg.backbone.width);
        get_if(b, "ffn_width", cfg.backbone.ffn_width);
        get_if(b, "heads", cfg.backbone.heads);
        get_if(b, "text_budget", cfg.backbone.text_budget);
        get_if(b, "st_at_budget", cfg.backbone.st_at_budget);
    }
    if (j.contains("text_encoder")) {
        const json& e = j["text_encoder"];
        get_if(e, "layers", cfg.text_encoder.layers);
        get_if(e, "heads", cfg.text_encoder.heads);
        get_if(e, "ffn_width", cfg.text_encoder.ffn_width);
        get_if(e, "lora", cfg.text_encoder.lora);
        get_if(e, "lora_rank", cfg.text_encoder.lora_rank);
        get_if(e, "lora_alpha", cfg.text_encoder.lora_alpha);
    }
    if (j.contains("training")) {
        const json& t = j["training"];
        get_if(t, "steps", cfg.training.steps);
        get_if(t, "batch_size", cfg.training.batch_size);
        get_if(t, "peak_lr", cfg.training.peak_lr);
        get_if(t, "warmup_frac", cfg.training.warmup_frac);
        get_if(t, "condition_drop_p", cfg.training.condition_drop_p);
        get_if(t, "grad_clip", cfg.training.grad_clip);
        get_if(t, "adam_beta1", cfg.training.adam_beta1);
        get_if(t, "adam_beta2", cfg.training.adam_beta2);
        get_if(t, "adam_eps", cfg.training.adam_eps);
        if (t.contains("loss_weights"))
            cfg.training.weights.alpha = t["loss_weights"].get<std::vector<double>>();
    }
    if (j.contains("corpus")) {
        const json& c = j["corpus"];
        get_if(c, "size", cfg.corpus.size);
        get_if(c, "speakers", cfg.corpus.speakers);
        get_if(c, "min_text_len", cfg.corpus.min_text_len);
        get_if(c, "max_text_len", cfg.corpus.max_text_len);
        get_if(c, "alphabet", cfg.corpus.alphabet);
        get_if(c, "hesitations", cfg.corpus.hesitations);
        get_if(c, "hesitation_prob", cfg.corpus.hesitation_prob);
        get_if(c, "sample_rate", cfg.corpus.sample_rate);
        get_if(c, "downsample", cfg.corpus.downsample);
    }
    if (j.contains("inference")) {
        const json& i = j["inference"];
        get_if(i, "gamma", cfg.inference.gamma);
        get_if(i, "alpha", cfg.inference.alpha);
        get_if(i, "beta", cfg.inference.beta);
        get_if(i, "temperature", cfg.inference.temperature);
        get_if(i, "top_k", cfg.inference.top_k);
        get_if(i, "max_st_len", cfg.inference.max_st_len);
        get_if(i, "max_at_len", cfg.inference.max_at_len);
        get_if(i, "seed", cfg.inference.seed);
    }
    get_if(j, "corpus_file", cfg.corpus_file);
    get_if(j, "finetune_corpus_file", cfg.finetune_corpus_file);
    get_if(j, "finetune_steps", cfg.finetune_steps);
    get_if(j, "checkpoint_every", cfg.checkpoint_every);
    cfg.finalize();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return run_config_from_json_text(ss.str());
}

std::string run_config_to_json_text(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["vocab"] = {{"st_size", cfg.vocab.st_size},
                  {"at_size", cfg.vocab.at_size},
                  {"num_codebooks", cfg.vocab.num_codebooks}};
    j["backbone"] = {{"layers", cfg.backbone.layers},
                     {"width", cfg.backbone.width},
                     {"ffn_width", cfg.backbone.ffn_width},
                     {"heads", cfg.backbone.heads},
                     {"text_budget", cfg.backbone.text_budget},
                     {"st_at_budget", cfg.backbone.st_at_budget}};
    j["text_encoder"] = {{"width", cfg.text_encoder.width},
                         {"layers", cfg.text_encoder.layers},
                         {"heads", cfg.text_encoder.heads},
                         {"ffn_width", cfg.text_encoder.ffn_width},
                         {"budget", cfg.text_encoder.budget},
                         {"lora", cfg.text_encoder.lora},
                         {"lora_rank", cfg.text_encoder.lora_rank},
                         {"lora_alpha", cfg.text_encoder.lora_alpha}};
    j["training"] = {{"steps", cfg.training.steps},
                     {"batch_size", cfg.training.batch_size},
                     {"peak_lr", cfg.training.peak_lr},
                     {"warmup_frac", cfg.training.warmup_frac},
                     {"condition_drop_p", cfg.training.condition_drop_p},
                     {"grad_clip", cfg.training.grad_clip},
                     {"adam_beta1", cfg.training.adam_beta1},
                     {"adam_beta2", cfg.training.adam_beta2},
                     {"adam_eps", cfg.training.adam_eps},
                     {"loss_weights", cfg.training.weights.alpha}};
    j["corpus"] = {{"size", cfg.corpus.size},
                   {"speakers", cfg.corpus.speakers},
                   {"min_text_len", cfg.corpus.min_text_len},
                   {"max_text_len", cfg.corpus.max_text_len},
                   {"alphabet", cfg.corpus.alphabet},
                   {"hesitations", cfg.corpus.hesitations},
                   {"hesitation_prob", cfg.corpus.hesitation_prob},
                   {"sample_rate", cfg.corpus.sample_rate},
                   {"downsample", cfg.corpus.downsample}};
    j["inference"] = {{"gamma", cfg.inference.gamma},
                      {"alpha", cfg.inference.alpha},
                      {"beta", cfg.inference.beta},
                      {"temperature", cfg.inference.temperature},
                      {"top_k", cfg.inference.top_k},
                      {"max_st_len", cfg.inference.max_st_len},
                      {"max_at_len", cfg.inference.max_at_len},
                      {"seed", cfg.inference.seed}};
    j["corpus_file"] = cfg.corpus_file;
    j["finetune_corpus_file"] = cfg.finetune_corpus_file;
    j["finetune_steps"] = cfg.finetune_steps;
    j["checkpoint_every"] = cfg.checkpoint_every;
    return j.dump(2) + "\n";
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << run_config_to_json_text(cfg);
}

SynthesisRequest load_request(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("request: cannot open " + path);
    json j = json::parse(is);
    SynthesisRequest req;
    req.text = j.at("text").get<std::string>();
    get_if(j, "prompt_utterance_id", req.prompt_utterance_id);
    if (j.contains("prompt")) req.prompt = grid_from_json(j["prompt"]);
    if (j.contains("gamma")) req.gamma = j["gamma"].get<double>();
    if (j.contains("alpha")) req.alpha = j["alpha"].get<double>();
    if (j.contains("beta")) req.beta = j["beta"].get<double>();
    if (j.contains("temperature")) req.temperature = j["temperature"].get<double>();
    if (j.contains("top_k")) req.top_k = j["top_k"].get<int>();
    if (j.contains("max_st_len")) req.max_st_len = j["max_st_len"].get<int>();
    if (j.contains("max_at_len")) req.max_at_len = j["max_at_len"].get<int>();
    if (j.contains("seed")) req.seed = j["seed"].get<uint64_t>();
    get_if(j, "debug_dump_scores", req.debug_dump_scores);
    return req;
}

std::string response_to_json_text(const SynthesisResponse& resp) {
    json j;
    j["text"] = resp.text;
    j["seed"] = resp.seed;
    j["guidance"] = {{"gamma", resp.guidance.gamma},
                     {"alpha", resp.guidance.alpha},
                     {"beta", resp.guidance.beta},
                     {"temperature", resp.guidance.temperature},
                     {"top_k", resp.guidance.top_k}};
    json segs = json::array();
    for (const auto& s : resp.segments) {
        json seg;
        seg["text"] = s.text;
        seg["st"] = s.st;
        seg["st_terminated"] = s.st_terminated;
        seg["st_truncated"] = s.st_truncated;
        seg["at"] = grid_to_json(s.at);
        seg["at_truncated"] = s.at_truncated;
        if (!s.dumps.empty()) {
            json dumps = json::array();
            for (const auto& d : s.dumps) {
                dumps.push_back(
                    {{"region", d.region}, {"step", d.step}, {"scores", d.scores}});
            }
            seg["score_dumps"] = std::move(dumps);
        }
        segs.push_back(std::move(seg));
    }
    j["segments"] = std::move(segs);
    return j.dump(2) + "\n";
}

}  // namespace codeclm
