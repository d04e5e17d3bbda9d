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

// Command-line front end: gen-data | train | synth | segment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "codeclm/checkpoint.hpp"
#include "codeclm/config.hpp"
#include "codeclm/corpus.hpp"
#include "codeclm/inference.hpp"
#include "codeclm/records.hpp"
#include "codeclm/training.hpp"
#include "codeclm/wav.hpp"

namespace fs = std::filesystem;
using namespace codeclm;

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

CharVocab corpus_char_vocab(const CorpusConfig& c) {
    return CharVocab::from_alphabet(c.alphabet + c.hesitations + " ");
}

std::vector<TrainingExample> assemble_corpus(const std::vector<UtteranceRecord>& recs,
                                             const TokenVocabulary& vocab,
                                             const BackboneConfig& cfg) {
    std::vector<TrainingExample> out;
    out.reserve(recs.size());
    for (const auto& r : recs)
        out.push_back(assemble_example(r.id, r.text, r.st_raw, r.at, vocab, cfg));
    return out;
}

int cmd_gen_data(const std::string& config_path, std::string out_dir) {
    RunConfig cfg = load_run_config(config_path);
    if (out_dir.empty()) out_dir = ".";
    fs::create_directories(out_dir);

    auto utts = gen_corpus(cfg.corpus, cfg.vocab);
    std::string corpus_path = (fs::path(out_dir) / cfg.corpus_file).string();
    write_records_file(corpus_path, to_records(utts));

    nlohmann::json gen;
    gen["seed"] = cfg.corpus.seed;
    gen["size"] = cfg.corpus.size;
    gen["speakers"] = cfg.corpus.speakers;
    gen["alphabet"] = cfg.corpus.alphabet;
    gen["hesitations"] = cfg.corpus.hesitations;
    gen["num_codebooks"] = cfg.vocab.num_codebooks;
    gen["st_size"] = cfg.vocab.st_size;
    gen["at_size"] = cfg.vocab.at_size;
    write_text_file((fs::path(out_dir) / "corpus_config.json").string(),
                    gen.dump(2) + "\n");
    write_run_config((fs::path(out_dir) / "effective_config.json").string(), cfg);

    std::cout << "wrote " << utts.size() << " utterances to " << corpus_path << "\n";
    return 0;
}

void run_training_phase(Trainer<float>& trainer, CodecLM<float>& model,
                        const RunConfig& cfg, int until_step, std::ofstream& metrics,
                        const std::string& out_dir) {
    while (trainer.step_index() < until_step) {
        StepMetrics m = trainer.train_step();
        nlohmann::json j;
        j["step"] = m.step;
        j["loss"] = m.total;
        j["l_st"] = m.l_st;
        j["l_at"] = m.l_at;
        j["lr"] = m.lr;
        j["grad_norm"] = m.grad_norm;
        j["dropped_text"] = m.dropped_text;
        j["dropped_st"] = m.dropped_st;
        j["seed"] = cfg.seed;
        metrics << j.dump() << "\n";
        metrics.flush();
        if ((m.step + 1) % 100 == 0 || m.step + 1 == until_step) {
            std::cout << "step " << (m.step + 1) << "/" << until_step << " loss "
                      << m.total << " lr " << m.lr << "\n";
        }
        if (cfg.checkpoint_every > 0 && (m.step + 1) % cfg.checkpoint_every == 0 &&
            m.step + 1 != until_step) {
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_step%06d.ckpt", m.step + 1);
            save_checkpoint((fs::path(out_dir) / name).string(), model, cfg.backbone,
                            cfg.text_encoder, &trainer);
        }
    }
}

int cmd_train(const std::string& config_path, const std::string& resume,
              std::string out_dir, uint64_t seed_override, bool has_seed) {
    RunConfig cfg = load_run_config(config_path);
    if (has_seed) {
        cfg.seed = seed_override;
        cfg.finalize();
    }
    if (out_dir.empty()) out_dir = ".";
    fs::create_directories(out_dir);

    std::string corpus_path = cfg.corpus_file;
    if (!fs::exists(corpus_path))
        corpus_path = (fs::path(out_dir) / cfg.corpus_file).string();
    auto recs = read_records_file(corpus_path);
    auto examples = assemble_corpus(recs, cfg.vocab, cfg.backbone);

    std::unique_ptr<CodecLM<float>> model;
    std::unique_ptr<Trainer<float>> trainer;
    if (!resume.empty()) {
        LoadedCheckpoint lc = load_checkpoint(resume);
        model = std::move(lc.model);
        trainer = std::make_unique<Trainer<float>>(*model, std::move(examples),
                                                   cfg.training);
        trainer->set_step_index(lc.extras.step);
        trainer->optimizer().set_step_count(lc.extras.optimizer_step);
        if (lc.extras.has_optimizer) {
            trainer->optimizer().moments_m() = std::move(lc.adam_m);
            trainer->optimizer().moments_v() = std::move(lc.adam_v);
        }
        if (!lc.extras.rng_state.empty()) trainer->rng().set_state(lc.extras.rng_state);
        std::cout << "resumed from " << resume << " at step " << lc.extras.step << "\n";
    } else {
        model = std::make_unique<CodecLM<float>>();
        model->init(cfg.vocab, cfg.backbone, cfg.text_encoder,
                    corpus_char_vocab(cfg.corpus));
        model->random_init(cfg.seed);
        trainer = std::make_unique<Trainer<float>>(*model, std::move(examples),
                                                   cfg.training);
    }

    write_run_config((fs::path(out_dir) / "effective_config.json").string(), cfg);
    std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
    std::ofstream metrics(metrics_path,
                          resume.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) throw std::runtime_error("cannot open " + metrics_path);

    run_training_phase(*trainer, *model, cfg, cfg.training.steps, metrics, out_dir);

    if (!cfg.finetune_corpus_file.empty() && cfg.finetune_steps > 0) {
        auto ft_recs = read_records_file(cfg.finetune_corpus_file);
        trainer->examples() = assemble_corpus(ft_recs, cfg.vocab, cfg.backbone);
        std::cout << "finetune phase: " << cfg.finetune_steps << " steps on "
                  << ft_recs.size() << " utterances\n";
        run_training_phase(*trainer, *model, cfg,
                           cfg.training.steps + cfg.finetune_steps, metrics, out_dir);
    }

    save_checkpoint((fs::path(out_dir) / "ckpt_final.ckpt").string(), *model,
                    cfg.backbone, cfg.text_encoder, trainer.get());
    LossBreakdown ev = trainer->eval_corpus();
    std::cout << "final corpus loss (no condition drop): " << ev.total << "\n";
    return 0;
}

int cmd_synth(const std::string& ckpt_path, std::string text,
              const std::string& request_path, const std::string& corpus_path,
              const std::string& prompt_id, std::string out_dir, GuidanceConfig flags,
              bool has_gamma, bool has_alpha, bool has_beta, uint64_t seed,
              bool has_seed, int min_seg_len, int gap_ms, bool dump_scores,
              int sample_rate, int downsample) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    CodecLM<float>& model = *lc.model;

    SynthesisRequest req;
    if (!request_path.empty()) {
        req = load_request(request_path);
    } else {
        if (text.empty()) throw std::runtime_error("synth: need --text or --request");
        req.text = text;
        if (!prompt_id.empty()) req.prompt_utterance_id = prompt_id;
        req.debug_dump_scores = dump_scores;
    }

    // Precedence: explicit CLI flag > request field > default.
    GuidanceConfig g;
    g.gamma = has_gamma ? flags.gamma : req.gamma.value_or(g.gamma);
    g.alpha = has_alpha ? flags.alpha : req.alpha.value_or(g.alpha);
    g.beta = has_beta ? flags.beta : req.beta.value_or(g.beta);
    g.temperature = req.temperature.value_or(g.temperature);
    g.top_k = req.top_k.value_or(g.top_k);
    g.max_st_len = req.max_st_len.value_or(g.max_st_len);
    g.max_at_len = req.max_at_len.value_or(g.max_at_len);
    uint64_t master_seed = has_seed ? seed : req.seed.value_or(0);
    bool dumps = req.debug_dump_scores || dump_scores;
    g.validate();

    AcousticGrid prompt(0, model.vocab().num_codebooks);
    if (req.prompt.has_value()) {
        prompt = *req.prompt;
    } else if (!req.prompt_utterance_id.empty()) {
        if (corpus_path.empty())
            throw std::runtime_error("synth: --corpus required for --prompt-id");
        auto recs = read_records_file(corpus_path);
        bool found = false;
        for (const auto& r : recs) {
            if (r.id == req.prompt_utterance_id) {
                prompt = r.at;
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error("synth: utterance id '" +
                                     req.prompt_utterance_id + "' not in corpus");
    }

    if (out_dir.empty()) out_dir = ".";
    fs::create_directories(out_dir);

    SynthesisResponse resp;
    resp.text = req.text;
    resp.seed = master_seed;
    resp.guidance = g;

    std::vector<AudioClip> clips;
    auto segments = segment_text(req.text, min_seg_len);
    for (size_t i = 0; i < segments.size(); ++i) {
        GuidanceConfig gs = g;
        gs.seed = derive_seed(master_seed, "segment:" + std::to_string(i));
        TextEncoding<float> enc = model.encoder().encode_text(segments[i]);
        auto st = generate_st(model, enc, gs, dumps);
        auto at = generate_at(model, enc, st.stream, prompt, gs, dumps);

        SegmentResult sr;
        sr.text = segments[i];
        sr.st = st.stream.tokens;
        sr.st_terminated = st.stream.terminated;
        sr.st_truncated = st.truncated;
        sr.at = at.grid;
        sr.at_truncated = at.truncated;
        if (dumps) {
            sr.dumps = std::move(st.dumps);
            sr.dumps.insert(sr.dumps.end(), at.dumps.begin(), at.dumps.end());
        }
        resp.segments.push_back(std::move(sr));
        clips.push_back(
            {render_pseudo_waveform(at.grid, sample_rate, downsample), sample_rate});
    }

    AudioClip final_clip = concat_clips(clips, gap_ms);
    write_wav((fs::path(out_dir) / "synth.wav").string(), final_clip.samples,
              final_clip.sample_rate);
    write_text_file((fs::path(out_dir) / "response.json").string(),
                    response_to_json_text(resp));

    nlohmann::json eff;
    eff["checkpoint"] = ckpt_path;
    eff["text"] = req.text;
    eff["seed"] = master_seed;
    eff["gamma"] = g.gamma;
    eff["alpha"] = g.alpha;
    eff["beta"] = g.beta;
    eff["temperature"] = g.temperature;
    eff["top_k"] = g.top_k;
    eff["min_seg_len"] = min_seg_len;
    eff["gap_ms"] = gap_ms;
    eff["sample_rate"] = sample_rate;
    eff["downsample"] = downsample;
    eff["debug_dump_scores"] = dumps;
    write_text_file((fs::path(out_dir) / "effective_synth_config.json").string(),
                    eff.dump(2) + "\n");

    std::cout << "synthesized " << segments.size() << " segment(s), "
              << final_clip.samples.size() << " samples -> " << out_dir << "\n";
    return 0;
}

int cmd_segment(std::string text, const std::string& file, int min_seg_len) {
    if (!file.empty()) text = read_text_file(file);
    if (text.empty()) throw std::runtime_error("segment: need --text or --file");
    for (const auto& seg : segment_text(text, min_seg_len)) std::cout << seg << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage codec language model for spontaneous-style voice cloning"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resume, ckpt, text, request_path, corpus_path,
        prompt_id, file;
    uint64_t seed = 0;
    GuidanceConfig flags;
    int min_seg_len = 30, gap_ms = 100, sample_rate = 16000, downsample = 320;
    bool dump_scores = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train", "train from a corpus");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--out", out_dir, "output directory");
    auto* train_seed = train->add_option("--seed", seed, "master seed override");

    auto* synth = app.add_subcommand("synth", "synthesize from a checkpoint");
    synth->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    synth->add_option("--text", text, "text to synthesize");
    synth->add_option("--request", request_path, "synthesis request JSON");
    synth->add_option("--corpus", corpus_path, "corpus file for --prompt-id lookup");
    synth->add_option("--prompt-id", prompt_id, "prompt utterance id");
    synth->add_option("--out", out_dir, "output directory");
    auto* og = synth->add_option("--gamma", flags.gamma, "stage-1 guidance strength");
    auto* oa = synth->add_option("--alpha", flags.alpha, "stage-2 text guidance");
    auto* ob = synth->add_option("--beta", flags.beta, "stage-2 semantic guidance");
    auto* os_ = synth->add_option("--seed", seed, "sampling seed");
    synth->add_option("--min-seg-len", min_seg_len, "segment length floor");
    synth->add_option("--gap-ms", gap_ms, "silence between segments (ms)");
    synth->add_option("--sample-rate", sample_rate, "output sample rate");
    synth->add_option("--downsample", downsample, "samples per acoustic frame");
    synth->add_flag("--debug-dump-scores", dump_scores,
                    "include per-step blended scores in the response");

    auto* seg = app.add_subcommand("segment", "split text at punctuation");
    seg->add_option("--text", text, "text to segment");
    seg->add_option("--file", file, "read text from file");
    seg->add_option("--min-seg-len", min_seg_len, "segment length floor");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (train->parsed())
            return cmd_train(config_path, resume, out_dir, seed,
                             train_seed->count() > 0);
        if (synth->parsed())
            return cmd_synth(ckpt, text, request_path, corpus_path, prompt_id, out_dir,
                             flags, og->count() > 0, oa->count() > 0, ob->count() > 0,
                             seed, os_->count() > 0, min_seg_len, gap_ms, dump_scores,
                             sample_rate, downsample);
        if (seg->parsed()) return cmd_segment(text, file, min_seg_len);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
