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

#include "codeclm/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace codeclm {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'C', 'L', 'M', 'C', 'K', 'P', 'T'};

void require_little_endian() {
    if constexpr (std::endian::native != std::endian::little) {
        throw std::runtime_error(
            "checkpoint: only little-endian hosts are supported");
    }
}

json vocab_to_json(const TokenVocabulary& v) {
    return {{"st_size", v.st_size},
            {"at_size", v.at_size},
            {"num_codebooks", v.num_codebooks}};
}
TokenVocabulary vocab_from_json(const json& j) {
    return TokenVocabulary(j.at("st_size"), j.at("at_size"), j.at("num_codebooks"));
}

json backbone_to_json(const BackboneConfig& c) {
    return {{"layers", c.layers},         {"width", c.width},
            {"ffn_width", c.ffn_width},   {"heads", c.heads},
            {"text_budget", c.text_budget}, {"st_at_budget", c.st_at_budget}};
}
BackboneConfig backbone_from_json(const json& j) {
    BackboneConfig c;
    c.layers = j.at("layers");
    c.width = j.at("width");
    c.ffn_width = j.at("ffn_width");
    c.heads = j.at("heads");
    c.text_budget = j.at("text_budget");
    c.st_at_budget = j.at("st_at_budget");
    return c;
}

json encoder_to_json(const TextEncoderConfig& c) {
    return {{"width", c.width},         {"layers", c.layers},
            {"heads", c.heads},         {"ffn_width", c.ffn_width},
            {"budget", c.budget},       {"lora", c.lora},
            {"lora_rank", c.lora_rank}, {"lora_alpha", c.lora_alpha}};
}
TextEncoderConfig encoder_from_json(const json& j) {
    TextEncoderConfig c;
    c.width = j.at("width");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.ffn_width = j.at("ffn_width");
    c.budget = j.at("budget");
    c.lora = j.at("lora");
    c.lora_rank = j.at("lora_rank");
    c.lora_alpha = j.at("lora_alpha");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, CodecLM<float>& model,
                     const BackboneConfig& bb_cfg, const TextEncoderConfig& enc_cfg,
                     Trainer<float>* trainer) {
    require_little_endian();

    json header;
    header["format_version"] = kCheckpointVersion;
    header["vocab"] = vocab_to_json(model.vocab());
    header["backbone"] = backbone_to_json(bb_cfg);
    header["text_encoder"] = encoder_to_json(enc_cfg);
    header["char_vocab"] = model.encoder().char_vocab().chars;
    header["step"] = trainer ? trainer->step_index() : 0;
    header["rng_state"] = trainer ? trainer->rng().state() : "";
    header["optimizer"] = trainer != nullptr;
    header["optimizer_step"] = trainer ? trainer->optimizer().step_count() : 0;

    json tensors = json::array();
    uint64_t offset = 0;
    auto add_tensor = [&](const std::string& name, const Mat<float>& m) {
        tensors.push_back({{"name", name},
                           {"rows", m.rows()},
                           {"cols", m.cols()},
                           {"offset", offset}});
        offset += m.size() * sizeof(float);
    };
    for (auto* p : model.params()) add_tensor(p->name, p->w);
    if (trainer) {
        auto& ms = trainer->optimizer().moments_m();
        auto& vs = trainer->optimizer().moments_v();
        for (size_t i = 0; i < model.params().size(); ++i) {
            add_tensor("adam.m." + model.params()[i]->name, ms[i]);
            add_tensor("adam.v." + model.params()[i]->name, vs[i]);
        }
    }
    header["tensors"] = std::move(tensors);

    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp);
        os.write(kMagic, sizeof kMagic);
        uint32_t version = kCheckpointVersion;
        os.write(reinterpret_cast<const char*>(&version), sizeof version);
        std::string hs = header.dump();
        uint64_t hlen = hs.size();
        os.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
        os.write(hs.data(), (std::streamsize)hs.size());
        auto write_mat = [&](const Mat<float>& m) {
            os.write(reinterpret_cast<const char*>(m.data()),
                     (std::streamsize)(m.size() * sizeof(float)));
        };
        for (auto* p : model.params()) write_mat(p->w);
        if (trainer) {
            auto& ms = trainer->optimizer().moments_m();
            auto& vs = trainer->optimizer().moments_v();
            for (size_t i = 0; i < model.params().size(); ++i) {
                write_mat(ms[i]);
                write_mat(vs[i]);
            }
        }
        if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: rename to " + path + " failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    require_little_endian();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!is || version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version));

    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    std::string hs(hlen, '\0');
    is.read(hs.data(), (std::streamsize)hlen);
    if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
    json header = json::parse(hs);
    if ((uint32_t)header.at("format_version") != kCheckpointVersion)
        throw std::runtime_error("checkpoint: header/container version mismatch");

    LoadedCheckpoint out;
    out.vocab = vocab_from_json(header.at("vocab"));
    out.backbone = backbone_from_json(header.at("backbone"));
    out.encoder = encoder_from_json(header.at("text_encoder"));
    out.char_vocab.chars = header.at("char_vocab").get<std::string>();
    out.extras.step = header.at("step");
    out.extras.rng_state = header.at("rng_state").get<std::string>();
    out.extras.has_optimizer = header.at("optimizer");
    out.extras.optimizer_step = header.at("optimizer_step");

    out.model = std::make_unique<CodecLM<float>>();
    out.model->init(out.vocab, out.backbone, out.encoder, out.char_vocab);

    const uint64_t data_begin = (uint64_t)is.tellg();
    auto read_into = [&](Mat<float>& m, const json& t) {
        int rows = t.at("rows"), cols = t.at("cols");
        if (rows != m.rows() || cols != m.cols())
            throw std::runtime_error("checkpoint: shape mismatch for " +
                                     t.at("name").get<std::string>());
        is.seekg((std::streamoff)(data_begin + (uint64_t)t.at("offset")));
        is.read(reinterpret_cast<char*>(m.data()),
                (std::streamsize)(m.size() * sizeof(float)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
    };

    // Index tensors by name; model parameter names are authoritative.
    std::unordered_map<std::string, const json*> by_name;
    for (const auto& t : header.at("tensors")) by_name[t.at("name")] = &t;
    for (auto* p : out.model->params()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: missing tensor " + p->name);
        read_into(p->w, *it->second);
    }
    if (out.extras.has_optimizer) {
        out.adam_m.resize(out.model->params().size());
        out.adam_v.resize(out.model->params().size());
        for (size_t i = 0; i < out.model->params().size(); ++i) {
            auto* p = out.model->params()[i];
            out.adam_m[i].resize(p->w.rows(), p->w.cols());
            out.adam_v[i].resize(p->w.rows(), p->w.cols());
            auto mi = by_name.find("adam.m." + p->name);
            auto vi = by_name.find("adam.v." + p->name);
            if (mi == by_name.end() || vi == by_name.end())
                throw std::runtime_error("checkpoint: missing optimizer tensor for " +
                                         p->name);
            read_into(out.adam_m[i], *mi->second);
            read_into(out.adam_v[i], *vi->second);
        }
    }
    return out;
}

}  // namespace codeclm
