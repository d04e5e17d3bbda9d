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

#include "codeclm/records.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace codeclm {
namespace {

const char* kHex = "0123456789ABCDEF";

int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

std::vector<TokenId> parse_ints(const std::string& s) {
    std::vector<TokenId> out;
    std::istringstream is(s);
    long v;
    while (is >> v) out.push_back((TokenId)v);
    if (!is.eof()) throw std::invalid_argument("record: malformed integer list: " + s);
    return out;
}

std::string join_ints(const TokenId* v, size_t n, size_t stride) {
    std::string out;
    for (size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += std::to_string(v[i * stride]);
    }
    return out;
}

}  // namespace

std::string escape_text_field(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        if (c == '%' || c == '|' || c == '\n' || c == '\r') {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 0xF];
        } else {
            out += (char)c;
        }
    }
    return out;
}

std::string unescape_text_field(const std::string& field) {
    std::string out;
    out.reserve(field.size());
    for (size_t i = 0; i < field.size(); ++i) {
        if (field[i] == '%') {
            if (i + 2 >= field.size()) throw std::invalid_argument("record: truncated escape");
            int hi = hex_val(field[i + 1]), lo = hex_val(field[i + 2]);
            if (hi < 0 || lo < 0) throw std::invalid_argument("record: bad escape");
            out += (char)((hi << 4) | lo);
            i += 2;
        } else {
            out += field[i];
        }
    }
    return out;
}

std::string format_record(const UtteranceRecord& rec) {
    std::string line = "id=" + rec.id;
    line += "|spk=" + std::to_string(rec.speaker);
    line += "|text=" + escape_text_field(rec.text);
    line += "|st=" + join_ints(rec.st_raw.data(), rec.st_raw.size(), 1);
    line += "|at=";
    if (rec.at.frames > 0) {
        for (int k = 0; k < rec.at.codebooks; ++k) {
            if (k) line += ';';
            line += join_ints(rec.at.tokens.data() + k, (size_t)rec.at.frames,
                              (size_t)rec.at.codebooks);
        }
    }
    return line;
}

UtteranceRecord parse_record(const std::string& line) {
    UtteranceRecord rec;
    std::vector<std::pair<std::string, std::string>> fields;
    size_t pos = 0;
    while (pos <= line.size()) {
        size_t bar = line.find('|', pos);
        std::string part = line.substr(pos, bar == std::string::npos ? bar : bar - pos);
        size_t eq = part.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("record: field without '=': " + part);
        fields.emplace_back(part.substr(0, eq), part.substr(eq + 1));
        if (bar == std::string::npos) break;
        pos = bar + 1;
    }

    bool have_id = false, have_text = false, have_st = false, have_at = false;
    for (auto& [key, value] : fields) {
        if (key == "id") {
            rec.id = value;
            have_id = true;
        } else if (key == "spk") {
            rec.speaker = std::stoi(value);
        } else if (key == "text") {
            rec.text = unescape_text_field(value);
            have_text = true;
        } else if (key == "st") {
            rec.st_raw = parse_ints(value);
            have_st = true;
        } else if (key == "at") {
            have_at = true;
            if (value.empty()) {
                rec.at = AcousticGrid(0, 0);
                continue;
            }
            std::vector<std::vector<TokenId>> rows;
            size_t p = 0;
            while (p <= value.size()) {
                size_t semi = value.find(';', p);
                std::string row = value.substr(p, semi == std::string::npos ? semi : semi - p);
                rows.push_back(parse_ints(row));
                if (semi == std::string::npos) break;
                p = semi + 1;
            }
            int k_num = (int)rows.size();
            int t_num = (int)rows[0].size();
            for (auto& r : rows) {
                if ((int)r.size() != t_num)
                    throw std::invalid_argument("record: ragged acoustic rows in " + rec.id);
            }
            rec.at = AcousticGrid(t_num, k_num);
            for (int k = 0; k < k_num; ++k)
                for (int t = 0; t < t_num; ++t) rec.at.at(t, k) = rows[k][t];
        } else {
            throw std::invalid_argument("record: unknown field '" + key + "'");
        }
    }
    if (!have_id || !have_text || !have_st || !have_at)
        throw std::invalid_argument("record: missing required field in: " + line);
    return rec;
}

void write_records(std::ostream& os, const std::vector<UtteranceRecord>& recs) {
    for (const auto& rec : recs) os << format_record(rec) << '\n';
}

std::vector<UtteranceRecord> read_records(std::istream& is) {
    std::vector<UtteranceRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(parse_record(line));
    }
    return out;
}

void write_records_file(const std::string& path,
                        const std::vector<UtteranceRecord>& recs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_records(os, recs);
}

std::vector<UtteranceRecord> read_records_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    return read_records(is);
}

}  // namespace codeclm
