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

#include <iosfwd>
#include <string>
#include <vector>

#include "codeclm/vocab.hpp"

namespace codeclm {

// Line-oriented utterance record. One utterance per line:
//
//   record := "id=" ID "|spk=" INT "|text=" TEXT "|st=" INTS "|at=" ROWS
//   INTS   := "" | int (" " int)*
//   ROWS   := "" | ROW (";" ROW)*          -- K rows, codebook-major;
//   ROW    := INTS                         -- row k lists column k over time
//
// TEXT is percent-escaped for '%', '|', '\n', '\r' so any normalized text
// round-trips. `st` holds the raw (pre-dedup) semantic ids. `spk` is an
// optional extension field (0 when absent).
struct UtteranceRecord {
    std::string id;
    int speaker = 0;
    std::string text;
    std::vector<TokenId> st_raw;
    AcousticGrid at;

    bool operator==(const UtteranceRecord&) const = default;
};

std::string escape_text_field(const std::string& text);
std::string unescape_text_field(const std::string& field);

std::string format_record(const UtteranceRecord& rec);
UtteranceRecord parse_record(const std::string& line);

void write_records(std::ostream& os, const std::vector<UtteranceRecord>& recs);
std::vector<UtteranceRecord> read_records(std::istream& is);

void write_records_file(const std::string& path,
                        const std::vector<UtteranceRecord>& recs);
std::vector<UtteranceRecord> read_records_file(const std::string& path);

}  // namespace codeclm
