// Copyright 2026 The PDPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small helpers for the plain CSV artifacts written by the harness.

#ifndef PDPA_CSV_H_
#define PDPA_CSV_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pdpa {

// 17 significant digits, enough for an exact decimal round trip.
std::string FormatDouble(double value);

// Strict parsers; the whole field must be consumed. `context` prefixes the
// FormatError message.
double ParseDouble(std::string_view text, std::string_view context);
std::int64_t ParseInt(std::string_view text, std::string_view context);

std::vector<std::string> SplitFields(std::string_view line, char sep = ',');

// Reads a CSV file, checks its header and returns the data rows split into
// fields. Every row must have as many fields as the header.
std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& path,
                                              std::string_view expected_header);

}  // namespace pdpa

#endif  // PDPA_CSV_H_
