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

// Binary container shared by checkpoints and encoded-dataset caches.
//
//   magic "PDPA" | version 0x01 | record count (u64 LE)
//   per record:  name length (u16 LE) | UTF-8 name | rank (u8)
//                | dims (u64 LE each) | flag (u8) | values (f32 LE each)
//
// In checkpoints the flag is the trainability byte (0 or 1). Dataset caches
// use the flag as a record type tag (see data.h).

#ifndef PDPA_CHECKPOINT_H_
#define PDPA_CHECKPOINT_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdpa/registry.h"
#include "pdpa/tensor.h"

namespace pdpa {

inline constexpr std::array<char, 4> kContainerMagic = {'P', 'D', 'P', 'A'};
inline constexpr std::uint8_t kContainerVersion = 0x01;

struct ContainerRecord {
  std::string name;
  Shape shape;
  std::uint8_t flag = 0;
  std::vector<float> values;
};

void WriteContainer(const std::filesystem::path& path,
                    std::span<const ContainerRecord> records);
// Throws FormatError on bad magic or version, truncation, trailing bytes and
// duplicate record names; IoError when the file cannot be opened.
std::vector<ContainerRecord> ReadContainer(const std::filesystem::path& path);

// Values are stored as 32-bit floats.
void SaveCheckpoint(const ParameterRegistry& registry, const std::filesystem::path& path);
ParameterRegistry LoadCheckpoint(const std::filesystem::path& path);

}  // namespace pdpa

#endif  // PDPA_CHECKPOINT_H_
