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

#include "pdpa/checkpoint.h"

#include <bit>
#include <fstream>
#include <limits>
#include <set>

#include "pdpa/errors.h"

namespace pdpa {
namespace {

class Writer {
 public:
  void U8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void U16(std::uint16_t v) { Le(v, 2); }
  void U64(std::uint64_t v) { Le(v, 8); }
  void F32(float v) { Le(std::bit_cast<std::uint32_t>(v), 4); }
  void Bytes(std::string_view s) { buf_.append(s); }
  const std::string& buffer() const { return buf_; }

 private:
  void Le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  std::uint8_t U8() { return static_cast<std::uint8_t>(Take(1)[0]); }
  std::uint16_t U16() { return static_cast<std::uint16_t>(Le(2)); }
  std::uint64_t U64() { return Le(8); }
  float F32() { return std::bit_cast<float>(static_cast<std::uint32_t>(Le(4))); }
  std::string_view Bytes(std::size_t n) { return Take(n); }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  std::string_view Take(std::size_t n) {
    if (n > remaining()) {
      throw FormatError(source_ + ": truncated container at byte " + std::to_string(pos_));
    }
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t Le(int n) {
    std::string_view b = Take(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return v;
  }

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void WriteContainer(const std::filesystem::path& path,
                    std::span<const ContainerRecord> records) {
  Writer w;
  w.Bytes(std::string_view(kContainerMagic.data(), kContainerMagic.size()));
  w.U8(kContainerVersion);
  w.U64(records.size());
  for (const ContainerRecord& r : records) {
    if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("record name too long: " + r.name.substr(0, 64));
    }
    if (r.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ContractError("record rank too large: " + r.name);
    }
    if (NumElements(r.shape) != r.values.size()) {
      throw ContractError("record '" + r.name + "' shape does not match its values");
    }
    w.U16(static_cast<std::uint16_t>(r.name.size()));
    w.Bytes(r.name);
    w.U8(static_cast<std::uint8_t>(r.shape.size()));
    for (std::size_t d : r.shape) w.U64(d);
    w.U8(r.flag);
    for (float v : r.values) w.F32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ContainerRecord> ReadContainer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());

  if (r.remaining() < kContainerMagic.size() ||
      r.Bytes(kContainerMagic.size()) !=
          std::string_view(kContainerMagic.data(), kContainerMagic.size())) {
    throw FormatError(path.string() + ": bad magic, not a PDPA container");
  }
  const std::uint8_t version = r.U8();
  if (version != kContainerVersion) {
    throw FormatError(path.string() + ": unsupported container version " +
                      std::to_string(version));
  }
  const std::uint64_t count = r.U64();
  std::vector<ContainerRecord> records;
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    ContainerRecord rec;
    const std::uint16_t name_len = r.U16();
    rec.name = std::string(r.Bytes(name_len));
    if (!names.insert(rec.name).second) {
      throw FormatError(path.string() + ": duplicate record name '" + rec.name + "'");
    }
    const std::uint8_t rank = r.U8();
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.U64();
      if (dim != 0 && elements > r.remaining() / dim) {
        throw FormatError(path.string() + ": truncated container (record '" +
                          rec.name + "' claims more values than the file holds)");
      }
      elements *= dim;
      rec.shape.push_back(static_cast<std::size_t>(dim));
    }
    rec.flag = r.U8();
    if (elements * 4 > r.remaining()) {
      throw FormatError(path.string() + ": truncated container in record '" +
                        rec.name + "'");
    }
    rec.values.resize(elements);
    for (float& v : rec.values) v = r.F32();
    records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) +
                      " trailing bytes after the last record");
  }
  return records;
}

void SaveCheckpoint(const ParameterRegistry& registry, const std::filesystem::path& path) {
  std::vector<ContainerRecord> records;
  records.reserve(registry.size());
  for (const Parameter& p : registry) {
    ContainerRecord rec{p.name, p.value.shape(), static_cast<std::uint8_t>(p.trainable), {}};
    rec.values.reserve(p.value.size());
    for (double v : p.value.data()) rec.values.push_back(static_cast<float>(v));
    records.push_back(std::move(rec));
  }
  WriteContainer(path, records);
}

ParameterRegistry LoadCheckpoint(const std::filesystem::path& path) {
  ParameterRegistry registry;
  for (ContainerRecord& rec : ReadContainer(path)) {
    if (rec.flag > 1) {
      throw FormatError(path.string() + ": record '" + rec.name +
                        "' has trainability byte " + std::to_string(rec.flag) +
                        " (not a checkpoint?)");
    }
    std::vector<double> values(rec.values.begin(), rec.values.end());
    registry.Add(rec.name, Tensor(rec.shape, std::move(values)), rec.flag == 1);
  }
  return registry;
}

}  // namespace pdpa
