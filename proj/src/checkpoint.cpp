// SPDX-License-Identifier: Apache-2.0
#include "ptsc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

PTSC_BEGIN_NAMESPACE

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'T', 'S', 'C', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const NamedArray> entries) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw CheckpointError("checkpoint entry '" + e.name + "' has inconsistent shape");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put_le<std::uint64_t>(out, d);
    for (double v : e.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("failed to write checkpoint");
}

std::vector<NamedArray> read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(in, "entry count");
  std::vector<NamedArray> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray e;
    const auto len = get_le<std::uint32_t>(in, "name length");
    e.name.resize(len);
    if (!in.read(e.name.data(), len)) throw CheckpointError("checkpoint truncated in entry name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(get_le<std::uint64_t>(in, "extent"));
    e.values.resize(shape_numel(e.shape));
    for (auto& v : e.values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "values"));
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, entries);
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

NamedArray to_named_array(std::string name, const Tensor& t) {
  const auto d = t.data();
  return {std::move(name), t.shape(), std::vector<double>(d.begin(), d.end())};
}

NamedArray to_named_array(std::string name, std::span<const Real> values) {
  return {std::move(name), Shape{values.size()}, std::vector<double>(values.begin(), values.end())};
}

PTSC_END_NAMESPACE
