// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptsc/tensor.hpp"

PTSC_BEGIN_NAMESPACE

/// Checkpoint layout, all integers little-endian:
///   magic "PTSCCKPT" | u32 version (1) | u64 entry count
///   per entry: u32 name length | name bytes | u32 rank | u64 extents[rank]
///              | f64 values[prod(extents)]
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, std::span<const NamedArray> entries);
std::vector<NamedArray> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> entries);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

NamedArray to_named_array(std::string name, const Tensor& t);
NamedArray to_named_array(std::string name, std::span<const Real> values);

PTSC_END_NAMESPACE
