// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Flat parameter container and its binary checkpoint format:
//
//   magic "FGDCKPT\0" | u32 version | u64 entry count
//   per entry: u32 name length | name bytes | u32 rank | u64 dims[rank]
//              | f64 values[prod(dims)], row-major
//
// All integers and floats are little-endian. Loading reproduces every value
// bit-for-bit.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fgd/tensor.hpp"

namespace fgd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named parameters in insertion order.
class NamedTensors {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  void zero_grad();
  NamedTensors clone() const;
  /// Deep copy with the same names, shapes and values; throws on mismatch.
  void copy_values_from(const NamedTensors& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> lookup_;
};

std::vector<std::uint8_t> serialize_checkpoint(const NamedTensors& params);
NamedTensors deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const NamedTensors& params);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a digest over the serialized bytes, as 16 hex digits.
std::string checkpoint_fingerprint(const NamedTensors& params);
std::string fnv1a_hex(const std::uint8_t* data, std::size_t size);

}  // namespace fgd
