// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers for the binary artifact formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace fgd::bytes {

static_assert(std::endian::native == std::endian::little,
              "binary I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    data_.insert(data_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    data_.insert(data_.end(), s.begin(), s.end());
  }
  void put_doubles(const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    data_.insert(data_.end(), p, p + v.size() * sizeof(double));
  }
  const std::vector<std::uint8_t>& data() const { return data_; }

 private:
  std::vector<std::uint8_t> data_;
};

/// Throws FormatError (with `what` as prefix) on truncation.
class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::string what)
      : data_(data), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string();
  std::vector<double> get_doubles(std::size_t n);
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;

  const std::vector<std::uint8_t>& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& data);

}  // namespace fgd::bytes
