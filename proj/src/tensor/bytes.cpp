// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/bytes.hpp"

#include <fstream>
#include <iterator>

#include "fgd/errors.hpp"

namespace fgd::bytes {

std::string Reader::get_string() {
  const auto n = get<std::uint64_t>();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<double> Reader::get_doubles(std::size_t n) {
  if (n > data_.size() / sizeof(double)) need(data_.size() + 1);
  need(n * sizeof(double));
  std::vector<double> v(n);
  std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
  pos_ += n * sizeof(double);
  return v;
}

void Reader::need(std::size_t n) const {
  if (n > data_.size() - pos_) throw FormatError(what_ + ": truncated data");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
}

}  // namespace fgd::bytes
