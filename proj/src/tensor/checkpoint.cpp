// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fgd/errors.hpp"

namespace fgd {

namespace {

constexpr char kMagic[8] = {'F', 'G', 'D', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void get_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint: truncated data");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void NamedTensors::add(std::string name, Tensor tensor) {
  if (lookup_.count(name)) {
    throw ConfigError("parameter '" + name + "' registered twice");
  }
  lookup_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool NamedTensors::contains(std::string_view name) const {
  return lookup_.find(name) != lookup_.end();
}

const Tensor& NamedTensors::at(std::string_view name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) {
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
  }
  return entries_[it->second].second;
}

Tensor& NamedTensors::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t NamedTensors::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void NamedTensors::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

NamedTensors NamedTensors::clone() const {
  NamedTensors copy;
  for (const auto& [name, t] : entries_) {
    copy.add(name, Tensor::from(t.shape(), t.to_vector(), t.requires_grad()));
  }
  return copy;
}

void NamedTensors::copy_values_from(const NamedTensors& other) {
  if (other.size() != size()) {
    throw IntegrityError("parameter count mismatch: " +
                         std::to_string(other.size()) + " vs " +
                         std::to_string(size()));
  }
  for (auto& [name, t] : entries_) {
    const Tensor& src = other.at(name);
    if (src.shape() != t.shape()) {
      throw IntegrityError("parameter '" + name + "' has shape " +
                           shape_to_string(src.shape()) + ", expected " +
                           shape_to_string(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

std::vector<std::uint8_t> serialize_checkpoint(const NamedTensors& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * sizeof(double));
  }
  return out;
}

NamedTensors deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  }
  const auto count = in.get<std::uint64_t>();
  NamedTensors params;
  for (std::uint64_t e = 0; e < count; ++e) {
    std::string name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    std::vector<double> values(shape_numel(shape));
    in.get_doubles(values.data(), values.size());
    params.add(std::move(name), Tensor::from(std::move(shape),
                                             std::move(values), true));
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes");
  return params;
}

void save_checkpoint(const std::filesystem::path& path,
                     const NamedTensors& params) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string fnv1a_hex(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string checkpoint_fingerprint(const NamedTensors& params) {
  const auto bytes = serialize_checkpoint(params);
  return fnv1a_hex(bytes.data(), bytes.size());
}

}  // namespace fgd
