// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Run manifests: what was run, with which configuration, on which inputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fgd/config.hpp"
#include "json.hpp"

namespace fgd::pipeline {

/// SHA-1 of "blob <size>\0<bytes>", as git computes object ids.
std::string git_blob_sha1(std::span<const std::uint8_t> bytes);

/// Blob id of a file; for a directory, the blob id of the sorted
/// "<name> <id>\n" listing of its regular files.
std::string content_address(const std::filesystem::path& path);

class Manifest {
 public:
  Manifest(std::string verb, const TrainConfig& config);

  void add_input(const std::string& name, const std::filesystem::path& path);
  void add_output(const std::string& name, const std::filesystem::path& path);
  void set(const std::string& key, nlohmann::json value);

  const nlohmann::json& json() const { return doc_; }
  /// Writes <dir>/manifest-<verb>.json and returns its path.
  std::filesystem::path write(const std::filesystem::path& dir) const;

 private:
  nlohmann::json doc_;
};

}  // namespace fgd::pipeline
