// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "fgd/bytes.hpp"
#include "fgd/errors.hpp"

namespace fgd::pipeline {

std::string git_blob_sha1(std::span<const std::uint8_t> bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &size) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < size; ++i) {
    os << std::setw(2) << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string content_address(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<std::string> lines;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      lines.push_back(entry.path().filename().string() + " " +
                      content_address(entry.path()) + "\n");
    }
    std::sort(lines.begin(), lines.end());
    std::string listing;
    for (const auto& l : lines) listing += l;
    return git_blob_sha1(std::span(
        reinterpret_cast<const std::uint8_t*>(listing.data()), listing.size()));
  }
  const auto data = bytes::read_file(path);
  return git_blob_sha1(data);
}

Manifest::Manifest(std::string verb, const TrainConfig& config) {
  doc_ = {{"verb", std::move(verb)},
          {"config_hash", config.hash()},
          {"config", config.to_json()},
          {"seed", config.seed},
          {"seeds", config.seeds},
          {"inputs", nlohmann::json::object()},
          {"outputs", nlohmann::json::object()}};
}

void Manifest::add_input(const std::string& name,
                         const std::filesystem::path& path) {
  doc_["inputs"][name] = {{"path", path.string()},
                          {"sha1", content_address(path)}};
}

void Manifest::add_output(const std::string& name,
                          const std::filesystem::path& path) {
  doc_["outputs"][name] = {{"path", path.string()},
                           {"sha1", content_address(path)}};
}

void Manifest::set(const std::string& key, nlohmann::json value) {
  doc_[key] = std::move(value);
}

std::filesystem::path Manifest::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto path = dir / ("manifest-" + doc_["verb"].get<std::string>() + ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  out << doc_.dump(2) << '\n';
  return path;
}

}  // namespace fgd::pipeline
