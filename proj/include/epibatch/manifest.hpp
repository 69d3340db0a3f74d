// Copyright 2026 The epibatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EPIBATCH_MANIFEST_HPP_
#define EPIBATCH_MANIFEST_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace epibatch {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Relative path -> digest for every regular file below `dir`, sorted by path.
std::map<std::string, std::string> digest_tree(const std::filesystem::path& dir,
                                               const std::vector<std::string>& exclude = {});

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // subcommand arguments, paths absolute
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::string version = kToolVersion;
  std::map<std::string, std::string> inputs;   // absolute path -> digest
  std::map<std::string, std::string> outputs;  // path relative to the run dir -> digest
};

nlohmann::ordered_json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

RunManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m);

}  // namespace epibatch

#endif  // EPIBATCH_MANIFEST_HPP_
