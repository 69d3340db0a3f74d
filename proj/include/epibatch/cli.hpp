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

#ifndef EPIBATCH_CLI_HPP_
#define EPIBATCH_CLI_HPP_

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace epibatch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

struct RerunReport {
  bool identical = false;
  std::filesystem::path rerun_dir;
  std::map<std::string, std::string> expected;
  std::map<std::string, std::string> actual;
  std::vector<std::string> differing;  // paths missing, extra or changed
};

// Re-executes the run recorded in `manifest` into `out_dir` and compares output digests.
RerunReport rerun(const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

}  // namespace epibatch::cli

#endif  // EPIBATCH_CLI_HPP_
