// Copyright 2026 The cf-translate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFT_CLI_HPP
#define CFT_CLI_HPP

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace cft {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one `cf-translate` subcommand. `args` excludes the program name.
/// Returns 0 on success, 1 on a runtime failure and 2 on a usage error;
/// diagnostics go to `err`.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Appends one provenance record to `<dir>/run.json`.
void append_run_record(const std::filesystem::path& dir, const nlohmann::json& record);

}  // namespace cft

#endif  // CFT_CLI_HPP
