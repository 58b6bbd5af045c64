// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/util.hpp"

namespace cqr::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kInputError = 2, kRuntimeError = 3 };

/// Every tunable with its default value.
json default_config();

/// Default config overlaid with a JSON config file (merge patch).
json load_config(const std::filesystem::path& path);

/// Writes `<artifact>.manifest.json`: command, version, timestamp, config and
/// its hash, input file digests, plus command-specific details.
void write_manifest(const std::filesystem::path& artifact, const std::string& command, const json& config,
                    const std::map<std::string, std::filesystem::path>& inputs, const json& details = json::object());

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cqr::cli
