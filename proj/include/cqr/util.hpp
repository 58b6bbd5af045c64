// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cqr {

using json = nlohmann::json;

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

/// Calls `fn(line_no, record)` for every non-blank line of a JSON-lines file.
/// Malformed JSON raises InputError naming the 1-based line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// Parses either a JSON array or JSON-lines content into a list of records.
std::vector<json> read_json_records(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

/// Picks `n` distinct indices from [0, population) uniformly without replacement.
/// The draw sequence depends only on `seed` (mt19937_64 with rejection sampling),
/// so results are identical across standard libraries. Returned indices are sorted.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

}  // namespace cqr
