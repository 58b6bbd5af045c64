// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace cqr::text {

enum class Stemmer { None, Porter };

struct Analyzer {
  bool lowercase = true;
  Stemmer stemmer = Stemmer::Porter;
  std::shared_ptr<const std::unordered_set<std::string>> stopwords;  // null: keep everything

  bool operator==(const Analyzer& other) const;
};

/// One stopword per line; blank lines and '#' comments are ignored.
std::shared_ptr<const std::unordered_set<std::string>> load_stopwords(const std::filesystem::path& path);

/// Splits UTF-8 text on non-alphanumeric code points, then lowercases,
/// removes stopwords and stems according to `analyzer`.
std::vector<std::string> analyze(std::string_view text, const Analyzer& analyzer = {});

/// Porter stemmer, following the author's reference C implementation.
/// Words that are not pure lowercase ASCII letters are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace cqr::text
