// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/corpus.hpp"
#include "cqr/rewriter.hpp"

namespace cqr::distill {

inline constexpr std::string_view kQuestionMarker = "<Que>";
inline constexpr std::string_view kAnswerMarker = "<Ans>";

enum class LabelSource { RwFsl, EdSelf, Human };

std::string_view to_string(LabelSource s);
LabelSource parse_label_source(std::string_view s);

struct DistillExample {
  std::string input;
  std::string target;
  std::string conversation_id;
  int turn_no = 0;
  LabelSource label_source = LabelSource::Human;

  bool operator==(const DistillExample&) const = default;
};

/// "<Que> q1 <Ans> a1 ... <Que> qt".
std::string encode_input(const std::vector<corpus::QaPair>& context, std::string_view question);

struct DecodedInput {
  std::vector<corpus::QaPair> context;
  std::string question;
};

/// Inverse of encode_input for texts that do not themselves contain the markers.
DecodedInput parse_input(std::string_view input);

json to_json(const DistillExample& e);
DistillExample example_from_json(const json& j);

/// Query id -> human rewrite, for tasks that have one.
rewriter::RewriteMap human_labels(const std::vector<corpus::RewriteTask>& tasks);

struct TrainingSet {
  std::vector<DistillExample> train;
  std::vector<DistillExample> dev;
};

/// Samples n_train questions from `train_pool` and n_dev from `dev_pool`
/// (excluding any id already in train), uniformly without replacement.
/// Examples keep pool order. Throws InputError when a pool is too small or a
/// sampled task has no label.
TrainingSet export_training_set(const std::vector<corpus::RewriteTask>& train_pool,
                                const std::vector<corpus::RewriteTask>& dev_pool,
                                const rewriter::RewriteMap& labels, LabelSource source, std::size_t n_train,
                                std::size_t n_dev, std::uint64_t seed);

void write_examples(const std::filesystem::path& path, const std::vector<DistillExample>& examples);
std::vector<DistillExample> read_examples(const std::filesystem::path& path);

}  // namespace cqr::distill
