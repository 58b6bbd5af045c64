// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace cqr {

struct ScoredDoc {
  std::string passage_id;
  double score = 0.0;
  int rank = 0;  // 1-based

  bool operator==(const ScoredDoc&) const = default;
};

/// Result ordering shared by every retriever: score descending, then passage id ascending.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

/// Assigns contiguous 1-based ranks in list order.
inline void assign_ranks(std::vector<ScoredDoc>& docs) {
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].rank = static_cast<int>(i + 1);
}

}  // namespace cqr
