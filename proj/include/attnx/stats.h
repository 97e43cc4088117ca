/*
 * Copyright 2026 The attnx Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ATTNX_STATS_H_
#define ATTNX_STATS_H_

// Rationale agreement and rank statistics used by the evaluation harness.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnx/core.h"

namespace attnx {

// Average precision of `scores` against a 0/1 `mask`: units ranked by
// descending score, precision accumulated at each distinct score threshold
// weighted by the recall gained there. Equal scores share one threshold.
// Throws ContractError on a length mismatch, DataError when the mask has no
// positive entry.
double auprc(std::span<const double> scores, std::span<const std::uint8_t> mask);

// Token-level AUPRC restricted to the non-special positions of `seq`;
// sentence-level interpretations are scored unit-for-unit against `mask`.
double auprc(const Interpretation& interp, std::span<const std::uint8_t> mask,
             const TokenSequence& seq);

// Throws ContractError for fewer than 3 pairs or a length mismatch,
// DataError when either side has zero variance (undefined correlation).
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};
Correlation correlate(std::span<const double> x, std::span<const double> y);

enum class TieMethod {
  kAverage,  // tied entries share the mean of their positions
  kMin,      // tied entries all take the best position (1, 1, 3, ...)
};

// Ranks with 1 = largest value.
std::vector<double> rank_descending(std::span<const double> values,
                                    TieMethod ties = TieMethod::kAverage);

// Scores of techniques (rows) on datasets (columns); nullopt = missing.
struct ScoreGrid {
  std::vector<std::string> techniques;
  std::vector<std::string> datasets;
  std::vector<std::vector<std::optional<double>>> cells;  // [technique][dataset]
};

// Tab-separated grid: a header row "<label> <dataset>...", then one row per
// technique. Empty or non-numeric cells are missing.
ScoreGrid parse_score_grid(std::string_view tsv);

// Per technique: mean over datasets of its rank among techniques (1 = best
// = highest score). Throws DataError naming the technique and dataset of the
// first missing cell.
std::vector<double> average_rank(const ScoreGrid& grid,
                                 TieMethod ties = TieMethod::kAverage);

}  // namespace attnx

#endif  // ATTNX_STATS_H_
