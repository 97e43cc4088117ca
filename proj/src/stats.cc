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

#include "attnx/stats.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "attnx/error.h"

namespace attnx {

double auprc(std::span<const double> scores,
             std::span<const std::uint8_t> mask) {
  if (scores.size() != mask.size()) {
    throw ContractError("auprc: " + std::to_string(scores.size()) +
                        " weights vs " + std::to_string(mask.size()) +
                        " rationale entries");
  }
  std::size_t positives = 0;
  for (std::uint8_t m : mask) positives += m != 0;
  if (positives == 0) {
    throw DataError("auprc: rationale mask has no positive entry");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double area = 0.0;
  double last_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    tp += mask[order[i]] != 0;
    ++seen;
    const bool threshold_ends =
        i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
    if (!threshold_ends) continue;
    const double recall = static_cast<double>(tp) / positives;
    const double precision = static_cast<double>(tp) / seen;
    area += (recall - last_recall) * precision;
    last_recall = recall;
  }
  return area;
}

double auprc(const Interpretation& interp, std::span<const std::uint8_t> mask,
             const TokenSequence& seq) {
  if (interp.granularity == Granularity::kSentence) {
    return auprc(interp.weights, mask);
  }
  if (interp.weights.size() != seq.size() || mask.size() != seq.size()) {
    throw ContractError("auprc: token weights, rationale and sequence "
                        "lengths differ");
  }
  std::vector<double> w;
  std::vector<std::uint8_t> m;
  for (std::size_t pos : seq.content_positions()) {
    w.push_back(interp.weights[pos]);
    m.push_back(mask[pos]);
  }
  return auprc(w, m);
}

namespace {

void check_pairs(std::span<const double> x, std::span<const double> y,
                 const char* what) {
  if (x.size() != y.size()) {
    throw ContractError(std::string(what) + ": series lengths differ");
  }
  if (x.size() < 3) {
    throw ContractError(std::string(what) + ": needs at least 3 pairs");
  }
}

double product_moment(std::span<const double> x, std::span<const double> y,
                      const char* what) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DataError(std::string(what) +
                    ": undefined correlation (zero variance)");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y, "pearson");
  return product_moment(x, y, "pearson");
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y, "spearman");
  const std::vector<double> rx = rank_descending(x);
  const std::vector<double> ry = rank_descending(y);
  return product_moment(rx, ry, "spearman");
}

Correlation correlate(std::span<const double> x, std::span<const double> y) {
  return {pearson(x, y), spearman(x, y)};
}

std::vector<double> rank_descending(std::span<const double> values,
                                    TieMethod ties) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] > values[b];
  });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = ties == TieMethod::kAverage
                            ? (static_cast<double>(i + 1) + (j + 1)) / 2.0
                            : static_cast<double>(i + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> average_rank(const ScoreGrid& grid, TieMethod ties) {
  const std::size_t t_count = grid.techniques.size();
  const std::size_t d_count = grid.datasets.size();
  if (grid.cells.size() != t_count) {
    throw ContractError("average_rank: one row per technique required");
  }
  if (d_count == 0) throw ContractError("average_rank: no datasets");
  for (std::size_t t = 0; t < t_count; ++t) {
    if (grid.cells[t].size() != d_count) {
      throw ContractError("average_rank: row for " + grid.techniques[t] +
                          " has the wrong number of datasets");
    }
    for (std::size_t d = 0; d < d_count; ++d) {
      if (!grid.cells[t][d]) {
        throw DataError("average_rank: missing score for technique '" +
                        grid.techniques[t] + "' on dataset '" +
                        grid.datasets[d] + "'");
      }
    }
  }
  std::vector<double> sums(t_count, 0.0);
  std::vector<double> column(t_count);
  for (std::size_t d = 0; d < d_count; ++d) {
    for (std::size_t t = 0; t < t_count; ++t) column[t] = *grid.cells[t][d];
    const std::vector<double> ranks = rank_descending(column, ties);
    for (std::size_t t = 0; t < t_count; ++t) sums[t] += ranks[t];
  }
  for (double& s : sums) s /= static_cast<double>(d_count);
  return sums;
}

ScoreGrid parse_score_grid(std::string_view tsv) {
  auto split = [](std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cells.emplace_back(line.substr(start, tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    return cells;
  };
  ScoreGrid grid;
  bool header = true;
  std::size_t start = 0;
  while (start < tsv.size()) {
    std::size_t end = tsv.find('\n', start);
    if (end == std::string_view::npos) end = tsv.size();
    std::string_view line = tsv.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (header) {
      grid.datasets.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    grid.techniques.push_back(cells.front());
    std::vector<std::optional<double>> row(grid.datasets.size());
    for (std::size_t d = 0; d < grid.datasets.size() && d + 1 < cells.size();
         ++d) {
      const std::string& text = cells[d + 1];
      double value = 0.0;
      const auto [ptr, ec] =
          std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec == std::errc() && ptr == text.data() + text.size() &&
          !text.empty()) {
        row[d] = value;
      }
    }
    grid.cells.push_back(std::move(row));
  }
  if (header) throw DataError("score grid: no header row");
  return grid;
}

}  // namespace attnx
