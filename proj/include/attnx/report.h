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

#ifndef ATTNX_REPORT_H_
#define ATTNX_REPORT_H_

// Text and HTML renderings of one interpretation.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnx/core.h"

namespace attnx {

struct ReportUnit {
  std::string text;
  // Absent for tokens that carry no weight (special tokens, tokens outside
  // every sentence span).
  std::optional<double> weight;
};

struct ExplainReport {
  std::string instance_id;
  std::string technique;
  std::optional<OperationCombo> combo;
  AttentionVariant variant = AttentionVariant::kSoftmax;
  Granularity granularity = Granularity::kToken;
  int label = 0;
  std::string label_name;
  double probability = 0.0;
  std::string metric;  // "rft" | "faithfulness"
  double score = 0.0;
  std::vector<ReportUnit> units;
};

// Units for `interp` over `seq`: one per token, or one per sentence with the
// tokens outside spans kept as weightless units.
std::vector<ReportUnit> report_units(const TokenSequence& seq,
                                     const Interpretation& interp,
                                     std::span<const SentenceSpan> spans = {});

std::string render_text(const ExplainReport& report);

// Static page: red background for positive weights, blue for negative,
// opacity |w| / max|w|; zero and weightless units are left unstyled.
std::string render_html(const ExplainReport& report);

}  // namespace attnx

#endif  // ATTNX_REPORT_H_
