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

#ifndef ATTNX_SELECTORS_H_
#define ATTNX_SELECTORS_H_

// Picking the most faithful operation combo: per instance, per calibration
// batch, or per predicted label.
//
// All three walk combos in canonical order, start from the baseline combo
// with score 0, and replace the incumbent only on a strictly greater score,
// so the first maximal combo wins and nothing scoring <= 0 displaces the
// baseline.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnx/attention.h"
#include "attnx/core.h"
#include "attnx/faithfulness.h"
#include "attnx/probe.h"

namespace attnx {

// One instance as seen by the engine.
struct Instance {
  std::string id;
  TokenSequence seq;
  std::optional<std::vector<SentenceSpan>> sentences;
};

struct MetricSpec {
  MetricKind kind = MetricKind::kRft;
  PerturbationMode mode = PerturbationMode::kReplaceWithUnk;
  Granularity granularity = Granularity::kToken;
};

struct SearchSettings {
  AttentionVariant variant = AttentionVariant::kSoftmax;
  MetricSpec metric;
  LayerProductOrder layer_order = LayerProductOrder::kLastToFirst;
};

// Everything needed to score every combo of one instance: the candidate
// table, the probe's answers for the perturbations, and the instance's
// prediction. Built with S' + 2 probe calls (one forward for attention, one
// batched profile request).
class ComboScorer {
 public:
  ComboScorer(const ModelProbe& probe, const Instance& instance,
              const SearchSettings& settings);

  const InterpretationTable& table() const { return table_; }
  const PredictionVector& prediction() const { return profile_.original; }
  std::size_t size() const { return table_.size(); }

  // Interpretation at the metric's granularity (sentence-aggregated if
  // needed), tagged with `label`.
  Interpretation interpretation(std::size_t combo_index, int label) const;

  double score(std::size_t combo_index, int label) const;
  // Scores an arbitrary interpretation at the metric's granularity.
  double score(const Interpretation& interp) const;

  // Scores of every combo for `label`, canonical order.
  std::vector<double> score_all(int label) const;

  // As score(), but for any metric over the same perturbation profile.
  double value(MetricKind kind, std::size_t combo_index, int label) const;
  double value(MetricKind kind, const Interpretation& interp) const;

 private:
  Instance instance_;
  SearchSettings settings_;
  InterpretationTable table_;
  PerturbationProfile profile_;
  std::vector<std::vector<double>> unit_weights_;  // per combo
};

struct SelectionResult {
  OperationCombo best_combo;
  double best_score = 0.0;
  Interpretation interpretation;
  std::size_t evaluated_count = 0;
  int label = 0;
  // Score of every combo in canonical order (for audits and frequencies).
  std::vector<double> scores;
};

struct BatchSelection {
  OperationCombo best_combo;
  double best_score = 0.0;  // summed over the calibration instances
  std::vector<Interpretation> interpretations;  // per instance, best combo
  std::size_t evaluated_count = 0;               // combos per instance
  std::vector<double> summed_scores;
};

struct LabelSelection {
  std::map<int, SelectionResult> per_label;
};

// Canonical argmax with strict comparison, incumbent = baseline at 0.
std::size_t select_best_index(std::span<const double> scores,
                              std::size_t baseline_index, double* best_score);

// Argmax over `label`'s scores for one instance.
SelectionResult optimus_prime(const ModelProbe& probe, const Instance& instance,
                              const SearchSettings& settings, int label);
SelectionResult optimus_prime(const ComboScorer& scorer, int label);

// Picks the label the probe predicts for the instance: the argmax label.
using LabelPolicy = std::function<int(const Instance&, const PredictionVector&)>;
int predicted_label(const Instance& instance, const PredictionVector& p);

// Sums each combo's score over the calibration instances and takes the
// argmax. The winning combo is meant to be reused via optimus_apply.
BatchSelection optimus_batch_calibrate(const ModelProbe& probe,
                                       std::span<const Instance> instances,
                                       const SearchSettings& settings,
                                       const LabelPolicy& label_policy =
                                           predicted_label);
BatchSelection optimus_batch_calibrate(
    std::span<const ComboScorer* const> scorers, std::span<const int> labels);

// Runs only `combo`'s pipeline; throws ContractError when the combo does not
// fit the probe's dimensions.
Interpretation optimus_apply(const ModelProbe& probe, const TokenSequence& seq,
                             const OperationCombo& combo, int label,
                             LayerProductOrder order =
                                 LayerProductOrder::kLastToFirst);

struct ThresholdPolicy {
  double threshold = 0.5;
};

// Labels predicted for the instance: argmax for single-label tasks, every
// label with probability > threshold for multi-label tasks.
std::vector<int> predicted_labels(const PredictionVector& p,
                                  const ThresholdPolicy& policy);

// One search per predicted label. Throws DataError when no label clears the
// threshold.
LabelSelection optimus_label(const ModelProbe& probe, const Instance& instance,
                             const SearchSettings& settings,
                             const ThresholdPolicy& policy = {});
LabelSelection optimus_label(const ComboScorer& scorer,
                             std::span<const int> labels);

}  // namespace attnx

#endif  // ATTNX_SELECTORS_H_
