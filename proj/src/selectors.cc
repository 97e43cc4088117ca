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

#include "attnx/selectors.h"

#include "attnx/error.h"

namespace attnx {
namespace {

const std::vector<SentenceSpan>& require_sentences(const Instance& instance) {
  if (!instance.sentences || instance.sentences->empty()) {
    throw DataError("instance " + instance.id +
                    ": sentence granularity requires sentence spans");
  }
  return *instance.sentences;
}

PerturbationProfile build_profile(const ModelProbe& probe,
                                  const Instance& instance,
                                  const MetricSpec& metric) {
  if (metric.granularity == Granularity::kSentence) {
    return sentence_profile(probe, instance.seq, require_sentences(instance),
                            metric.mode);
  }
  if (instance.seq.content_count() == 0) {
    throw DataError("instance " + instance.id + ": no non-special tokens");
  }
  return token_profile(probe, instance.seq, metric.mode);
}

double metric_value(MetricKind kind, const PerturbationProfile& profile,
                    std::span<const double> unit_weights, int label) {
  return kind == MetricKind::kRft
             ? rft_value(profile, unit_weights, label)
             : faithfulness_value(profile, unit_weights, label);
}

}  // namespace

ComboScorer::ComboScorer(const ModelProbe& probe, const Instance& instance,
                         const SearchSettings& settings)
    : instance_(instance),
      settings_(settings),
      table_(extract_interpretations(probe, instance.seq, settings.variant, 0,
                                     settings.layer_order, instance.id)),
      profile_(build_profile(probe, instance, settings.metric)) {
  unit_weights_.reserve(table_.size());
  for (const Interpretation& entry : table_.entries()) {
    if (settings_.metric.granularity == Granularity::kSentence) {
      unit_weights_.push_back(
          to_sentence_level(entry, *instance_.sentences).weights);
    } else {
      unit_weights_.push_back(content_weights(instance_.seq, entry.weights));
    }
  }
}

Interpretation ComboScorer::interpretation(std::size_t combo_index,
                                           int label) const {
  Interpretation out = table_.at(combo_index);
  if (settings_.metric.granularity == Granularity::kSentence) {
    out = to_sentence_level(out, *instance_.sentences);
  }
  out.label = label;
  return out;
}

double ComboScorer::score(std::size_t combo_index, int label) const {
  return value(settings_.metric.kind, combo_index, label);
}

double ComboScorer::score(const Interpretation& interp) const {
  return value(settings_.metric.kind, interp);
}

double ComboScorer::value(MetricKind kind, std::size_t combo_index,
                          int label) const {
  return metric_value(kind, profile_, unit_weights_.at(combo_index), label);
}

double ComboScorer::value(MetricKind kind, const Interpretation& interp) const {
  if (interp.granularity != settings_.metric.granularity) {
    throw ContractError("ComboScorer: interpretation granularity does not "
                        "match the metric");
  }
  if (interp.granularity == Granularity::kSentence) {
    return metric_value(kind, profile_, interp.weights, interp.label);
  }
  return metric_value(kind, profile_, content_weights(instance_.seq, interp.weights),
                      interp.label);
}

std::vector<double> ComboScorer::score_all(int label) const {
  std::vector<double> out(table_.size());
  for (std::size_t i = 0; i < table_.size(); ++i) out[i] = score(i, label);
  return out;
}

std::size_t select_best_index(std::span<const double> scores,
                              std::size_t baseline_index, double* best_score) {
  std::size_t best = baseline_index;
  double best_value = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > best_value) {
      best_value = scores[i];
      best = i;
    }
  }
  if (best_score != nullptr) *best_score = best_value;
  return best;
}

namespace {

std::size_t baseline_index(const InterpretationTable& table) {
  return combo_index(OperationCombo::Baseline(table.variant()), table.heads(),
                     table.layers());
}

}  // namespace

SelectionResult optimus_prime(const ComboScorer& scorer, int label) {
  SelectionResult result;
  result.scores = scorer.score_all(label);
  const std::size_t best = select_best_index(
      result.scores, baseline_index(scorer.table()), &result.best_score);
  result.best_combo = *scorer.table().at(best).combo;
  result.interpretation = scorer.interpretation(best, label);
  result.evaluated_count = result.scores.size();
  result.label = label;
  return result;
}

SelectionResult optimus_prime(const ModelProbe& probe, const Instance& instance,
                              const SearchSettings& settings, int label) {
  return optimus_prime(ComboScorer(probe, instance, settings), label);
}

int predicted_label(const Instance& /*instance*/, const PredictionVector& p) {
  return p.argmax();
}

BatchSelection optimus_batch_calibrate(
    std::span<const ComboScorer* const> scorers, std::span<const int> labels) {
  if (scorers.empty()) {
    throw ContractError("optimus_batch_calibrate: empty calibration set");
  }
  if (labels.size() != scorers.size()) {
    throw ContractError("optimus_batch_calibrate: one label per instance "
                        "required");
  }
  const InterpretationTable& first = scorers.front()->table();
  BatchSelection result;
  result.evaluated_count = first.size();
  result.summed_scores.assign(first.size(), 0.0);
  for (std::size_t n = 0; n < scorers.size(); ++n) {
    if (scorers[n]->size() != first.size()) {
      throw ContractError("optimus_batch_calibrate: instances disagree on "
                          "probe dimensions");
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      result.summed_scores[i] += scorers[n]->score(i, labels[n]);
    }
  }
  const std::size_t best = select_best_index(
      result.summed_scores, baseline_index(first), &result.best_score);
  result.best_combo = *first.at(best).combo;
  for (std::size_t n = 0; n < scorers.size(); ++n) {
    result.interpretations.push_back(scorers[n]->interpretation(best, labels[n]));
  }
  return result;
}

BatchSelection optimus_batch_calibrate(const ModelProbe& probe,
                                       std::span<const Instance> instances,
                                       const SearchSettings& settings,
                                       const LabelPolicy& label_policy) {
  if (instances.empty()) {
    throw ContractError("optimus_batch_calibrate: empty calibration set");
  }
  std::vector<ComboScorer> scorers;
  scorers.reserve(instances.size());
  std::vector<const ComboScorer*> views;
  std::vector<int> labels;
  for (const Instance& instance : instances) {
    scorers.emplace_back(probe, instance, settings);
    labels.push_back(label_policy(instance, scorers.back().prediction()));
  }
  for (const auto& s : scorers) views.push_back(&s);
  return optimus_batch_calibrate(views, labels);
}

Interpretation optimus_apply(const ModelProbe& probe, const TokenSequence& seq,
                             const OperationCombo& combo, int label,
                             LayerProductOrder order) {
  const ProbeInfo& info = probe.info();
  check_combo(combo, info.h_heads, info.m_layers);
  const ProbeResponse response = probe.forward(seq.token_ids());
  return apply_combo(response.attention, seq, combo, label, order,
                     !info.pre_softmax);
}

std::vector<int> predicted_labels(const PredictionVector& p,
                                  const ThresholdPolicy& policy) {
  if (p.task_kind() == TaskKind::kSingleLabel) return {p.argmax()};
  std::vector<int> out;
  for (std::size_t i = 0; i < p.label_count(); ++i) {
    if (p.probabilities()[i] > policy.threshold) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

LabelSelection optimus_label(const ComboScorer& scorer,
                             std::span<const int> labels) {
  LabelSelection out;
  for (int label : labels) out.per_label.emplace(label, optimus_prime(scorer, label));
  return out;
}

LabelSelection optimus_label(const ModelProbe& probe, const Instance& instance,
                             const SearchSettings& settings,
                             const ThresholdPolicy& policy) {
  const ComboScorer scorer(probe, instance, settings);
  const std::vector<int> labels = predicted_labels(scorer.prediction(), policy);
  if (labels.empty()) {
    throw DataError("instance " + instance.id +
                    ": no label predicted above threshold " +
                    std::to_string(policy.threshold));
  }
  return optimus_label(scorer, labels);
}

}  // namespace attnx
