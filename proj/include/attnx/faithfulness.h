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

#ifndef ATTNX_FAITHFULNESS_H_
#define ATTNX_FAITHFULNESS_H_

// Perturbation-based scoring of interpretations: Ranked Faithful
// Truthfulness (RFT), the single-token faithfulness score, and sentence-level
// aggregation.
//
// The probe's answers to the perturbed inputs do not depend on the
// interpretation being scored, so they are gathered once per instance into a
// PerturbationProfile and every candidate interpretation is scored against
// it. The probe-taking overloads build the profile and score in one call.

#include <cstdint>
#include <span>
#include <vector>

#include "attnx/core.h"
#include "attnx/probe.h"

namespace attnx {

enum class PerturbationMode {
  kReplaceWithUnk,  // keeps S, positions unchanged
  kDeleteToken,     // S - 1
};

enum class MetricKind { kRft, kFaithfulness };

std::string to_string(PerturbationMode mode);
std::string to_string(MetricKind kind);
PerturbationMode parse_mode(std::string_view text);  // "unk" | "delete"
MetricKind parse_metric(std::string_view text);      // "rft" | "faithfulness"

struct RankVector {
  static constexpr int kUnranked = 0;

  // 1 = largest |w|. Special positions hold kUnranked.
  std::vector<int> ranks;
};

struct MetricScore {
  double value = 0.0;
  MetricKind kind = MetricKind::kRft;
  int label = 0;
  PerturbationMode mode = PerturbationMode::kReplaceWithUnk;
};

// Throws ContractError when `position` is special or out of range.
TokenSequence perturb(const TokenSequence& seq, std::size_t position,
                      PerturbationMode mode);

// Perturbs a set of non-special positions at once (a whole sentence).
TokenSequence perturb_positions(const TokenSequence& seq,
                                std::span<const std::size_t> positions,
                                PerturbationMode mode);

// Ranks non-special positions by descending |w|; equal magnitudes go to the
// earlier position first. An empty mask ranks every position.
RankVector rank_by_magnitude(std::span<const double> weights,
                             std::span<const std::uint8_t> special_mask = {});

// Per-unit score: sign-aligned prediction change, or minus the absolute
// change for a zero weight.
double score_v(double p_orig, double p_pert, double weight);

// Predictions for the original input and for each perturbation unit (every
// non-special token, or every sentence).
struct PerturbationProfile {
  PredictionVector original;
  std::vector<PredictionVector> perturbed;
  Granularity granularity = Granularity::kToken;
  PerturbationMode mode = PerturbationMode::kReplaceWithUnk;

  std::size_t unit_count() const { return perturbed.size(); }
};

// One batched probe request with S' + 1 inputs (original first).
PerturbationProfile token_profile(const ModelProbe& probe,
                                  const TokenSequence& seq,
                                  PerturbationMode mode);

PerturbationProfile sentence_profile(const ModelProbe& probe,
                                     const TokenSequence& seq,
                                     std::span<const SentenceSpan> spans,
                                     PerturbationMode mode);

// Unit weights: one weight per perturbation unit in profile order.
double rft_value(const PerturbationProfile& profile,
                 std::span<const double> unit_weights, int label);
double faithfulness_value(const PerturbationProfile& profile,
                          std::span<const double> unit_weights, int label);

// Token-level weights (length S) restricted to non-special positions.
std::vector<double> content_weights(const TokenSequence& seq,
                                    std::span<const double> weights);

// (1/S') * sum over non-special tokens of v / rank, summed in position order.
MetricScore rft(const ModelProbe& probe, const TokenSequence& seq,
                const Interpretation& interp, int label,
                PerturbationMode mode = PerturbationMode::kReplaceWithUnk);

// p_orig - p_pert for the top-ranked token.
MetricScore faithfulness_score(
    const ModelProbe& probe, const TokenSequence& seq,
    const Interpretation& interp, int label,
    PerturbationMode mode = PerturbationMode::kReplaceWithUnk);

// Mean token weight per sentence. Throws ContractError on an empty span.
Interpretation to_sentence_level(const Interpretation& interp,
                                 std::span<const SentenceSpan> spans);

// RFT where each sentence is perturbed as a unit and ranked among sentences.
MetricScore rft_sentence(
    const ModelProbe& probe, const TokenSequence& seq,
    const Interpretation& interp_sentence, std::span<const SentenceSpan> spans,
    int label, PerturbationMode mode = PerturbationMode::kReplaceWithUnk);

MetricScore faithfulness_score_sentence(
    const ModelProbe& probe, const TokenSequence& seq,
    const Interpretation& interp_sentence, std::span<const SentenceSpan> spans,
    int label, PerturbationMode mode = PerturbationMode::kReplaceWithUnk);

}  // namespace attnx

#endif  // ATTNX_FAITHFULNESS_H_
