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

#include "attnx/faithfulness.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attnx/error.h"

namespace attnx {

std::string to_string(PerturbationMode mode) {
  return mode == PerturbationMode::kReplaceWithUnk ? "unk" : "delete";
}

std::string to_string(MetricKind kind) {
  return kind == MetricKind::kRft ? "rft" : "faithfulness";
}

PerturbationMode parse_mode(std::string_view text) {
  if (text == "unk") return PerturbationMode::kReplaceWithUnk;
  if (text == "delete") return PerturbationMode::kDeleteToken;
  throw ConfigError("unknown perturbation mode '" + std::string(text) +
                    "' (expected unk or delete)");
}

MetricKind parse_metric(std::string_view text) {
  if (text == "rft") return MetricKind::kRft;
  if (text == "faithfulness" || text == "f") return MetricKind::kFaithfulness;
  throw ConfigError("unknown metric '" + std::string(text) +
                    "' (expected rft or faithfulness)");
}

TokenSequence perturb_positions(const TokenSequence& seq,
                                std::span<const std::size_t> positions,
                                PerturbationMode mode) {
  std::vector<std::uint8_t> hit(seq.size(), 0);
  for (std::size_t p : positions) {
    if (p >= seq.size()) {
      throw ContractError("perturb: position " + std::to_string(p) +
                          " out of range for length " +
                          std::to_string(seq.size()));
    }
    if (seq.is_special(p)) {
      throw ContractError("perturb: position " + std::to_string(p) +
                          " is a special token");
    }
    hit[p] = 1;
  }

  if (mode == PerturbationMode::kReplaceWithUnk) {
    std::vector<std::string> tokens = seq.tokens();
    std::vector<int> ids = seq.token_ids();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (hit[i]) {
        tokens[i] = "[UNK]";
        ids[i] = seq.unk_id();
      }
    }
    return TokenSequence(std::move(tokens), std::move(ids), seq.special_mask(),
                         seq.cls_index(), seq.unk_id());
  }

  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::vector<std::uint8_t> special;
  std::size_t cls_index = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (hit[i]) continue;
    if (i == seq.cls_index()) cls_index = ids.size();
    tokens.push_back(seq.tokens()[i]);
    ids.push_back(seq.token_ids()[i]);
    special.push_back(seq.special_mask()[i]);
  }
  return TokenSequence(std::move(tokens), std::move(ids), std::move(special),
                       cls_index, seq.unk_id());
}

TokenSequence perturb(const TokenSequence& seq, std::size_t position,
                      PerturbationMode mode) {
  const std::size_t positions[] = {position};
  return perturb_positions(seq, positions, mode);
}

RankVector rank_by_magnitude(std::span<const double> weights,
                             std::span<const std::uint8_t> special_mask) {
  if (!special_mask.empty() && special_mask.size() != weights.size()) {
    throw ContractError("rank_by_magnitude: mask length mismatch");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (special_mask.empty() || !special_mask[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return std::abs(weights[a]) > std::abs(weights[b]);
                   });
  RankVector out{std::vector<int>(weights.size(), RankVector::kUnranked)};
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.ranks[order[r]] = static_cast<int>(r + 1);
  }
  return out;
}

double score_v(double p_orig, double p_pert, double weight) {
  if (weight > 0.0) return p_orig - p_pert;
  if (weight < 0.0) return p_pert - p_orig;
  return -std::abs(p_orig - p_pert);
}

namespace {

PerturbationProfile run_profile(
    const ModelProbe& probe, const TokenSequence& seq,
    const std::vector<std::vector<std::size_t>>& units, Granularity granularity,
    PerturbationMode mode) {
  if (units.empty()) {
    throw ContractError("perturbation profile: instance has no perturbable "
                        "units");
  }
  std::vector<std::vector<int>> batch;
  batch.reserve(units.size() + 1);
  batch.push_back(seq.token_ids());
  for (const auto& positions : units) {
    batch.push_back(perturb_positions(seq, positions, mode).token_ids());
  }
  std::vector<ProbeResponse> responses = probe.forward_batch(batch);
  if (responses.size() != batch.size()) {
    throw ProbeError("forward_batch returned " +
                     std::to_string(responses.size()) + " responses for " +
                     std::to_string(batch.size()) + " inputs");
  }
  PerturbationProfile profile{std::move(responses.front().prediction), {},
                              granularity, mode};
  profile.perturbed.reserve(units.size());
  for (std::size_t i = 1; i < responses.size(); ++i) {
    profile.perturbed.push_back(std::move(responses[i].prediction));
  }
  return profile;
}

void check_unit_weights(const PerturbationProfile& profile,
                        std::span<const double> unit_weights) {
  if (unit_weights.size() != profile.unit_count()) {
    throw ContractError("metric: " + std::to_string(unit_weights.size()) +
                        " weights for " +
                        std::to_string(profile.unit_count()) + " units");
  }
  if (profile.unit_count() == 0) {
    throw ContractError("metric: no perturbable units");
  }
}

}  // namespace

PerturbationProfile token_profile(const ModelProbe& probe,
                                  const TokenSequence& seq,
                                  PerturbationMode mode) {
  std::vector<std::vector<std::size_t>> units;
  for (std::size_t p : seq.content_positions()) units.push_back({p});
  return run_profile(probe, seq, units, Granularity::kToken, mode);
}

PerturbationProfile sentence_profile(const ModelProbe& probe,
                                     const TokenSequence& seq,
                                     std::span<const SentenceSpan> spans,
                                     PerturbationMode mode) {
  std::vector<std::vector<std::size_t>> units;
  for (const SentenceSpan& span : spans) {
    if (span.begin >= span.end) {
      throw ContractError("sentence span (" + std::to_string(span.begin) +
                          "," + std::to_string(span.end) + ") is empty");
    }
    std::vector<std::size_t> positions(span.size());
    std::iota(positions.begin(), positions.end(), span.begin);
    units.push_back(std::move(positions));
  }
  return run_profile(probe, seq, units, Granularity::kSentence, mode);
}

double rft_value(const PerturbationProfile& profile,
                 std::span<const double> unit_weights, int label) {
  check_unit_weights(profile, unit_weights);
  const RankVector ranks = rank_by_magnitude(unit_weights);
  const double p_orig = profile.original.probability(label);
  double total = 0.0;
  for (std::size_t u = 0; u < unit_weights.size(); ++u) {
    const double v =
        score_v(p_orig, profile.perturbed[u].probability(label), unit_weights[u]);
    total += v / static_cast<double>(ranks.ranks[u]);
  }
  return total / static_cast<double>(unit_weights.size());
}

double faithfulness_value(const PerturbationProfile& profile,
                          std::span<const double> unit_weights, int label) {
  check_unit_weights(profile, unit_weights);
  const RankVector ranks = rank_by_magnitude(unit_weights);
  const auto top = static_cast<std::size_t>(
      std::find(ranks.ranks.begin(), ranks.ranks.end(), 1) -
      ranks.ranks.begin());
  return profile.original.probability(label) -
         profile.perturbed[top].probability(label);
}

std::vector<double> content_weights(const TokenSequence& seq,
                                    std::span<const double> weights) {
  if (weights.size() != seq.size()) {
    throw ContractError("interpretation has " + std::to_string(weights.size()) +
                        " weights for a sequence of " +
                        std::to_string(seq.size()) + " tokens");
  }
  std::vector<double> out;
  for (std::size_t p : seq.content_positions()) out.push_back(weights[p]);
  return out;
}

namespace {

void require_granularity(const Interpretation& interp, Granularity expected) {
  if (interp.granularity != expected) {
    throw ContractError("metric expects a " + to_string(expected) +
                        "-level interpretation");
  }
}

}  // namespace

MetricScore rft(const ModelProbe& probe, const TokenSequence& seq,
                const Interpretation& interp, int label,
                PerturbationMode mode) {
  require_granularity(interp, Granularity::kToken);
  const auto weights = content_weights(seq, interp.weights);
  const auto profile = token_profile(probe, seq, mode);
  return {rft_value(profile, weights, label), MetricKind::kRft, label, mode};
}

MetricScore faithfulness_score(const ModelProbe& probe,
                               const TokenSequence& seq,
                               const Interpretation& interp, int label,
                               PerturbationMode mode) {
  require_granularity(interp, Granularity::kToken);
  const auto weights = content_weights(seq, interp.weights);
  const auto profile = token_profile(probe, seq, mode);
  return {faithfulness_value(profile, weights, label),
          MetricKind::kFaithfulness, label, mode};
}

Interpretation to_sentence_level(const Interpretation& interp,
                                 std::span<const SentenceSpan> spans) {
  require_granularity(interp, Granularity::kToken);
  Interpretation out{{}, interp.combo, interp.label, Granularity::kSentence};
  out.weights.reserve(spans.size());
  for (const SentenceSpan& span : spans) {
    if (span.begin >= span.end || span.end > interp.weights.size()) {
      throw ContractError("sentence span (" + std::to_string(span.begin) +
                          "," + std::to_string(span.end) +
                          ") is empty or out of range");
    }
    double sum = 0.0;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      sum += interp.weights[i];
    }
    out.weights.push_back(sum / static_cast<double>(span.size()));
  }
  return out;
}

MetricScore rft_sentence(const ModelProbe& probe, const TokenSequence& seq,
                         const Interpretation& interp_sentence,
                         std::span<const SentenceSpan> spans, int label,
                         PerturbationMode mode) {
  require_granularity(interp_sentence, Granularity::kSentence);
  const auto profile = sentence_profile(probe, seq, spans, mode);
  return {rft_value(profile, interp_sentence.weights, label), MetricKind::kRft,
          label, mode};
}

MetricScore faithfulness_score_sentence(const ModelProbe& probe,
                                        const TokenSequence& seq,
                                        const Interpretation& interp_sentence,
                                        std::span<const SentenceSpan> spans,
                                        int label, PerturbationMode mode) {
  require_granularity(interp_sentence, Granularity::kSentence);
  const auto profile = sentence_profile(probe, seq, spans, mode);
  return {faithfulness_value(profile, interp_sentence.weights, label),
          MetricKind::kFaithfulness, label, mode};
}

}  // namespace attnx
