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

#include <gtest/gtest.h>

#include "attnx/error.h"
#include "attnx/selectors.h"
#include "attnx/toy_probe.h"
#include "test_util.h"

namespace attnx {
namespace {

Instance random_instance(const ToyProbe& probe, testing::Rng& rng, int n) {
  std::vector<int> ids{2};
  for (int i = 0; i < n; ++i) ids.push_back(rng.range(4, 72));
  ids.push_back(3);
  return {"i" + std::to_string(rng.next() % 1000), probe.sequence_from_ids(ids),
          std::vector<SentenceSpan>{{1, 1 + static_cast<std::size_t>(n / 2)},
                                    {1 + static_cast<std::size_t>(n / 2),
                                     1 + static_cast<std::size_t>(n)}}};
}

// Exhaustive scores from the brute-force metric, independent of the scorer.
std::vector<double> oracle_scores(const ModelProbe& probe,
                                  const Instance& instance, int label,
                                  AttentionVariant variant) {
  const auto table = extract_interpretations(
      probe.forward(instance.seq.token_ids()).attention, instance.seq, variant);
  std::vector<std::vector<std::size_t>> units;
  for (std::size_t p : instance.seq.content_positions()) units.push_back({p});
  std::vector<double> out;
  for (const Interpretation& entry : table.entries()) {
    std::vector<double> w;
    for (std::size_t p : instance.seq.content_positions()) {
      w.push_back(entry.weights[p]);
    }
    out.push_back(testing::naive_rft(probe, instance.seq.token_ids(), units, w,
                                     label, false));
  }
  return out;
}

TEST(SelectBestIndex, StrictComparisonFirstMaximumWins) {
  double best = -1.0;
  EXPECT_EQ(select_best_index(std::vector<double>{0, -1, 2, 2}, 0, &best), 2u);
  EXPECT_EQ(best, 2.0);
  EXPECT_EQ(select_best_index(std::vector<double>{-1, 0, -3}, 1, &best), 1u);
  EXPECT_EQ(best, 0.0);
  // Nothing above zero keeps the baseline even when it is not first.
  EXPECT_EQ(select_best_index(std::vector<double>{0, 0, 0}, 2, &best), 2u);
  EXPECT_EQ(select_best_index(std::vector<double>{0.5, 0.1}, 1, &best), 0u);
}

TEST(OptimusPrime, InvariantProbeReturnsBaseline) {
  testing::FakeProbe probe(2, 2, 2, TaskKind::kSingleLabel,
                           testing::constant_prediction({0.2, 0.8}));
  const Instance inst{"x", testing::make_sequence({"a", "b", "c"}), {}};
  for (auto variant : {AttentionVariant::kSoftmax, AttentionVariant::kRaw}) {
    const SelectionResult r = optimus_prime(probe, inst, {variant, {}, {}}, 1);
    EXPECT_EQ(r.best_combo, OperationCombo::Baseline(variant));
    EXPECT_EQ(r.best_score, 0.0);
    EXPECT_EQ(r.evaluated_count, 64u);
  }
}

TEST(OptimusPrime, MatchesExhaustiveOracle) {
  const ToyProbe probe;
  testing::Rng rng(99);
  for (int t = 0; t < 6; ++t) {
    const Instance inst = random_instance(probe, rng, rng.range(3, 8));
    const int label = t % 2;
    const auto expected = oracle_scores(probe, inst, label,
                                        AttentionVariant::kSoftmax);
    std::size_t best = 0;
    double best_value = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (expected[i] > best_value + 1e-12) {
        best_value = expected[i];
        best = i;
      }
    }
    const SelectionResult r = optimus_prime(probe, inst, {}, label);
    ASSERT_EQ(r.scores.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_NEAR(r.scores[i], expected[i], 1e-9);
    }
    EXPECT_NEAR(r.best_score, best_value, 1e-9);
    EXPECT_EQ(combo_index(r.best_combo, 2, 2), best);
    EXPECT_GE(r.best_score, r.scores[0]);
  }
}

TEST(OptimusBatch, SingleInstanceEqualsPrime) {
  const ToyProbe probe;
  testing::Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    const Instance inst = random_instance(probe, rng, 5);
    const SearchSettings settings;
    const BatchSelection b = optimus_batch_calibrate(
        probe, std::span<const Instance>(&inst, 1), settings);
    const ComboScorer scorer(probe, inst, settings);
    const SelectionResult p =
        optimus_prime(scorer, scorer.prediction().argmax());
    EXPECT_EQ(b.best_combo, p.best_combo);
    EXPECT_EQ(b.best_score, p.best_score);
    EXPECT_EQ(b.interpretations.at(0), p.interpretation);
  }
}

TEST(OptimusBatch, MaximizesSummedScore) {
  const ToyProbe probe;
  testing::Rng rng(8);
  const std::vector<Instance> insts{random_instance(probe, rng, 4),
                                    random_instance(probe, rng, 7)};
  const BatchSelection b = optimus_batch_calibrate(probe, insts, {});
  std::vector<double> summed(64, 0.0);
  for (const Instance& inst : insts) {
    const int label = probe.forward(inst.seq.token_ids()).prediction.argmax();
    const auto s = oracle_scores(probe, inst, label, AttentionVariant::kSoftmax);
    for (std::size_t i = 0; i < 64; ++i) summed[i] += s[i];
  }
  std::size_t best = 0;
  double best_value = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    if (summed[i] > best_value + 1e-12) {
      best_value = summed[i];
      best = i;
    }
  }
  EXPECT_EQ(combo_index(b.best_combo, 2, 2), best);
  EXPECT_NEAR(b.best_score, best_value, 1e-9);
  ASSERT_EQ(b.interpretations.size(), 2u);
  EXPECT_EQ(b.evaluated_count, 64u);
}

TEST(OptimusBatch, InvariantProbeReturnsBaseline) {
  testing::FakeProbe probe(2, 2, 2, TaskKind::kSingleLabel,
                           testing::constant_prediction({0.6, 0.4}));
  const std::vector<Instance> insts{
      {"a", testing::make_sequence({"x", "y"}), {}},
      {"b", testing::make_sequence({"x", "y", "z"}), {}}};
  const BatchSelection b = optimus_batch_calibrate(probe, insts, {});
  EXPECT_EQ(b.best_combo, OperationCombo::Baseline());
  EXPECT_EQ(b.best_score, 0.0);
  EXPECT_THROW(optimus_batch_calibrate(probe, std::span<const Instance>(), {}),
               ContractError);
}

TEST(OptimusApply, MatchesTableEntries) {
  const ToyProbe probe;
  testing::Rng rng(3);
  const Instance inst = random_instance(probe, rng, 6);
  const auto table = extract_interpretations(probe, inst.seq,
                                             AttentionVariant::kRaw, 1);
  for (const Interpretation& entry : table.entries()) {
    EXPECT_EQ(optimus_apply(probe, inst.seq, *entry.combo, 1), entry);
  }
  EXPECT_THROW(optimus_apply(probe, inst.seq,
                             {ReduceOp::Select(3), ReduceOp::Mean(),
                              MatrixOp::kFromCls, AttentionVariant::kSoftmax},
                             0),
               ContractError);
}

TEST(OptimusLabel, BinaryEqualsPrime) {
  const ToyProbe probe;
  testing::Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    const Instance inst = random_instance(probe, rng, rng.range(4, 10));
    for (auto variant : {AttentionVariant::kSoftmax, AttentionVariant::kRaw}) {
      const SearchSettings settings{variant, {}, {}};
      const LabelSelection l = optimus_label(probe, inst, settings);
      ASSERT_EQ(l.per_label.size(), 1u);
      const int label = l.per_label.begin()->first;
      const SelectionResult p = optimus_prime(probe, inst, settings, label);
      const SelectionResult& got = l.per_label.begin()->second;
      EXPECT_EQ(got.best_combo, p.best_combo);
      EXPECT_EQ(got.interpretation, p.interpretation);
      EXPECT_EQ(got.best_score, p.best_score);
    }
  }
}

TEST(OptimusLabel, MultiLabelSearchesEachLabel) {
  const ToyProbe probe(ToyProbeConfig{42, TaskKind::kMultiLabel, 3});
  testing::Rng rng(31);
  int distinct = 0;
  for (int t = 0; t < 8; ++t) {
    const Instance inst = random_instance(probe, rng, rng.range(4, 10));
    const LabelSelection l = optimus_label(probe, inst, {}, {0.0});
    ASSERT_EQ(l.per_label.size(), 3u);
    for (const auto& [label, sel] : l.per_label) {
      const auto expected =
          oracle_scores(probe, inst, label, AttentionVariant::kSoftmax);
      std::size_t best = 0;
      double best_value = 0.0;
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (expected[i] > best_value + 1e-12) {
          best_value = expected[i];
          best = i;
        }
      }
      EXPECT_EQ(combo_index(sel.best_combo, 2, 2), best);
      EXPECT_EQ(sel.label, label);
      EXPECT_EQ(sel.interpretation.label, label);
    }
    if (!(l.per_label.at(0).best_combo == l.per_label.at(1).best_combo)) {
      ++distinct;
    }
  }
  EXPECT_GT(distinct, 0);
}

TEST(OptimusLabel, NoPredictedLabelIsDataError) {
  testing::FakeProbe probe(1, 1, 2, TaskKind::kMultiLabel,
                           testing::constant_prediction({0.1, 0.2}));
  const Instance inst{"q", testing::make_sequence({"a"}), {}};
  try {
    optimus_label(probe, inst, {}, {0.5});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("threshold"), std::string::npos);
  }
}

TEST(PredictedLabels, ArgmaxOrThreshold) {
  EXPECT_EQ(predicted_labels(PredictionVector({0.3, 0.7}, TaskKind::kSingleLabel),
                             {}),
            (std::vector<int>{1}));
  EXPECT_EQ(predicted_labels(
                PredictionVector({0.6, 0.5, 0.9}, TaskKind::kMultiLabel), {}),
            (std::vector<int>{0, 2}));
}

TEST(ComboScorer, SentenceGranularityNeedsSpans) {
  const ToyProbe probe;
  const Instance inst{"n", probe.tokenize("good movie"), std::nullopt};
  SearchSettings settings;
  settings.metric.granularity = Granularity::kSentence;
  EXPECT_THROW(ComboScorer(probe, inst, settings), DataError);
}

TEST(ComboScorer, UsesSPrimePlusTwoProbeCalls) {
  testing::FakeProbe probe(2, 2, 2, TaskKind::kSingleLabel,
                           testing::word_sensitive_prediction(1));
  const Instance inst{"c", testing::make_sequence({"a", "b", "c", "d"}), {}};
  const ComboScorer scorer(probe, inst, {});
  EXPECT_EQ(probe.calls, 6u);
  EXPECT_EQ(scorer.size(), 64u);
}

}  // namespace
}  // namespace attnx
