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

#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "attnx/attention.h"
#include "attnx/error.h"
#include "test_util.h"

namespace attnx {
namespace {

using testing::naive_matmul;
using testing::naive_softmax;

AttentionStack random_stack(testing::Rng& rng, std::size_t layers,
                            std::size_t heads, std::size_t s) {
  std::vector<double> v(layers * heads * s * s);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return AttentionStack(layers, heads, s, v);
}

TEST(Softmax, Examples) {
  std::vector<double> out(3);
  softmax_row(std::vector<double>{0.0, 0.0}, std::span(out).first(2));
  EXPECT_DOUBLE_EQ(out[0], 0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  for (double c : {-1000.0, 0.0, 7.5, 1000.0}) {
    softmax_row(std::vector<double>{c, c, c}, out);
    for (double x : out) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
  }
  softmax_row(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)},
              out);
  EXPECT_NEAR(out[0], 1.0 / 6.0, 1e-9);
  EXPECT_NEAR(out[1], 2.0 / 6.0, 1e-9);
  EXPECT_NEAR(out[2], 3.0 / 6.0, 1e-9);
}

TEST(Softmax, StackRowsAreStochasticAndMatchOracle) {
  testing::Rng rng(5);
  const AttentionStack s = random_stack(rng, 2, 3, 5);
  const AttentionStack p = apply_softmax(s);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 3; ++h) {
      for (std::size_t r = 0; r < 5; ++r) {
        std::vector<double> row;
        for (std::size_t c = 0; c < 5; ++c) row.push_back(s.at(l, h, r, c));
        const auto expected = naive_softmax(row);
        double sum = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
          EXPECT_NEAR(p.at(l, h, r, c), expected[c], 1e-15);
          sum += p.at(l, h, r, c);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
}

TEST(ReduceHeads, Examples) {
  const AttentionStack two(1, 2, 2, {1, 0, 0, 1, 0, 1, 1, 0});
  auto mean = reduce_heads(two, ReduceOp::Mean());
  ASSERT_EQ(mean.size(), 1u);
  EXPECT_EQ(mean[0].data, (std::vector<double>{0.5, 0.5, 0.5, 0.5}));

  auto second = reduce_heads(two, ReduceOp::Select(2));
  EXPECT_EQ(second[0].data, (std::vector<double>{0, 1, 1, 0}));

  const AttentionStack mul(1, 2, 2, {2, 1, 1, 2, 3, 0, 0, 3});
  auto prod = reduce_heads(mul, ReduceOp::Multiply());
  EXPECT_EQ(prod[0].data, (std::vector<double>{6, 0, 0, 6}));
}

TEST(ReduceHeads, SelectOutOfRangeNamesIndex) {
  const AttentionStack two(1, 2, 2, {1, 0, 0, 1, 0, 1, 1, 0});
  try {
    reduce_heads(two, ReduceOp::Select(3));
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos);
  }
  EXPECT_THROW(reduce_heads(two, ReduceOp::Select(0)), ContractError);
}

TEST(ReduceLayers, Examples) {
  const std::vector<SquareMatrix> eye(3, SquareMatrix(2, {1, 0, 0, 1}));
  EXPECT_EQ(reduce_layers(eye, ReduceOp::Multiply()).data,
            (std::vector<double>{1, 0, 0, 1}));

  const std::vector<SquareMatrix> two{SquareMatrix(2, {1, 0, 0, 1}),
                                      SquareMatrix(2, {0, 2, 2, 0})};
  EXPECT_EQ(reduce_layers(two, ReduceOp::Mean()).data,
            (std::vector<double>{0.5, 1, 1, 0.5}));

  const std::vector<double> b1{1, 1, 0, 1};
  const std::vector<double> b2{1, 0, 1, 1};
  const std::vector<SquareMatrix> chain{SquareMatrix(2, b1), SquareMatrix(2, b2)};
  const auto expected = naive_matmul(b2, b1, 2);
  EXPECT_EQ(expected, (std::vector<double>{1, 1, 1, 2}));
  EXPECT_EQ(reduce_layers(chain, ReduceOp::Multiply()).data, expected);
  EXPECT_EQ(reduce_layers(chain, ReduceOp::Multiply(),
                          LayerProductOrder::kFirstToLast)
                .data,
            naive_matmul(b1, b2, 2));
  EXPECT_EQ(reduce_layers(chain, ReduceOp::Select(1)).data, b1);
  EXPECT_THROW(reduce_layers(chain, ReduceOp::Select(3)), ContractError);
}

TEST(ExtractVector, Examples) {
  const SquareMatrix m(2, {1, 2, 3, 4});
  EXPECT_EQ(extract_vector(m, MatrixOp::kFromCls, 0, {}),
            (std::vector<double>{1, 2}));
  EXPECT_EQ(extract_vector(m, MatrixOp::kToCls, 0, {}),
            (std::vector<double>{1, 3}));
  const SquareMatrix z(2, {1, 2, 3, 0});
  EXPECT_EQ(extract_vector(z, MatrixOp::kMaxColumns, 0, {}),
            (std::vector<double>{3, 2}));
  EXPECT_EQ(extract_vector(z, MatrixOp::kMeanColumns, 0, {}),
            (std::vector<double>{2, 1}));
  const std::vector<std::uint8_t> mask{1, 0};
  EXPECT_EQ(extract_vector(m, MatrixOp::kFromCls, 0, mask),
            (std::vector<double>{0, 2}));
}

TEST(Combos, CountsFollowFormula) {
  for (std::size_t h = 1; h <= 16; ++h) {
    for (std::size_t m = 1; m <= 16; ++m) {
      const auto combos = enumerate_combos(h, m, AttentionVariant::kSoftmax);
      ASSERT_EQ(combos.size(), (2 + h) * (2 + m) * 4);
      ASSERT_EQ(combo_count(h, m), combos.size());
    }
  }
  EXPECT_EQ(combo_count(2, 2), 64u);
  EXPECT_EQ(combo_count(12, 12), 784u);
  EXPECT_EQ(combo_count(12, 6), 448u);
}

TEST(Combos, CanonicalOrderAndIndex) {
  const auto combos = enumerate_combos(2, 3, AttentionVariant::kRaw);
  EXPECT_EQ(combos[0], OperationCombo::Baseline(AttentionVariant::kRaw));
  EXPECT_EQ(combos[1].matrix, MatrixOp::kToCls);
  EXPECT_EQ(combos[4].layer, ReduceOp::Multiply());
  EXPECT_EQ(combos.back().head, ReduceOp::Select(2));
  EXPECT_EQ(combos.back().layer, ReduceOp::Select(3));
  EXPECT_EQ(combos.back().matrix, MatrixOp::kMaxColumns);
  for (std::size_t i = 0; i < combos.size(); ++i) {
    EXPECT_EQ(combo_index(combos[i], 2, 3), i);
  }
  EXPECT_THROW(check_combo({ReduceOp::Select(3), ReduceOp::Mean(),
                            MatrixOp::kFromCls, AttentionVariant::kSoftmax},
                           2, 3),
               ContractError);
}

// Naive composition of the three stages.
std::vector<double> oracle_vector(const AttentionStack& raw,
                                  const TokenSequence& seq,
                                  const OperationCombo& c) {
  const std::size_t s = raw.seq_len();
  std::vector<std::vector<double>> mats(raw.layers() * raw.heads());
  for (std::size_t l = 0; l < raw.layers(); ++l) {
    for (std::size_t h = 0; h < raw.heads(); ++h) {
      auto& m = mats[l * raw.heads() + h];
      for (std::size_t r = 0; r < s; ++r) {
        std::vector<double> row;
        for (std::size_t col = 0; col < s; ++col) row.push_back(raw.at(l, h, r, col));
        if (c.variant == AttentionVariant::kSoftmax) row = naive_softmax(row);
        m.insert(m.end(), row.begin(), row.end());
      }
    }
  }
  std::vector<std::vector<double>> per_layer;
  for (std::size_t l = 0; l < raw.layers(); ++l) {
    std::vector<double> acc(s * s, 0.0);
    if (c.head.kind == ReduceOp::Kind::kSelect) {
      acc = mats[l * raw.heads() + c.head.index - 1];
    } else if (c.head.kind == ReduceOp::Kind::kMultiply) {
      acc.assign(s * s, 1.0);
      for (std::size_t h = 0; h < raw.heads(); ++h) {
        for (std::size_t i = 0; i < s * s; ++i) acc[i] *= mats[l * raw.heads() + h][i];
      }
    } else {
      for (std::size_t h = 0; h < raw.heads(); ++h) {
        for (std::size_t i = 0; i < s * s; ++i) acc[i] += mats[l * raw.heads() + h][i];
      }
      for (double& x : acc) x /= static_cast<double>(raw.heads());
    }
    per_layer.push_back(acc);
  }
  std::vector<double> b;
  if (c.layer.kind == ReduceOp::Kind::kSelect) {
    b = per_layer[c.layer.index - 1];
  } else if (c.layer.kind == ReduceOp::Kind::kMultiply) {
    b = per_layer[0];
    for (std::size_t l = 1; l < per_layer.size(); ++l) b = naive_matmul(per_layer[l], b, s);
  } else {
    b.assign(s * s, 0.0);
    for (const auto& m : per_layer) {
      for (std::size_t i = 0; i < s * s; ++i) b[i] += m[i];
    }
    for (double& x : b) x /= static_cast<double>(per_layer.size());
  }
  std::vector<double> v(s, 0.0);
  const std::size_t k = seq.cls_index();
  for (std::size_t j = 0; j < s; ++j) {
    switch (c.matrix) {
      case MatrixOp::kFromCls:
        v[j] = b[k * s + j];
        break;
      case MatrixOp::kToCls:
        v[j] = b[j * s + k];
        break;
      case MatrixOp::kMeanColumns:
        for (std::size_t r = 0; r < s; ++r) v[j] += b[r * s + j];
        v[j] /= static_cast<double>(s);
        break;
      case MatrixOp::kMaxColumns:
        v[j] = b[j];
        for (std::size_t r = 1; r < s; ++r) v[j] = std::max(v[j], b[r * s + j]);
        break;
    }
    if (seq.is_special(j)) v[j] = 0.0;
  }
  return v;
}

TEST(ExtractInterpretations, EveryEntryMatchesStepwiseOracle) {
  testing::Rng rng(21);
  for (AttentionVariant variant :
       {AttentionVariant::kSoftmax, AttentionVariant::kRaw}) {
    for (int trial = 0; trial < 4; ++trial) {
      const std::size_t words = static_cast<std::size_t>(rng.range(1, 6));
      const TokenSequence seq =
          testing::make_sequence(std::vector<std::string>(words, "w"));
      const std::size_t layers = static_cast<std::size_t>(rng.range(1, 4));
      const std::size_t heads = static_cast<std::size_t>(rng.range(1, 4));
      const AttentionStack stack = random_stack(rng, layers, heads, seq.size());
      const InterpretationTable table =
          extract_interpretations(stack, seq, variant, 1);
      ASSERT_EQ(table.size(), combo_count(heads, layers));
      for (const Interpretation& entry : table.entries()) {
        ASSERT_TRUE(entry.combo.has_value());
        EXPECT_EQ(entry.label, 1);
        const auto expected = oracle_vector(stack, seq, *entry.combo);
        ASSERT_EQ(entry.weights.size(), expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
          EXPECT_NEAR(entry.weights[i], expected[i],
                      1e-9 * std::max(1.0, std::fabs(expected[i])))
              << to_string(*entry.combo);
        }
        EXPECT_EQ(apply_combo(stack, seq, *entry.combo, 1), entry);
      }
    }
  }
}

TEST(ExtractInterpretations, SelectSelectFromClsIsSoftmaxedRow) {
  const TokenSequence seq = testing::make_sequence({"x"});
  testing::Rng rng(2);
  const AttentionStack stack = random_stack(rng, 2, 2, 3);
  const Interpretation got = apply_combo(
      stack, seq, {ReduceOp::Select(1), ReduceOp::Select(1), MatrixOp::kFromCls,
                   AttentionVariant::kSoftmax});
  const auto row = naive_softmax({stack.at(0, 0, 0, 0), stack.at(0, 0, 0, 1),
                                  stack.at(0, 0, 0, 2)});
  EXPECT_EQ(got.weights[0], 0.0);
  EXPECT_NEAR(got.weights[1], row[1], 1e-15);
  EXPECT_EQ(got.weights[2], 0.0);
}

TEST(ExtractInterpretations, RawVariantRefusedForPrenormalizedStack) {
  const TokenSequence seq = testing::make_sequence({"x"});
  testing::Rng rng(2);
  const AttentionStack stack = apply_softmax(random_stack(rng, 1, 1, 3));
  EXPECT_THROW(extract_interpretations(stack, seq, AttentionVariant::kRaw, 0,
                                       LayerProductOrder::kLastToFirst, true),
               ProbeError);
  const InterpretationTable t =
      extract_interpretations(stack, seq, AttentionVariant::kSoftmax, 0,
                              LayerProductOrder::kLastToFirst, true);
  // Already normalized rows are used as given.
  EXPECT_NEAR(t.at(0).weights[1], stack.at(0, 0, 0, 1), 1e-15);
}

TEST(ExtractInterpretations, FromProbe) {
  testing::FakeProbe probe(2, 3, 2, TaskKind::kSingleLabel,
                           testing::constant_prediction({0.4, 0.6}));
  const TokenSequence seq = testing::make_sequence({"a", "b"});
  const auto t = extract_interpretations(probe, seq, AttentionVariant::kRaw);
  EXPECT_EQ(t.size(), combo_count(3, 2));
  EXPECT_EQ(t.heads(), 3u);
  EXPECT_EQ(t.layers(), 2u);
}

TEST(ExtractInterpretations, LargeTableIsFast) {
  testing::Rng rng(9);
  const TokenSequence seq = testing::make_sequence({"a", "b", "c", "d"});
  const AttentionStack stack = random_stack(rng, 12, 12, seq.size());
  const auto start = std::chrono::steady_clock::now();
  const auto t = extract_interpretations(stack, seq, AttentionVariant::kSoftmax);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  EXPECT_EQ(t.size(), 784u);
  EXPECT_LT(secs, 1.0);
}

}  // namespace
}  // namespace attnx
