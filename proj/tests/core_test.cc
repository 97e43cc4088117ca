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

#include "attnx/core.h"
#include "attnx/error.h"
#include "test_util.h"

namespace attnx {
namespace {

EvalRecord well_formed(const TokenSequence& seq) {
  EvalRecord r;
  r.id = "r1";
  r.text = "a b c";
  r.gold_labels = {0, 1};
  r.token_rationales = std::vector<std::vector<std::uint8_t>>{
      std::vector<std::uint8_t>(seq.size(), 0),
      std::vector<std::uint8_t>(seq.size(), 0)};
  (*r.token_rationales)[1][2] = 1;
  r.sentence_spans = std::vector<SentenceSpan>{{1, 3}, {3, 4}};
  r.sentence_rationales =
      std::vector<std::vector<std::uint8_t>>{{0, 0}, {1, 0}};
  return r;
}

TEST(TokenSequence, RejectsBrokenInvariants) {
  EXPECT_THROW(TokenSequence({}, {}, {}, 0, 1), ContractError);
  EXPECT_THROW(TokenSequence({"[CLS]", "a"}, {2, 4}, {1}, 0, 1), ContractError);
  EXPECT_THROW(TokenSequence({"[CLS]", "a"}, {2, 4}, {1, 0}, 1, 1),
               ContractError);
  EXPECT_THROW(TokenSequence({"[CLS]", "[CLS]"}, {2, 2}, {1, 1}, 0, 1),
               ContractError);
}

TEST(TokenSequence, ContentPositionsSkipSpecials) {
  const TokenSequence seq = testing::make_sequence({"a", "b"});
  EXPECT_EQ(seq.content_positions(), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(seq.content_count(), 2u);
}

TEST(AttentionStack, RejectsShapeMismatchAndNonFinite) {
  EXPECT_THROW(AttentionStack(1, 1, 2, {1, 2, 3}), ContractError);
  EXPECT_THROW(AttentionStack(1, 1, 1, {std::nan("")}), ContractError);
  const AttentionStack s(2, 1, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(s.at(1, 0, 1, 0), 7);
}

TEST(PredictionVector, SingleLabelMustSumToOne) {
  EXPECT_THROW(PredictionVector({0.3, 0.3}, TaskKind::kSingleLabel),
               ContractError);
  EXPECT_NO_THROW(PredictionVector({0.3, 0.3}, TaskKind::kMultiLabel));
  EXPECT_THROW(PredictionVector({1.2}, TaskKind::kMultiLabel), ContractError);
  EXPECT_EQ(PredictionVector({0.5, 0.5}, TaskKind::kSingleLabel).argmax(), 0);
}

TEST(ValidateRecord, WellFormedRecordHasNoViolations) {
  const TokenSequence seq = testing::make_sequence({"a", "b", "c"});
  EXPECT_TRUE(validate_record(well_formed(seq), seq).empty());
}

TEST(ValidateRecord, ShortTokenRationaleIsOneViolation) {
  const TokenSequence seq = testing::make_sequence({"a", "b", "c"});
  EvalRecord r = well_formed(seq);
  (*r.token_rationales)[0].pop_back();
  const auto v = validate_record(r, seq);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("token_rationales"), std::string::npos);
}

TEST(ValidateRecord, OverlappingSpansAreOneViolation) {
  // Six content tokens followed by a trailing [CLS].
  const TokenSequence seq({"a", "b", "c", "d", "e", "f", "[CLS]"},
                          {4, 5, 6, 7, 8, 9, 2}, {0, 0, 0, 0, 0, 0, 1}, 6, 1);
  EvalRecord r;
  r.id = "x";
  r.gold_labels = {1};
  r.sentence_spans = std::vector<SentenceSpan>{{0, 3}, {2, 5}};
  const auto v = validate_record(r, seq);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("sentence_spans"), std::string::npos);
  EXPECT_NE(v[0].find("(0,3)"), std::string::npos);
}

TEST(ValidateRecord, SentenceRationalesWithoutSpans) {
  const TokenSequence seq = testing::make_sequence({"a"});
  EvalRecord r;
  r.gold_labels = {1};
  r.sentence_rationales = std::vector<std::vector<std::uint8_t>>{{1}};
  EXPECT_EQ(validate_record(r, seq).size(), 1u);
}

TEST(Names, ComboRoundTrips) {
  const OperationCombo c{ReduceOp::Multiply(), ReduceOp::Select(2),
                         MatrixOp::kMaxColumns, AttentionVariant::kRaw};
  EXPECT_EQ(to_string(c), "multi/select2/max_col");
  EXPECT_EQ(parse_combo(to_string(c), AttentionVariant::kRaw), c);
  EXPECT_EQ(to_string(OperationCombo::Baseline()), "mean/mean/from_cls");
  EXPECT_EQ(parse_variant("A*"), AttentionVariant::kRaw);
  EXPECT_THROW(parse_matrix_op("diag"), Error);
}

}  // namespace
}  // namespace attnx
