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

#ifndef ATTNX_CORE_H_
#define ATTNX_CORE_H_

// Domain types shared by every module: token sequences, attention stacks,
// operation combos, interpretations, predictions and corpus records.
// All of them are immutable once constructed.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace attnx {

class TokenSequence {
 public:
  // Validates the invariants: equal lengths, S >= 1, exactly one special
  // position carrying the [CLS] id at `cls_index`.
  TokenSequence(std::vector<std::string> tokens, std::vector<int> token_ids,
                std::vector<std::uint8_t> special_mask, std::size_t cls_index,
                int unk_id);

  std::size_t size() const { return token_ids_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<int>& token_ids() const { return token_ids_; }
  const std::vector<std::uint8_t>& special_mask() const { return special_mask_; }
  bool is_special(std::size_t i) const { return special_mask_[i] != 0; }
  std::size_t cls_index() const { return cls_index_; }
  int unk_id() const { return unk_id_; }

  // Non-special positions in order; their count is S'.
  std::vector<std::size_t> content_positions() const;
  std::size_t content_count() const;

  bool operator==(const TokenSequence&) const = default;

 private:
  std::vector<std::string> tokens_;
  std::vector<int> token_ids_;
  std::vector<std::uint8_t> special_mask_;
  std::size_t cls_index_;
  int unk_id_;
};

// Pre-softmax attention scores, shape (layers, heads, S, S), row-major.
class AttentionStack {
 public:
  AttentionStack(std::size_t layers, std::size_t heads, std::size_t seq_len,
                 std::vector<double> scores);

  std::size_t layers() const { return layers_; }
  std::size_t heads() const { return heads_; }
  std::size_t seq_len() const { return seq_len_; }

  double at(std::size_t layer, std::size_t head, std::size_t row,
            std::size_t col) const {
    return scores_[offset(layer, head) + row * seq_len_ + col];
  }
  // Contiguous S*S block for one (layer, head).
  std::span<const double> matrix(std::size_t layer, std::size_t head) const {
    return {scores_.data() + offset(layer, head), seq_len_ * seq_len_};
  }
  std::span<double> mutable_matrix(std::size_t layer, std::size_t head) {
    return {scores_.data() + offset(layer, head), seq_len_ * seq_len_};
  }
  const std::vector<double>& data() const { return scores_; }

  bool operator==(const AttentionStack&) const = default;

 private:
  std::size_t offset(std::size_t layer, std::size_t head) const {
    return (layer * heads_ + head) * seq_len_ * seq_len_;
  }

  std::size_t layers_;
  std::size_t heads_;
  std::size_t seq_len_;
  std::vector<double> scores_;
};

enum class AttentionVariant {
  kSoftmax,  // A
  kRaw,      // A*, pre-softmax scores, any sign
};

// Head and layer reductions share the same shape: mean, multiply, or select
// one (1-based) index.
struct ReduceOp {
  enum class Kind { kMean, kMultiply, kSelect };

  Kind kind = Kind::kMean;
  int index = 0;  // 1-based, only meaningful for kSelect

  static ReduceOp Mean() { return {Kind::kMean, 0}; }
  static ReduceOp Multiply() { return {Kind::kMultiply, 0}; }
  static ReduceOp Select(int index) { return {Kind::kSelect, index}; }

  bool operator==(const ReduceOp&) const = default;
};

enum class MatrixOp { kFromCls, kToCls, kMeanColumns, kMaxColumns };

inline constexpr MatrixOp kAllMatrixOps[] = {
    MatrixOp::kFromCls, MatrixOp::kToCls, MatrixOp::kMeanColumns,
    MatrixOp::kMaxColumns};

struct OperationCombo {
  ReduceOp head;
  ReduceOp layer;
  MatrixOp matrix = MatrixOp::kFromCls;
  AttentionVariant variant = AttentionVariant::kSoftmax;

  // (mean heads, mean layers, From [CLS]).
  static OperationCombo Baseline(
      AttentionVariant variant = AttentionVariant::kSoftmax) {
    return {ReduceOp::Mean(), ReduceOp::Mean(), MatrixOp::kFromCls, variant};
  }

  bool operator==(const OperationCombo&) const = default;
};

enum class Granularity { kToken, kSentence };

struct Interpretation {
  std::vector<double> weights;
  std::optional<OperationCombo> combo;  // empty for imported interpretations
  int label = 0;
  Granularity granularity = Granularity::kToken;

  bool operator==(const Interpretation&) const = default;
};

enum class TaskKind { kSingleLabel, kMultiLabel };

class PredictionVector {
 public:
  PredictionVector(std::vector<double> probabilities, TaskKind task_kind);

  const std::vector<double>& probabilities() const { return probabilities_; }
  double probability(int label) const;
  TaskKind task_kind() const { return task_kind_; }
  std::size_t label_count() const { return probabilities_.size(); }
  // Highest-probability label; ties go to the lower index.
  int argmax() const;

  bool operator==(const PredictionVector&) const = default;

 private:
  std::vector<double> probabilities_;
  TaskKind task_kind_;
};

// Half-open [begin, end) range of token positions.
struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const SentenceSpan&) const = default;
};

struct EvalRecord {
  std::string id;
  std::string text;
  std::vector<std::uint8_t> gold_labels;
  // Per label, one 0/1 entry per token of the probe's tokenization.
  std::optional<std::vector<std::vector<std::uint8_t>>> token_rationales;
  std::optional<std::vector<SentenceSpan>> sentence_spans;
  // Per label, one 0/1 entry per sentence.
  std::optional<std::vector<std::vector<std::uint8_t>>> sentence_rationales;
};

// Returns one human-readable violation per broken invariant; each names the
// field and the offending index. Empty means the record is consistent with
// the tokenized sequence.
std::vector<std::string> validate_record(const EvalRecord& record,
                                         const TokenSequence& seq);

// Stable text names, used by reports, bundles and the CLI.
std::string to_string(const ReduceOp& op);
std::string to_string(MatrixOp op);
std::string to_string(AttentionVariant variant);
std::string to_string(TaskKind kind);
std::string to_string(Granularity granularity);
// "head/layer/matrix", e.g. "mean/select2/from_cls".
std::string to_string(const OperationCombo& combo);

ReduceOp parse_reduce_op(std::string_view text);
MatrixOp parse_matrix_op(std::string_view text);
AttentionVariant parse_variant(std::string_view text);
Granularity parse_granularity(std::string_view text);
OperationCombo parse_combo(std::string_view text, AttentionVariant variant);

}  // namespace attnx

#endif  // ATTNX_CORE_H_
