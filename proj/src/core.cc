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

#include "attnx/core.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "attnx/error.h"

namespace attnx {

TokenSequence::TokenSequence(std::vector<std::string> tokens,
                             std::vector<int> token_ids,
                             std::vector<std::uint8_t> special_mask,
                             std::size_t cls_index, int unk_id)
    : tokens_(std::move(tokens)),
      token_ids_(std::move(token_ids)),
      special_mask_(std::move(special_mask)),
      cls_index_(cls_index),
      unk_id_(unk_id) {
  if (token_ids_.empty()) {
    throw ContractError("TokenSequence: empty sequence");
  }
  if (tokens_.size() != token_ids_.size() ||
      special_mask_.size() != token_ids_.size()) {
    throw ContractError("TokenSequence: tokens, token_ids and special_mask "
                        "differ in length");
  }
  if (cls_index_ >= token_ids_.size() || !special_mask_[cls_index_]) {
    throw ContractError("TokenSequence: cls_index " +
                        std::to_string(cls_index_) +
                        " is out of bounds or not special");
  }
  const int cls_id = token_ids_[cls_index_];
  const auto cls_count =
      std::count(token_ids_.begin(), token_ids_.end(), cls_id);
  if (cls_count != 1) {
    throw ContractError("TokenSequence: expected exactly one [CLS] position");
  }
}

std::vector<std::size_t> TokenSequence::content_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!special_mask_[i]) out.push_back(i);
  }
  return out;
}

std::size_t TokenSequence::content_count() const {
  return static_cast<std::size_t>(
      std::count(special_mask_.begin(), special_mask_.end(), 0));
}

AttentionStack::AttentionStack(std::size_t layers, std::size_t heads,
                               std::size_t seq_len, std::vector<double> scores)
    : layers_(layers), heads_(heads), seq_len_(seq_len),
      scores_(std::move(scores)) {
  if (layers_ == 0 || heads_ == 0 || seq_len_ == 0) {
    throw ContractError("AttentionStack: every dimension must be >= 1");
  }
  if (scores_.size() != layers_ * heads_ * seq_len_ * seq_len_) {
    throw ContractError("AttentionStack: " + std::to_string(scores_.size()) +
                        " scores do not match shape (" +
                        std::to_string(layers_) + "," + std::to_string(heads_) +
                        "," + std::to_string(seq_len_) + "," +
                        std::to_string(seq_len_) + ")");
  }
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!std::isfinite(scores_[i])) {
      throw ContractError("AttentionStack: non-finite score at flat index " +
                          std::to_string(i));
    }
  }
}

PredictionVector::PredictionVector(std::vector<double> probabilities,
                                   TaskKind task_kind)
    : probabilities_(std::move(probabilities)), task_kind_(task_kind) {
  if (probabilities_.empty()) {
    throw ContractError("PredictionVector: no labels");
  }
  for (std::size_t i = 0; i < probabilities_.size(); ++i) {
    const double p = probabilities_[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractError("PredictionVector: probability " +
                          std::to_string(p) + " of label " +
                          std::to_string(i) + " outside [0,1]");
    }
  }
  if (task_kind_ == TaskKind::kSingleLabel) {
    const double sum =
        std::accumulate(probabilities_.begin(), probabilities_.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ContractError("PredictionVector: single-label probabilities sum "
                          "to " + std::to_string(sum));
    }
  }
}

double PredictionVector::probability(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities_.size()) {
    throw ContractError("PredictionVector: label " + std::to_string(label) +
                        " out of range");
  }
  return probabilities_[static_cast<std::size_t>(label)];
}

int PredictionVector::argmax() const {
  return static_cast<int>(
      std::max_element(probabilities_.begin(), probabilities_.end()) -
      probabilities_.begin());
}

namespace {

void check_masks(const std::vector<std::vector<std::uint8_t>>& masks,
                 std::size_t expected_labels, std::size_t expected_len,
                 const std::string& field, std::vector<std::string>& out) {
  if (masks.size() != expected_labels) {
    out.push_back(field + ": " + std::to_string(masks.size()) +
                  " label masks, expected " + std::to_string(expected_labels));
  }
  for (std::size_t label = 0; label < masks.size(); ++label) {
    const auto& mask = masks[label];
    if (mask.size() != expected_len) {
      out.push_back(field + "[" + std::to_string(label) + "]: length " +
                    std::to_string(mask.size()) + ", expected " +
                    std::to_string(expected_len));
      continue;
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] > 1) {
        out.push_back(field + "[" + std::to_string(label) + "][" +
                      std::to_string(i) + "]: value is not 0/1");
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate_record(const EvalRecord& record,
                                         const TokenSequence& seq) {
  std::vector<std::string> out;
  const std::size_t labels = record.gold_labels.size();
  if (labels == 0) out.push_back("gold_labels: empty");
  for (std::size_t i = 0; i < labels; ++i) {
    if (record.gold_labels[i] > 1) {
      out.push_back("gold_labels[" + std::to_string(i) + "]: value is not 0/1");
    }
  }

  if (record.token_rationales) {
    check_masks(*record.token_rationales, labels, seq.size(),
                "token_rationales", out);
  }

  if (record.sentence_spans) {
    const auto& spans = *record.sentence_spans;
    for (std::size_t k = 0; k < spans.size(); ++k) {
      const SentenceSpan& span = spans[k];
      const std::string name = "sentence_spans[" + std::to_string(k) + "]";
      if (span.begin >= span.end) {
        out.push_back(name + ": empty span (" + std::to_string(span.begin) +
                      "," + std::to_string(span.end) + ")");
        continue;
      }
      if (span.end > seq.size()) {
        out.push_back(name + ": end " + std::to_string(span.end) +
                      " beyond sequence length " + std::to_string(seq.size()));
        continue;
      }
      if (k > 0 && span.begin < spans[k - 1].end) {
        out.push_back(name + ": overlaps or precedes sentence_spans[" +
                      std::to_string(k - 1) + "] (" +
                      std::to_string(spans[k - 1].begin) + "," +
                      std::to_string(spans[k - 1].end) + ") vs (" +
                      std::to_string(span.begin) + "," +
                      std::to_string(span.end) + ")");
      }
      for (std::size_t i = span.begin; i < span.end; ++i) {
        if (seq.is_special(i)) {
          out.push_back(name + ": covers special position " +
                        std::to_string(i));
          break;
        }
      }
    }
    if (record.sentence_rationales) {
      check_masks(*record.sentence_rationales, labels, spans.size(),
                  "sentence_rationales", out);
    }
  } else if (record.sentence_rationales) {
    out.push_back("sentence_rationales: present without sentence_spans");
  }
  return out;
}

std::string to_string(const ReduceOp& op) {
  switch (op.kind) {
    case ReduceOp::Kind::kMean:
      return "mean";
    case ReduceOp::Kind::kMultiply:
      return "multi";
    case ReduceOp::Kind::kSelect:
      return "select" + std::to_string(op.index);
  }
  return "?";
}

std::string to_string(MatrixOp op) {
  switch (op) {
    case MatrixOp::kFromCls:
      return "from_cls";
    case MatrixOp::kToCls:
      return "to_cls";
    case MatrixOp::kMeanColumns:
      return "mean_col";
    case MatrixOp::kMaxColumns:
      return "max_col";
  }
  return "?";
}

std::string to_string(AttentionVariant variant) {
  return variant == AttentionVariant::kSoftmax ? "A" : "A*";
}

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kSingleLabel ? "single_label" : "multi_label";
}

std::string to_string(Granularity granularity) {
  return granularity == Granularity::kToken ? "token" : "sentence";
}

std::string to_string(const OperationCombo& combo) {
  return to_string(combo.head) + "/" + to_string(combo.layer) + "/" +
         to_string(combo.matrix);
}

ReduceOp parse_reduce_op(std::string_view text) {
  if (text == "mean") return ReduceOp::Mean();
  if (text == "multi") return ReduceOp::Multiply();
  if (text.starts_with("select")) {
    const std::string digits(text.substr(6));
    if (!digits.empty() &&
        std::all_of(digits.begin(), digits.end(),
                    [](char c) { return c >= '0' && c <= '9'; })) {
      return ReduceOp::Select(std::stoi(digits));
    }
  }
  throw ConfigError("unknown head/layer operation '" + std::string(text) +
                    "'");
}

MatrixOp parse_matrix_op(std::string_view text) {
  for (MatrixOp op : kAllMatrixOps) {
    if (to_string(op) == text) return op;
  }
  throw ConfigError("unknown matrix operation '" + std::string(text) + "'");
}

AttentionVariant parse_variant(std::string_view text) {
  if (text == "A") return AttentionVariant::kSoftmax;
  if (text == "A*") return AttentionVariant::kRaw;
  throw ConfigError("unknown attention variant '" + std::string(text) +
                    "' (expected A or A*)");
}

Granularity parse_granularity(std::string_view text) {
  if (text == "token") return Granularity::kToken;
  if (text == "sentence") return Granularity::kSentence;
  throw ConfigError("unknown granularity '" + std::string(text) + "'");
}

OperationCombo parse_combo(std::string_view text, AttentionVariant variant) {
  const auto first = text.find('/');
  const auto second =
      first == std::string_view::npos ? first : text.find('/', first + 1);
  if (second == std::string_view::npos) {
    throw ConfigError("combo '" + std::string(text) +
                      "' is not of the form head/layer/matrix");
  }
  return {parse_reduce_op(text.substr(0, first)),
          parse_reduce_op(text.substr(first + 1, second - first - 1)),
          parse_matrix_op(text.substr(second + 1)), variant};
}

}  // namespace attnx
