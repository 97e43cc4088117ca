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

#ifndef ATTNX_ATTENTION_H_
#define ATTNX_ATTENTION_H_

// Collapsing an attention stack into token-importance vectors: row softmax,
// head reductions, layer reductions and matrix-to-vector extraction, plus the
// exhaustive enumeration over every (head, layer, matrix) combination.

#include <cstddef>
#include <span>
#include <vector>

#include "attnx/core.h"

namespace attnx {

class ModelProbe;

// Dense row-major S x S matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}
  SquareMatrix(std::size_t size, std::vector<double> values);

  double operator()(std::size_t row, std::size_t col) const {
    return data[row * n + col];
  }
  double& operator()(std::size_t row, std::size_t col) {
    return data[row * n + col];
  }
  bool operator==(const SquareMatrix&) const = default;
};

// Order of the chained product for layer Multiply.
enum class LayerProductOrder {
  kLastToFirst,  // B_M * ... * B_1 (default)
  kFirstToLast,  // B_1 * ... * B_M
};

// Row-wise softmax of every (layer, head) matrix. Pure.
AttentionStack apply_softmax(const AttentionStack& stack);

// Softmax of one row, written to `out` (same length). Sums run in index order.
void softmax_row(std::span<const double> row, std::span<double> out);

// One matrix per layer. Mean and Multiply are element-wise over heads in
// head order; Select(h) copies head h (1-based).
std::vector<SquareMatrix> reduce_heads(const AttentionStack& stack,
                                       const ReduceOp& op);

// Mean is element-wise; Multiply is the chained matrix product; Select(l)
// copies layer l (1-based).
SquareMatrix reduce_layers(
    std::span<const SquareMatrix> layers, const ReduceOp& op,
    LayerProductOrder order = LayerProductOrder::kLastToFirst);

// Pulls one vector out of the collapsed matrix. Positions flagged in
// `special_mask` are zeroed afterwards; pass an empty mask to skip that.
std::vector<double> extract_vector(const SquareMatrix& matrix, MatrixOp op,
                                   std::size_t cls_index,
                                   std::span<const std::uint8_t> special_mask);

// All (2+H)(2+M)*4 combos for one variant, in canonical order:
// heads {mean, multi, 1..H} x layers {mean, multi, 1..M} x
// matrix {from, to, mean_col, max_col}, matrix op varying fastest.
std::vector<OperationCombo> enumerate_combos(std::size_t heads,
                                             std::size_t layers,
                                             AttentionVariant variant);

std::size_t combo_count(std::size_t heads, std::size_t layers);

// Position of `combo` in the canonical order for the given dimensions.
std::size_t combo_index(const OperationCombo& combo, std::size_t heads,
                        std::size_t layers);

// Throws ContractError when a Select index is outside 1..H or 1..M.
void check_combo(const OperationCombo& combo, std::size_t heads,
                 std::size_t layers);

// Every candidate interpretation of one instance for one variant.
class InterpretationTable {
 public:
  InterpretationTable(std::size_t heads, std::size_t layers,
                      AttentionVariant variant,
                      std::vector<Interpretation> entries);

  std::size_t heads() const { return heads_; }
  std::size_t layers() const { return layers_; }
  AttentionVariant variant() const { return variant_; }
  std::size_t size() const { return entries_.size(); }

  const std::vector<Interpretation>& entries() const { return entries_; }
  const Interpretation& at(std::size_t index) const { return entries_[index]; }
  const Interpretation& at(const OperationCombo& combo) const;

 private:
  std::size_t heads_;
  std::size_t layers_;
  AttentionVariant variant_;
  std::vector<Interpretation> entries_;
};

// Builds the table from an attention stack already obtained for `seq`.
// `prenormalized` marks stacks whose rows are already softmaxed (probes
// without pre-softmax capability); A* is refused for them.
InterpretationTable extract_interpretations(
    const AttentionStack& stack, const TokenSequence& seq,
    AttentionVariant variant, int label = 0,
    LayerProductOrder order = LayerProductOrder::kLastToFirst,
    bool prenormalized = false);

// Queries the probe for the instance's attention first. Probe failures are
// rethrown with `instance_id` attached.
InterpretationTable extract_interpretations(
    const ModelProbe& probe, const TokenSequence& seq,
    AttentionVariant variant, int label = 0,
    LayerProductOrder order = LayerProductOrder::kLastToFirst,
    const std::string& instance_id = "");

// Runs one combo's pipeline only.
Interpretation apply_combo(const AttentionStack& stack,
                           const TokenSequence& seq,
                           const OperationCombo& combo, int label = 0,
                           LayerProductOrder order =
                               LayerProductOrder::kLastToFirst,
                           bool prenormalized = false);

}  // namespace attnx

#endif  // ATTNX_ATTENTION_H_
