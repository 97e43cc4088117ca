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

#include "attnx/attention.h"

#include <cmath>

#include "attnx/error.h"
#include "attnx/probe.h"
#include "attnx/simd/kernels.h"

namespace attnx {

SquareMatrix::SquareMatrix(std::size_t size, std::vector<double> values)
    : n(size), data(std::move(values)) {
  if (data.size() != n * n) {
    throw ContractError("SquareMatrix: " + std::to_string(data.size()) +
                        " values for a " + std::to_string(n) + "x" +
                        std::to_string(n) + " matrix");
  }
}

void softmax_row(std::span<const double> row, std::span<double> out) {
  const auto& k = simd::active_kernels();
  const double peak = k.reduce_max(row.data(), row.size());
  double total = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    out[j] = std::exp(row[j] - peak);
    total += out[j];
  }
  k.div_scalar(out.data(), total, out.size());
}

AttentionStack apply_softmax(const AttentionStack& stack) {
  AttentionStack out = stack;
  const std::size_t s = stack.seq_len();
  for (std::size_t l = 0; l < stack.layers(); ++l) {
    for (std::size_t h = 0; h < stack.heads(); ++h) {
      const auto src = stack.matrix(l, h);
      auto dst = out.mutable_matrix(l, h);
      for (std::size_t row = 0; row < s; ++row) {
        softmax_row(src.subspan(row * s, s), dst.subspan(row * s, s));
      }
    }
  }
  return out;
}

namespace {

void check_select(const ReduceOp& op, std::size_t bound, const char* what) {
  if (op.kind == ReduceOp::Kind::kSelect &&
      (op.index < 1 || static_cast<std::size_t>(op.index) > bound)) {
    throw ContractError(std::string("select index ") +
                        std::to_string(op.index) + " outside 1.." +
                        std::to_string(bound) + " " + what);
  }
}

}  // namespace

std::vector<SquareMatrix> reduce_heads(const AttentionStack& stack,
                                       const ReduceOp& op) {
  check_select(op, stack.heads(), "heads");
  const auto& k = simd::active_kernels();
  const std::size_t s = stack.seq_len();
  const std::size_t area = s * s;
  std::vector<SquareMatrix> out;
  out.reserve(stack.layers());
  for (std::size_t l = 0; l < stack.layers(); ++l) {
    SquareMatrix b(s);
    switch (op.kind) {
      case ReduceOp::Kind::kSelect: {
        const auto src = stack.matrix(l, static_cast<std::size_t>(op.index - 1));
        b.data.assign(src.begin(), src.end());
        break;
      }
      case ReduceOp::Kind::kMean: {
        for (std::size_t h = 0; h < stack.heads(); ++h) {
          k.add(stack.matrix(l, h).data(), b.data.data(), area);
        }
        k.div_scalar(b.data.data(), static_cast<double>(stack.heads()), area);
        break;
      }
      case ReduceOp::Kind::kMultiply: {
        const auto first = stack.matrix(l, 0);
        b.data.assign(first.begin(), first.end());
        for (std::size_t h = 1; h < stack.heads(); ++h) {
          k.mul(stack.matrix(l, h).data(), b.data.data(), area);
        }
        break;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

SquareMatrix reduce_layers(std::span<const SquareMatrix> layers,
                           const ReduceOp& op, LayerProductOrder order) {
  if (layers.empty()) throw ContractError("reduce_layers: no layers");
  check_select(op, layers.size(), "layers");
  const std::size_t s = layers.front().n;
  for (const auto& m : layers) {
    if (m.n != s) throw ContractError("reduce_layers: mismatched matrix sizes");
  }
  const auto& k = simd::active_kernels();
  const std::size_t area = s * s;

  switch (op.kind) {
    case ReduceOp::Kind::kSelect:
      return layers[static_cast<std::size_t>(op.index - 1)];
    case ReduceOp::Kind::kMean: {
      SquareMatrix c(s);
      for (const auto& m : layers) k.add(m.data.data(), c.data.data(), area);
      k.div_scalar(c.data.data(), static_cast<double>(layers.size()), area);
      return c;
    }
    case ReduceOp::Kind::kMultiply: {
      const std::size_t count = layers.size();
      auto layer_at = [&](std::size_t step) -> const SquareMatrix& {
        return order == LayerProductOrder::kLastToFirst
                   ? layers[count - 1 - step]
                   : layers[step];
      };
      SquareMatrix c = layer_at(0);
      SquareMatrix next(s);
      for (std::size_t step = 1; step < count; ++step) {
        k.gemm(c.data.data(), layer_at(step).data.data(), next.data.data(), s,
               s, s);
        std::swap(c, next);
      }
      return c;
    }
  }
  throw ContractError("reduce_layers: unknown op");
}

std::vector<double> extract_vector(const SquareMatrix& matrix, MatrixOp op,
                                   std::size_t cls_index,
                                   std::span<const std::uint8_t> special_mask) {
  const std::size_t s = matrix.n;
  if (cls_index >= s) {
    throw ContractError("extract_vector: cls_index " +
                        std::to_string(cls_index) + " >= " +
                        std::to_string(s));
  }
  const auto& k = simd::active_kernels();
  std::vector<double> out(s, 0.0);
  const double* rows = matrix.data.data();
  switch (op) {
    case MatrixOp::kFromCls:
      out.assign(rows + cls_index * s, rows + (cls_index + 1) * s);
      break;
    case MatrixOp::kToCls:
      for (std::size_t i = 0; i < s; ++i) out[i] = rows[i * s + cls_index];
      break;
    case MatrixOp::kMeanColumns:
      for (std::size_t i = 0; i < s; ++i) k.add(rows + i * s, out.data(), s);
      k.div_scalar(out.data(), static_cast<double>(s), s);
      break;
    case MatrixOp::kMaxColumns:
      out.assign(rows, rows + s);
      for (std::size_t i = 1; i < s; ++i) k.max(rows + i * s, out.data(), s);
      break;
  }
  if (!special_mask.empty()) {
    if (special_mask.size() != s) {
      throw ContractError("extract_vector: special mask length mismatch");
    }
    for (std::size_t i = 0; i < s; ++i) {
      if (special_mask[i]) out[i] = 0.0;
    }
  }
  return out;
}

namespace {

std::vector<ReduceOp> reduce_ops(std::size_t count) {
  std::vector<ReduceOp> ops{ReduceOp::Mean(), ReduceOp::Multiply()};
  for (std::size_t i = 1; i <= count; ++i) {
    ops.push_back(ReduceOp::Select(static_cast<int>(i)));
  }
  return ops;
}

std::size_t reduce_op_slot(const ReduceOp& op) {
  switch (op.kind) {
    case ReduceOp::Kind::kMean:
      return 0;
    case ReduceOp::Kind::kMultiply:
      return 1;
    case ReduceOp::Kind::kSelect:
      return 1 + static_cast<std::size_t>(op.index);
  }
  return 0;
}

std::size_t matrix_op_slot(MatrixOp op) {
  return static_cast<std::size_t>(op);
}

AttentionStack variant_stack(const AttentionStack& stack,
                             AttentionVariant variant, bool prenormalized) {
  if (variant == AttentionVariant::kRaw) {
    if (prenormalized) {
      throw ProbeError("A* requested but the probe only exposes softmaxed "
                       "attention (pre_softmax = false)");
    }
    return stack;
  }
  return prenormalized ? stack : apply_softmax(stack);
}

}  // namespace

std::size_t combo_count(std::size_t heads, std::size_t layers) {
  return (2 + heads) * (2 + layers) * 4;
}

std::vector<OperationCombo> enumerate_combos(std::size_t heads,
                                             std::size_t layers,
                                             AttentionVariant variant) {
  std::vector<OperationCombo> out;
  out.reserve(combo_count(heads, layers));
  for (const ReduceOp& h : reduce_ops(heads)) {
    for (const ReduceOp& l : reduce_ops(layers)) {
      for (MatrixOp m : kAllMatrixOps) out.push_back({h, l, m, variant});
    }
  }
  return out;
}

void check_combo(const OperationCombo& combo, std::size_t heads,
                 std::size_t layers) {
  check_select(combo.head, heads, "heads");
  check_select(combo.layer, layers, "layers");
}

std::size_t combo_index(const OperationCombo& combo, std::size_t heads,
                        std::size_t layers) {
  check_combo(combo, heads, layers);
  return (reduce_op_slot(combo.head) * (2 + layers) +
          reduce_op_slot(combo.layer)) *
             4 +
         matrix_op_slot(combo.matrix);
}

InterpretationTable::InterpretationTable(std::size_t heads, std::size_t layers,
                                         AttentionVariant variant,
                                         std::vector<Interpretation> entries)
    : heads_(heads), layers_(layers), variant_(variant),
      entries_(std::move(entries)) {
  if (entries_.size() != combo_count(heads_, layers_)) {
    throw ContractError("InterpretationTable: " +
                        std::to_string(entries_.size()) + " entries, expected " +
                        std::to_string(combo_count(heads_, layers_)));
  }
}

const Interpretation& InterpretationTable::at(
    const OperationCombo& combo) const {
  if (combo.variant != variant_) {
    throw ContractError("InterpretationTable: combo variant does not match");
  }
  return entries_[combo_index(combo, heads_, layers_)];
}

InterpretationTable extract_interpretations(const AttentionStack& stack,
                                            const TokenSequence& seq,
                                            AttentionVariant variant,
                                            int label, LayerProductOrder order,
                                            bool prenormalized) {
  if (stack.seq_len() != seq.size()) {
    throw ContractError("extract_interpretations: attention covers " +
                        std::to_string(stack.seq_len()) + " tokens, sequence " +
                        std::to_string(seq.size()));
  }
  const AttentionStack attn = variant_stack(stack, variant, prenormalized);
  const std::size_t heads = stack.heads();
  const std::size_t layers = stack.layers();

  std::vector<Interpretation> entries;
  entries.reserve(combo_count(heads, layers));
  for (const ReduceOp& h : reduce_ops(heads)) {
    const std::vector<SquareMatrix> per_layer = reduce_heads(attn, h);
    for (const ReduceOp& l : reduce_ops(layers)) {
      const SquareMatrix collapsed = reduce_layers(per_layer, l, order);
      for (MatrixOp m : kAllMatrixOps) {
        entries.push_back(Interpretation{
            extract_vector(collapsed, m, seq.cls_index(), seq.special_mask()),
            OperationCombo{h, l, m, variant}, label, Granularity::kToken});
      }
    }
  }
  return InterpretationTable(heads, layers, variant, std::move(entries));
}

InterpretationTable extract_interpretations(const ModelProbe& probe,
                                            const TokenSequence& seq,
                                            AttentionVariant variant,
                                            int label, LayerProductOrder order,
                                            const std::string& instance_id) {
  try {
    const ProbeResponse response = probe.forward(seq.token_ids());
    return extract_interpretations(response.attention, seq, variant, label,
                                   order, !probe.info().pre_softmax);
  } catch (const ProbeError& e) {
    if (instance_id.empty()) throw;
    throw ProbeError("instance " + instance_id + ": " + e.what());
  }
}

Interpretation apply_combo(const AttentionStack& stack,
                           const TokenSequence& seq,
                           const OperationCombo& combo, int label,
                           LayerProductOrder order, bool prenormalized) {
  check_combo(combo, stack.heads(), stack.layers());
  if (stack.seq_len() != seq.size()) {
    throw ContractError("apply_combo: attention/sequence length mismatch");
  }
  const AttentionStack attn =
      variant_stack(stack, combo.variant, prenormalized);
  const std::vector<SquareMatrix> per_layer = reduce_heads(attn, combo.head);
  const SquareMatrix collapsed = reduce_layers(per_layer, combo.layer, order);
  return Interpretation{extract_vector(collapsed, combo.matrix,
                                       seq.cls_index(), seq.special_mask()),
                        combo, label, Granularity::kToken};
}

}  // namespace attnx
