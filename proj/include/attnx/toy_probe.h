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

#ifndef ATTNX_TOY_PROBE_H_
#define ATTNX_TOY_PROBE_H_

// In-process deterministic transformer encoder used as the reference probe.
//
// Fixed shape: 2 layers, 2 heads, embedding size 8, a 69-word vocabulary plus
// four specials. Each layer is pre-softmax self-attention (Q.K^T / sqrt(E)),
// head concat, output projection, residual + layer norm, a ReLU feed-forward
// block, residual + layer norm. The classifier mean-pools the last hidden
// state through one linear layer (softmax for single-label, sigmoid per label
// for multi-label). Weights come from std::mt19937_64 at a pinned seed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attnx/probe.h"

namespace attnx {

struct ToyProbeConfig {
  std::uint64_t seed = 42;
  TaskKind task_kind = TaskKind::kSingleLabel;
  // 2 for the binary single-label task, 3 for the multi-label one.
  std::size_t label_count = 2;
};

struct ToyLayerWeights {
  std::vector<double> wq, wk, wv, wo;  // E x E
  std::vector<double> w1, b1;          // E x F, F
  std::vector<double> w2, b2;          // F x E, E
};

struct ToyWeights {
  ToyProbeConfig config;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t embed_dim = 8;
  std::size_t ffn_dim = 16;
  std::size_t max_seq_len = 64;
  std::vector<std::string> vocab;  // index = token id
  std::vector<double> embedding;   // vocab x E
  std::vector<ToyLayerWeights> layer_weights;
  std::vector<double> classifier_w;  // E x L
  std::vector<double> classifier_b;  // L

  static ToyWeights Generate(const ToyProbeConfig& config);

  // Structured-text dump: JSON with a header (format, version, seed, dims)
  // followed by the tensors. Round-trips exactly.
  void save(const std::filesystem::path& path) const;
  static ToyWeights Load(const std::filesystem::path& path);
};

// Vocabulary shared by every toy probe, ids 0..3 are [PAD] [UNK] [CLS] [SEP].
const std::vector<std::string>& toy_vocabulary();

class ToyProbe final : public ModelProbe {
 public:
  explicit ToyProbe(const ToyProbeConfig& config = {});
  explicit ToyProbe(ToyWeights weights);

  const ProbeInfo& info() const override { return info_; }
  TokenSequence tokenize(std::string_view text) const override;
  ProbeResponse forward(std::span<const int> token_ids) const override;

  const ToyWeights& weights() const { return weights_; }

  // TokenSequence for raw ids (specials flagged by id).
  TokenSequence sequence_from_ids(std::span<const int> token_ids) const;

 private:
  ToyWeights weights_;
  ProbeInfo info_;
};

}  // namespace attnx

#endif  // ATTNX_TOY_PROBE_H_
