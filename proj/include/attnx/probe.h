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

#ifndef ATTNX_PROBE_H_
#define ATTNX_PROBE_H_

// Boundary to a classifier: tokenization, per-label probabilities and the
// pre-softmax attention stack.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnx/core.h"

namespace attnx {

struct SpecialTokenIds {
  int cls = 0;
  int sep = 0;
  int unk = 0;
  int pad = 0;

  bool operator==(const SpecialTokenIds&) const = default;
};

struct ProbeInfo {
  std::size_t m_layers = 0;
  std::size_t h_heads = 0;
  std::size_t embed_dim = 0;
  std::vector<std::string> labels;
  TaskKind task_kind = TaskKind::kSingleLabel;
  SpecialTokenIds special_ids;
  std::size_t max_seq_len = 0;
  std::size_t vocab_size = 0;
  // False when the probe can only expose softmaxed attention (A only).
  bool pre_softmax = true;
  // True when forward calls may be issued concurrently on one instance.
  bool reentrant = false;

  bool operator==(const ProbeInfo&) const = default;
};

// Throws ProbeError when a count is zero or the [UNK] id is outside the
// vocabulary.
void validate_probe_info(const ProbeInfo& info);

struct ProbeResponse {
  PredictionVector prediction;
  AttentionStack attention;
  TokenSequence tokens;

  bool operator==(const ProbeResponse&) const = default;
};

// Throws ProbeError when the attention shape disagrees with `info` or the
// token count, or the prediction has the wrong label count or task kind.
void validate_response(const ProbeResponse& response, const ProbeInfo& info);

class ModelProbe {
 public:
  virtual ~ModelProbe() = default;

  // Static for the probe's lifetime.
  virtual const ProbeInfo& info() const = 0;

  // Prepends [CLS] and appends [SEP]; unknown words map to [UNK]. Throws
  // ContractError on empty text.
  virtual TokenSequence tokenize(std::string_view text) const = 0;

  // Deterministic. Throws ProbeError on over-length input or unknown ids.
  virtual ProbeResponse forward(std::span<const int> token_ids) const = 0;

  // Element i equals forward(batch[i]) exactly. The default issues the
  // calls one by one.
  virtual std::vector<ProbeResponse> forward_batch(
      const std::vector<std::vector<int>>& batch) const;
};

}  // namespace attnx

#endif  // ATTNX_PROBE_H_
