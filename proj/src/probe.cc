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

#include "attnx/probe.h"

#include "attnx/error.h"

namespace attnx {

void validate_probe_info(const ProbeInfo& info) {
  if (info.m_layers == 0 || info.h_heads == 0 || info.embed_dim == 0 ||
      info.labels.empty() || info.max_seq_len == 0 || info.vocab_size == 0) {
    throw ProbeError("probe info: every count must be >= 1");
  }
  const int vocab = static_cast<int>(info.vocab_size);
  for (int id : {info.special_ids.cls, info.special_ids.sep,
                 info.special_ids.unk, info.special_ids.pad}) {
    if (id < 0 || id >= vocab) {
      throw ProbeError("probe info: special token id " + std::to_string(id) +
                       " outside vocabulary of size " +
                       std::to_string(info.vocab_size));
    }
  }
}

void validate_response(const ProbeResponse& response, const ProbeInfo& info) {
  const AttentionStack& a = response.attention;
  if (a.layers() != info.m_layers || a.heads() != info.h_heads) {
    throw ProbeError("probe response: attention has " +
                     std::to_string(a.layers()) + " layers x " +
                     std::to_string(a.heads()) + " heads, info declares " +
                     std::to_string(info.m_layers) + " x " +
                     std::to_string(info.h_heads));
  }
  if (a.seq_len() != response.tokens.size()) {
    throw ProbeError("probe response: attention covers " +
                     std::to_string(a.seq_len()) + " tokens, sequence has " +
                     std::to_string(response.tokens.size()));
  }
  if (response.prediction.label_count() != info.labels.size() ||
      response.prediction.task_kind() != info.task_kind) {
    throw ProbeError("probe response: prediction does not match declared "
                     "labels/task kind");
  }
}

std::vector<ProbeResponse> ModelProbe::forward_batch(
    const std::vector<std::vector<int>>& batch) const {
  std::vector<ProbeResponse> out;
  out.reserve(batch.size());
  for (const auto& ids : batch) out.push_back(forward(ids));
  return out;
}

}  // namespace attnx
