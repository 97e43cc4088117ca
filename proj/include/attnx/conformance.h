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

#ifndef ATTNX_CONFORMANCE_H_
#define ATTNX_CONFORMANCE_H_

// Conformance suite for probe servers speaking wire protocol v1.
//
// Two parts: probe-independent checks that any server must pass (schema
// validity, info stability, determinism, batch/single equivalence, error
// frames), and golden request/response pairs recorded against the toy probe.

#include <filesystem>
#include <string>
#include <vector>

#include "attnx/protocol.h"
#include "attnx/remote_probe.h"

namespace attnx::protocol {

// Channel answered in-process by a ProtocolServer.
class LoopbackChannel final : public LineChannel {
 public:
  explicit LoopbackChannel(const ProtocolServer& server) : server_(server) {}

  void write_line(const std::string& line) override;
  std::string read_line() override;

 private:
  const ProtocolServer& server_;
  std::vector<std::string> pending_;
};

struct GoldenPair {
  std::string name;
  std::string request;  // raw frame, may be deliberately malformed
  Json response;
};

// One JSON object per line: {"name", "request", "response"}.
std::vector<GoldenPair> load_golden(const std::filesystem::path& path);

// Error frames match on type, id and error.code (messages are free text);
// every other frame must match exactly. On mismatch `why` names the first
// differing JSON pointer.
bool frames_match(const Json& expected, const Json& actual, std::string* why);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Probe-independent checks. `sample_text` must tokenize to at least one
// non-special token.
std::vector<CheckResult> run_conformance(LineChannel& channel,
                                         const std::string& sample_text);

std::vector<CheckResult> run_golden(LineChannel& channel,
                                    const std::vector<GoldenPair>& pairs);

}  // namespace attnx::protocol

#endif  // ATTNX_CONFORMANCE_H_
