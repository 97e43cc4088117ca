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

#ifndef ATTNX_PROTOCOL_H_
#define ATTNX_PROTOCOL_H_

// Probe wire protocol, version 1. One JSON object per line, request/response
// over a serial channel (child-process stdio or a local socket). See
// docs/protocol.md for the message schema.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>

#include "attnx/error.h"
#include "attnx/probe.h"
#include "json.hpp"

namespace attnx::protocol {

inline constexpr int kVersion = 1;
inline constexpr const char* kProtocolName = "attnx-probe";
inline constexpr int kSignificantDigits = 9;

// Malformed frame or message. `position` is the byte offset of the problem
// in the frame when known, otherwise npos.
class ProtocolError : public ProbeError {
 public:
  ProtocolError(const std::string& message,
                std::size_t position = std::string::npos)
      : ProbeError(message), position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

using Json = nlohmann::json;

// Rounds to 9 significant decimal digits, the precision used on the wire.
double round_wire(double value);

Json encode_info(const ProbeInfo& info);
ProbeInfo decode_info(const Json& j);

Json encode_tokens(const TokenSequence& seq);
TokenSequence decode_tokens(const Json& j);

Json encode_response(const ProbeResponse& response);
ProbeResponse decode_response(const Json& j);

// Parses one line into a JSON object; checks the protocol name/version
// envelope and the presence of a string "type".
Json parse_frame(std::string_view line);

// Envelope with name, version, id and type; payload fields are merged in.
Json make_message(std::string_view type, std::int64_t id,
                  Json payload = Json::object());

// Answers requests against an in-process probe.
class ProtocolServer {
 public:
  explicit ProtocolServer(const ModelProbe& probe) : probe_(probe) {}

  // One request line in, one response line out (no trailing newline).
  // Never throws: failures become `error` frames.
  std::string handle(std::string_view line) const;

  // Loops until EOF on `in`.
  void serve(std::istream& in, std::ostream& out) const;

 private:
  Json dispatch(const Json& request) const;

  const ModelProbe& probe_;
};

// Accepts connections on a Unix-domain socket at `path`, one thread per
// connection. Returns after `max_connections` have been served and closed
// (0 = never returns).
void serve_unix_socket(const ProtocolServer& server, const std::string& path,
                       std::size_t max_connections);

}  // namespace attnx::protocol

#endif  // ATTNX_PROTOCOL_H_
