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

#include "attnx/protocol.h"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <thread>
#include <vector>

namespace attnx::protocol {
namespace {

const Json& require(const Json& j, const char* field, const char* where) {
  if (!j.is_object()) {
    throw ProtocolError(std::string(where) + ": expected an object");
  }
  const auto it = j.find(field);
  if (it == j.end()) {
    throw ProtocolError(std::string(where) + ": missing field '" + field +
                        "'");
  }
  return *it;
}

template <typename T>
T get_field(const Json& j, const char* field, const char* where) {
  const Json& value = require(j, field, where);
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(std::string(where) + ": field '" + field +
                        "' has the wrong type");
  }
}

std::vector<double> rounded(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = round_wire(values[i]);
  }
  return out;
}

Json error_frame(std::int64_t id, std::string_view code,
                 const std::string& message,
                 std::size_t position = std::string::npos) {
  Json err{{"code", code}, {"message", message}};
  if (position != std::string::npos) err["position"] = position;
  return make_message("error", id, {{"error", err}});
}

Json encode_error_payload(const std::exception& e) {
  std::string code = "probe_error";
  if (dynamic_cast<const ProtocolError*>(&e) != nullptr) {
    code = "bad_request";
  } else if (dynamic_cast<const ContractError*>(&e) != nullptr) {
    code = "contract_violation";
  }
  return {{"code", code}, {"message", e.what()}};
}

}  // namespace

double round_wire(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", kSignificantDigits, value);
  return std::strtod(buf, nullptr);
}

Json encode_info(const ProbeInfo& info) {
  return {{"m_layers", info.m_layers},
          {"h_heads", info.h_heads},
          {"embed_dim", info.embed_dim},
          {"labels", info.labels},
          {"task_kind", to_string(info.task_kind)},
          {"special_ids",
           {{"cls", info.special_ids.cls},
            {"sep", info.special_ids.sep},
            {"unk", info.special_ids.unk},
            {"pad", info.special_ids.pad}}},
          {"max_seq_len", info.max_seq_len},
          {"vocab_size", info.vocab_size},
          {"pre_softmax", info.pre_softmax},
          {"reentrant", info.reentrant}};
}

ProbeInfo decode_info(const Json& j) {
  constexpr const char* kWhere = "info";
  ProbeInfo info;
  info.m_layers = get_field<std::size_t>(j, "m_layers", kWhere);
  info.h_heads = get_field<std::size_t>(j, "h_heads", kWhere);
  info.embed_dim = get_field<std::size_t>(j, "embed_dim", kWhere);
  info.labels = get_field<std::vector<std::string>>(j, "labels", kWhere);
  const auto kind = get_field<std::string>(j, "task_kind", kWhere);
  if (kind != "single_label" && kind != "multi_label") {
    throw ProtocolError("info: unknown task_kind '" + kind + "'");
  }
  info.task_kind =
      kind == "single_label" ? TaskKind::kSingleLabel : TaskKind::kMultiLabel;
  const Json& ids = require(j, "special_ids", kWhere);
  info.special_ids.cls = get_field<int>(ids, "cls", "info.special_ids");
  info.special_ids.sep = get_field<int>(ids, "sep", "info.special_ids");
  info.special_ids.unk = get_field<int>(ids, "unk", "info.special_ids");
  info.special_ids.pad = get_field<int>(ids, "pad", "info.special_ids");
  info.max_seq_len = get_field<std::size_t>(j, "max_seq_len", kWhere);
  info.vocab_size = get_field<std::size_t>(j, "vocab_size", kWhere);
  info.pre_softmax = get_field<bool>(j, "pre_softmax", kWhere);
  info.reentrant = j.value("reentrant", false);
  validate_probe_info(info);
  return info;
}

Json encode_tokens(const TokenSequence& seq) {
  std::vector<int> mask(seq.special_mask().begin(), seq.special_mask().end());
  return {{"tokens", seq.tokens()},
          {"token_ids", seq.token_ids()},
          {"special_mask", mask},
          {"cls_index", seq.cls_index()},
          {"unk_id", seq.unk_id()}};
}

TokenSequence decode_tokens(const Json& j) {
  constexpr const char* kWhere = "tokens";
  auto mask = get_field<std::vector<int>>(j, "special_mask", kWhere);
  std::vector<std::uint8_t> special;
  for (int m : mask) {
    if (m != 0 && m != 1) {
      throw ProtocolError("tokens: special_mask entries must be 0 or 1");
    }
    special.push_back(static_cast<std::uint8_t>(m));
  }
  try {
    return TokenSequence(
        get_field<std::vector<std::string>>(j, "tokens", kWhere),
        get_field<std::vector<int>>(j, "token_ids", kWhere), std::move(special),
        get_field<std::size_t>(j, "cls_index", kWhere),
        get_field<int>(j, "unk_id", kWhere));
  } catch (const ContractError& e) {
    throw ProtocolError(std::string("tokens: ") + e.what());
  }
}

Json encode_response(const ProbeResponse& response) {
  const AttentionStack& a = response.attention;
  return {
      {"prediction",
       {{"probabilities", rounded(response.prediction.probabilities())},
        {"task_kind", to_string(response.prediction.task_kind())}}},
      {"attention",
       {{"shape", {a.layers(), a.heads(), a.seq_len(), a.seq_len()}},
        {"scores", rounded(a.data())}}},
      {"tokens", encode_tokens(response.tokens)}};
}

ProbeResponse decode_response(const Json& j) {
  const Json& pred = require(j, "prediction", "result");
  const auto kind = get_field<std::string>(pred, "task_kind", "prediction");
  if (kind != "single_label" && kind != "multi_label") {
    throw ProtocolError("prediction: unknown task_kind '" + kind + "'");
  }
  const Json& attn = require(j, "attention", "result");
  const auto shape =
      get_field<std::vector<std::size_t>>(attn, "shape", "attention");
  if (shape.size() != 4 || shape[2] != shape[3]) {
    throw ProtocolError("attention: shape must be [layers, heads, S, S]");
  }
  try {
    return ProbeResponse{
        PredictionVector(
            get_field<std::vector<double>>(pred, "probabilities", "prediction"),
            kind == "single_label" ? TaskKind::kSingleLabel
                                   : TaskKind::kMultiLabel),
        AttentionStack(shape[0], shape[1], shape[2],
                       get_field<std::vector<double>>(attn, "scores",
                                                      "attention")),
        decode_tokens(require(j, "tokens", "result"))};
  } catch (const ContractError& e) {
    throw ProtocolError(std::string("result: ") + e.what());
  }
}

Json parse_frame(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what(),
                        e.byte == 0 ? 0 : e.byte - 1);
  }
  if (!j.is_object()) {
    throw ProtocolError("malformed frame: top level must be an object", 0);
  }
  const auto name = j.find("protocol");
  if (name == j.end() || *name != kProtocolName) {
    throw ProtocolError(std::string("frame: 'protocol' must be \"") +
                        kProtocolName + "\"");
  }
  const auto version = j.find("version");
  if (version == j.end() || *version != kVersion) {
    throw ProtocolError("frame: unsupported protocol version");
  }
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) {
    throw ProtocolError("frame: missing string field 'type'");
  }
  return j;
}

Json make_message(std::string_view type, std::int64_t id, Json payload) {
  Json j{{"protocol", kProtocolName},
         {"version", kVersion},
         {"id", id},
         {"type", type}};
  for (auto it = payload.begin(); it != payload.end(); ++it) {
    j[it.key()] = it.value();
  }
  return j;
}

Json ProtocolServer::dispatch(const Json& request) const {
  const std::int64_t id = request.value("id", std::int64_t{0});
  const std::string type = request.at("type").get<std::string>();
  if (type == "info") {
    return make_message("info", id, {{"info", encode_info(probe_.info())}});
  }
  if (type == "tokenize") {
    const auto text = get_field<std::string>(request, "text", "tokenize");
    return make_message("tokenize", id,
                        {{"tokens", encode_tokens(probe_.tokenize(text))}});
  }
  if (type == "forward") {
    const auto ids = get_field<std::vector<int>>(request, "token_ids", "forward");
    return make_message("forward", id,
                        {{"result", encode_response(probe_.forward(ids))}});
  }
  if (type == "forward_batch") {
    const auto batch = get_field<std::vector<std::vector<int>>>(
        request, "batch", "forward_batch");
    Json results = Json::array();
    for (const auto& ids : batch) {
      try {
        results.push_back(
            {{"ok", true}, {"result", encode_response(probe_.forward(ids))}});
      } catch (const std::exception& e) {
        results.push_back({{"ok", false}, {"error", encode_error_payload(e)}});
      }
    }
    return make_message("forward_batch", id, {{"results", results}});
  }
  throw ProtocolError("unknown message type '" + type + "'");
}

std::string ProtocolServer::handle(std::string_view line) const {
  std::int64_t id = 0;
  try {
    const Json request = parse_frame(line);
    id = request.value("id", std::int64_t{0});
    return dispatch(request).dump();
  } catch (const ProtocolError& e) {
    const bool parse_failure = e.position() != std::string::npos;
    return error_frame(id, parse_failure ? "parse_error" : "bad_request",
                       e.what(), e.position())
        .dump();
  } catch (const std::exception& e) {
    const Json payload = encode_error_payload(e);
    return make_message("error", id, {{"error", payload}}).dump();
  }
}

void ProtocolServer::serve(std::istream& in, std::ostream& out) const {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle(line) << '\n';
    out.flush();
  }
}

namespace {

void serve_fd(const ProtocolServer& server, int fd) {
  std::string buffer;
  char chunk[4096];
  while (true) {
    const ssize_t got = ::read(fd, chunk, sizeof(chunk));
    if (got <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(got));
    std::size_t newline;
    while ((newline = buffer.find('\n')) != std::string::npos) {
      const std::string line = buffer.substr(0, newline);
      buffer.erase(0, newline + 1);
      if (line.empty()) continue;
      const std::string reply = server.handle(line) + "\n";
      std::size_t sent = 0;
      while (sent < reply.size()) {
        const ssize_t n = ::write(fd, reply.data() + sent, reply.size() - sent);
        if (n <= 0) {
          ::close(fd);
          return;
        }
        sent += static_cast<std::size_t>(n);
      }
    }
  }
  ::close(fd);
}

}  // namespace

void serve_unix_socket(const ProtocolServer& server, const std::string& path,
                       std::size_t max_connections) {
  const int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listener < 0) throw ProbeError("socket(): cannot create listener");
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    ::close(listener);
    throw ConfigError("socket path too long: " + path);
  }
  std::snprintf(addr.sun_path, sizeof(addr.sun_path), "%s", path.c_str());
  ::unlink(path.c_str());
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listener, 16) != 0) {
    ::close(listener);
    throw ProbeError("cannot listen on " + path);
  }
  std::vector<std::thread> workers;
  std::size_t accepted = 0;
  while (max_connections == 0 || accepted < max_connections) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) continue;
    ++accepted;
    workers.emplace_back(serve_fd, std::cref(server), fd);
  }
  for (auto& t : workers) t.join();
  ::close(listener);
  ::unlink(path.c_str());
}

}  // namespace attnx::protocol
