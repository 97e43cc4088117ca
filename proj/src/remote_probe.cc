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

#include "attnx/remote_probe.h"

#include <signal.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>

#include "attnx/protocol.h"
#include "attnx/toy_probe.h"

namespace attnx {
namespace {

void write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::write(fd, data.data() + sent, data.size() - sent);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ProbeError("probe channel closed while writing");
    sent += static_cast<std::size_t>(n);
  }
}

std::string read_line_from(int fd, std::string& buffer) {
  while (true) {
    const auto newline = buffer.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer.substr(0, newline);
      buffer.erase(0, newline + 1);
      return line;
    }
    char chunk[65536];
    const ssize_t got = ::read(fd, chunk, sizeof(chunk));
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) throw ProbeError("probe channel closed (EOF)");
    buffer.append(chunk, static_cast<std::size_t>(got));
  }
}

}  // namespace

ChildProcessChannel::ChildProcessChannel(const std::string& command) {
  // A dead child must surface as EOF/EPIPE, not kill the engine.
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw ProbeError("pipe() failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ProbeError("pipe() failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw ProbeError("fork() failed for probe command");
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ChildProcessChannel::~ChildProcessChannel() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

void ChildProcessChannel::write_line(const std::string& line) {
  write_all(to_child_, line + "\n");
}

std::string ChildProcessChannel::read_line() {
  return read_line_from(from_child_, buffer_);
}

UnixSocketChannel::UnixSocketChannel(const std::string& path) {
  ::signal(SIGPIPE, SIG_IGN);
  fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd_ < 0) throw ProbeError("socket() failed");
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    ::close(fd_);
    throw ConfigError("socket path too long: " + path);
  }
  std::snprintf(addr.sun_path, sizeof(addr.sun_path), "%s", path.c_str());
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ProbeError("cannot connect to probe socket " + path + ": " +
                     std::strerror(errno));
  }
}

UnixSocketChannel::~UnixSocketChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void UnixSocketChannel::write_line(const std::string& line) {
  write_all(fd_, line + "\n");
}

std::string UnixSocketChannel::read_line() { return read_line_from(fd_, buffer_); }

namespace {

using protocol::Json;
using protocol::ProtocolError;

ProbeError remote_error(const Json& frame) {
  const Json& err = frame.contains("error") ? frame["error"] : Json::object();
  return ProbeError("remote probe error [" + err.value("code", "unknown") +
                    "]: " + err.value("message", ""));
}

}  // namespace

RemoteProbe::RemoteProbe(std::unique_ptr<LineChannel> channel)
    : channel_(std::move(channel)) {
  const std::string reply = round_trip(
      "info", protocol::make_message("info", 0).dump(), 0);
  const Json frame = protocol::parse_frame(reply);
  if (!frame.contains("info")) {
    throw ProtocolError("info reply: missing field 'info'");
  }
  info_ = protocol::decode_info(frame["info"]);
}

std::string RemoteProbe::round_trip(const std::string& type,
                                    const std::string& request,
                                    std::int64_t id) const {
  std::string reply;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    channel_->write_line(request);
    reply = channel_->read_line();
  }
  const Json frame = protocol::parse_frame(reply);
  if (frame["type"] == "error") throw remote_error(frame);
  if (frame["type"] != type) {
    throw ProtocolError("expected a '" + type + "' reply, got '" +
                        frame["type"].get<std::string>() + "'");
  }
  if (frame.value("id", std::int64_t{-1}) != id) {
    throw ProtocolError("reply id does not match request id " +
                        std::to_string(id));
  }
  return reply;
}

TokenSequence RemoteProbe::tokenize(std::string_view text) const {
  std::int64_t id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = next_id_++;
  }
  const std::string reply = round_trip(
      "tokenize",
      protocol::make_message("tokenize", id, {{"text", std::string(text)}})
          .dump(),
      id);
  const Json frame = protocol::parse_frame(reply);
  if (!frame.contains("tokens")) {
    throw ProtocolError("tokenize reply: missing field 'tokens'");
  }
  return protocol::decode_tokens(frame["tokens"]);
}

ProbeResponse RemoteProbe::forward(std::span<const int> token_ids) const {
  std::int64_t id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = next_id_++;
  }
  const std::vector<int> ids(token_ids.begin(), token_ids.end());
  const std::string reply = round_trip(
      "forward",
      protocol::make_message("forward", id, {{"token_ids", ids}}).dump(), id);
  const Json frame = protocol::parse_frame(reply);
  if (!frame.contains("result")) {
    throw ProtocolError("forward reply: missing field 'result'");
  }
  ProbeResponse response = protocol::decode_response(frame["result"]);
  validate_response(response, info_);
  return response;
}

std::vector<ProbeResponse> RemoteProbe::forward_batch(
    const std::vector<std::vector<int>>& batch) const {
  std::int64_t id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = next_id_++;
  }
  const std::string reply = round_trip(
      "forward_batch",
      protocol::make_message("forward_batch", id, {{"batch", batch}}).dump(),
      id);
  const Json frame = protocol::parse_frame(reply);
  const auto results = frame.find("results");
  if (results == frame.end() || !results->is_array() ||
      results->size() != batch.size()) {
    throw ProtocolError("forward_batch reply: 'results' must hold one entry "
                        "per request element");
  }
  std::vector<ProbeResponse> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Json& item = (*results)[i];
    if (!item.value("ok", false)) {
      throw ProbeError("forward_batch element " + std::to_string(i) + ": " +
                       remote_error(item).what());
    }
    if (!item.contains("result")) {
      throw ProtocolError("forward_batch element " + std::to_string(i) +
                          ": missing field 'result'");
    }
    out.push_back(protocol::decode_response(item["result"]));
    validate_response(out.back(), info_);
  }
  return out;
}

RemoteProbePool::RemoteProbePool(
    std::vector<std::unique_ptr<RemoteProbe>> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("probe pool: no connections");
  info_ = members_.front()->info();
  for (const auto& m : members_) {
    if (!(m->info() == info_)) {
      throw ProbeError("probe pool: connections disagree on probe info");
    }
  }
  info_.reentrant = true;
}

const RemoteProbe& RemoteProbePool::next() const {
  return *members_[cursor_.fetch_add(1) % members_.size()];
}

TokenSequence RemoteProbePool::tokenize(std::string_view text) const {
  return next().tokenize(text);
}

ProbeResponse RemoteProbePool::forward(std::span<const int> token_ids) const {
  return next().forward(token_ids);
}

std::vector<ProbeResponse> RemoteProbePool::forward_batch(
    const std::vector<std::vector<int>>& batch) const {
  return next().forward_batch(batch);
}

std::unique_ptr<ModelProbe> open_probe(const std::string& spec,
                                       std::size_t connections) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("probe spec '" + spec + "' is not of the form kind:arg");
  }
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  auto parse_seed = [&]() -> std::uint64_t {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return seed;
    } catch (const std::exception&) {
      throw ConfigError("probe spec '" + spec + "': seed must be an integer");
    }
  };
  if (kind == "toy") {
    return std::make_unique<ToyProbe>(
        ToyProbeConfig{parse_seed(), TaskKind::kSingleLabel, 2});
  }
  if (kind == "toy-multilabel") {
    return std::make_unique<ToyProbe>(
        ToyProbeConfig{parse_seed(), TaskKind::kMultiLabel, 3});
  }
  if (kind == "toy-weights") {
    return std::make_unique<ToyProbe>(ToyWeights::Load(arg));
  }
  if (kind == "cmd" || kind == "unix") {
    if (connections == 0) connections = 1;
    std::vector<std::unique_ptr<RemoteProbe>> members;
    for (std::size_t i = 0; i < connections; ++i) {
      std::unique_ptr<LineChannel> channel;
      if (kind == "cmd") {
        channel = std::make_unique<ChildProcessChannel>(arg);
      } else {
        channel = std::make_unique<UnixSocketChannel>(arg);
      }
      members.push_back(std::make_unique<RemoteProbe>(std::move(channel)));
    }
    if (members.size() == 1) return std::move(members.front());
    return std::make_unique<RemoteProbePool>(std::move(members));
  }
  throw ConfigError("unknown probe kind '" + kind + "'");
}

}  // namespace attnx
