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

#ifndef ATTNX_REMOTE_PROBE_H_
#define ATTNX_REMOTE_PROBE_H_

// Client side of the probe wire protocol.

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "attnx/probe.h"

namespace attnx {

// Bidirectional line transport.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  // Throws ProbeError on EOF.
  virtual std::string read_line() = 0;
};

// Runs `command` through /bin/sh with stdin/stdout piped.
class ChildProcessChannel final : public LineChannel {
 public:
  explicit ChildProcessChannel(const std::string& command);
  ~ChildProcessChannel() override;
  ChildProcessChannel(const ChildProcessChannel&) = delete;
  ChildProcessChannel& operator=(const ChildProcessChannel&) = delete;

  void write_line(const std::string& line) override;
  std::string read_line() override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

class UnixSocketChannel final : public LineChannel {
 public:
  explicit UnixSocketChannel(const std::string& path);
  ~UnixSocketChannel() override;
  UnixSocketChannel(const UnixSocketChannel&) = delete;
  UnixSocketChannel& operator=(const UnixSocketChannel&) = delete;

  void write_line(const std::string& line) override;
  std::string read_line() override;

 private:
  int fd_ = -1;
  std::string buffer_;
};

// A probe behind one serial channel. Calls are serialized by a mutex; frames
// are never interleaved.
class RemoteProbe final : public ModelProbe {
 public:
  // Sends `info` immediately; throws ProbeError if the peer does not answer
  // with a valid info frame.
  explicit RemoteProbe(std::unique_ptr<LineChannel> channel);

  const ProbeInfo& info() const override { return info_; }
  TokenSequence tokenize(std::string_view text) const override;
  ProbeResponse forward(std::span<const int> token_ids) const override;
  std::vector<ProbeResponse> forward_batch(
      const std::vector<std::vector<int>>& batch) const override;

 private:
  std::string round_trip(const std::string& type, const std::string& request,
                         std::int64_t id) const;

  std::unique_ptr<LineChannel> channel_;
  mutable std::mutex mutex_;
  mutable std::int64_t next_id_ = 1;
  ProbeInfo info_;
};

// Several connections to the same probe; each call takes the next
// connection round-robin, giving concurrency without sharing a channel.
class RemoteProbePool final : public ModelProbe {
 public:
  explicit RemoteProbePool(std::vector<std::unique_ptr<RemoteProbe>> members);

  const ProbeInfo& info() const override { return info_; }
  TokenSequence tokenize(std::string_view text) const override;
  ProbeResponse forward(std::span<const int> token_ids) const override;
  std::vector<ProbeResponse> forward_batch(
      const std::vector<std::vector<int>>& batch) const override;

 private:
  const RemoteProbe& next() const;

  std::vector<std::unique_ptr<RemoteProbe>> members_;
  mutable std::atomic<std::size_t> cursor_{0};
  ProbeInfo info_;
};

// Opens a probe from a spec string:
//   toy:<seed>            in-process toy probe, binary single-label
//   toy-multilabel:<seed> in-process toy probe, 3 labels, multi-label
//   toy-weights:<path>    in-process toy probe loaded from a weights dump
//   cmd:<shell command>   child process speaking the protocol on stdio
//   unix:<socket path>    protocol server on a Unix-domain socket
// `connections` > 1 builds a pool for the remote kinds.
std::unique_ptr<ModelProbe> open_probe(const std::string& spec,
                                       std::size_t connections = 1);

}  // namespace attnx

#endif  // ATTNX_REMOTE_PROBE_H_
