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

#include "attnx/conformance.h"

#include <cmath>
#include <fstream>

#include "attnx/attention.h"

namespace attnx::protocol {

void LoopbackChannel::write_line(const std::string& line) {
  pending_.push_back(server_.handle(line));
}

std::string LoopbackChannel::read_line() {
  if (pending_.empty()) throw ProbeError("loopback channel: no reply pending");
  std::string line = std::move(pending_.front());
  pending_.erase(pending_.begin());
  return line;
}

std::vector<GoldenPair> load_golden(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read golden file " + path.string());
  std::vector<GoldenPair> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      out.push_back({j.at("name").get<std::string>(),
                     j.at("request").get<std::string>(), j.at("response")});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(number) + ": " +
                      e.what());
    }
  }
  return out;
}

bool frames_match(const Json& expected, const Json& actual, std::string* why) {
  auto fail = [&](const std::string& text) {
    if (why != nullptr) *why = text;
    return false;
  };
  if (expected.value("type", "") == "error") {
    for (const char* field : {"type", "id"}) {
      if (expected.value(field, Json()) != actual.value(field, Json())) {
        return fail(std::string("/") + field);
      }
    }
    const Json code = expected.contains("error")
                          ? expected["error"].value("code", Json())
                          : Json();
    const Json got = actual.contains("error") && actual["error"].is_object()
                         ? actual["error"].value("code", Json())
                         : Json();
    if (code != got) return fail("/error/code");
    return true;
  }
  if (expected == actual) return true;
  const Json diff = Json::diff(expected, actual);
  return fail(diff.empty() ? "" : diff[0].value("path", std::string()));
}

namespace {

struct Session {
  LineChannel& channel;
  std::int64_t next_id = 100;

  Json call(const std::string& type, Json payload) {
    const std::int64_t id = next_id++;
    channel.write_line(make_message(type, id, std::move(payload)).dump());
    Json reply = parse_frame(channel.read_line());
    if (reply.value("id", std::int64_t{-1}) != id) {
      throw ProtocolError("reply id does not match request id " +
                          std::to_string(id));
    }
    return reply;
  }
  std::string raw(const std::string& line) {
    channel.write_line(line);
    return channel.read_line();
  }
};

void check_rows(const AttentionStack& scores, bool pre_softmax) {
  const AttentionStack a = pre_softmax ? apply_softmax(scores) : scores;
  for (std::size_t l = 0; l < a.layers(); ++l) {
    for (std::size_t h = 0; h < a.heads(); ++h) {
      for (std::size_t r = 0; r < a.seq_len(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < a.seq_len(); ++c) sum += a.at(l, h, r, c);
        if (std::fabs(sum - 1.0) > 1e-4) {
          throw ProtocolError("softmax row sums to " + std::to_string(sum));
        }
      }
    }
  }
}

}  // namespace

std::vector<CheckResult> run_conformance(LineChannel& channel,
                                         const std::string& sample_text) {
  std::vector<CheckResult> out;
  Session session{channel};
  ProbeInfo info;
  TokenSequence seq({"[CLS]"}, {0}, {1}, 0, 0);
  Json forward_result;
  bool have_info = false;
  bool have_tokens = false;

  auto check = [&](const std::string& name, auto&& body) {
    CheckResult result{name, false, ""};
    try {
      body();
      result.passed = true;
    } catch (const std::exception& e) {
      result.detail = e.what();
    }
    out.push_back(std::move(result));
  };
  auto expect_type = [](const Json& reply, const std::string& type) {
    if (reply.at("type") != type) {
      throw ProtocolError("expected a '" + type + "' reply, got " +
                          reply.at("type").dump() +
                          (reply.contains("error") ? " " + reply["error"].dump()
                                                   : ""));
    }
  };

  check("info: schema", [&] {
    const Json reply = session.call("info", {});
    expect_type(reply, "info");
    info = decode_info(reply.at("info"));
    have_info = true;
  });
  check("info: stable across calls", [&] {
    const Json a = session.call("info", {});
    const Json b = session.call("info", {});
    if (a.at("info").dump() != b.at("info").dump()) {
      throw ProtocolError("two info replies differ");
    }
  });
  check("tokenize: schema", [&] {
    const Json reply = session.call("tokenize", {{"text", sample_text}});
    expect_type(reply, "tokenize");
    seq = decode_tokens(reply.at("tokens"));
    if (seq.content_count() == 0) {
      throw ProtocolError("sample text has no non-special tokens");
    }
    if (have_info && seq.token_ids()[seq.cls_index()] != info.special_ids.cls) {
      throw ProtocolError("[CLS] id disagrees with info.special_ids.cls");
    }
    have_tokens = true;
  });
  check("tokenize: empty text answered with an error frame", [&] {
    expect_type(session.call("tokenize", {{"text", ""}}), "error");
  });
  check("forward: schema and shape", [&] {
    if (!have_info || !have_tokens) throw ProtocolError("skipped");
    const Json reply =
        session.call("forward", {{"token_ids", seq.token_ids()}});
    expect_type(reply, "forward");
    forward_result = reply.at("result");
    const ProbeResponse r = decode_response(forward_result);
    validate_response(r, info);
    if (r.tokens.token_ids() != seq.token_ids()) {
      throw ProtocolError("forward echoes different token ids");
    }
    check_rows(r.attention, info.pre_softmax);
  });
  check("forward: deterministic", [&] {
    if (forward_result.is_null()) throw ProtocolError("skipped");
    const Json again =
        session.call("forward", {{"token_ids", seq.token_ids()}}).at("result");
    if (again.dump() != forward_result.dump()) {
      throw ProtocolError("identical forward requests gave different results");
    }
  });
  check("forward_batch: equals single calls", [&] {
    if (forward_result.is_null()) throw ProtocolError("skipped");
    std::vector<int> unk = seq.token_ids();
    unk[seq.content_positions().front()] = info.special_ids.unk;
    const Json single_unk =
        session.call("forward", {{"token_ids", unk}}).at("result");
    const Json reply = session.call(
        "forward_batch", {{"batch", {seq.token_ids(), unk, seq.token_ids()}}});
    expect_type(reply, "forward_batch");
    const Json& results = reply.at("results");
    if (!results.is_array() || results.size() != 3) {
      throw ProtocolError("forward_batch must return one result per input");
    }
    const Json* expected[] = {&forward_result, &single_unk, &forward_result};
    for (std::size_t i = 0; i < 3; ++i) {
      if (results[i].value("ok", false) != true ||
          results[i].at("result").dump() != expected[i]->dump()) {
        throw ProtocolError("forward_batch element " + std::to_string(i) +
                            " differs from the single call");
      }
    }
  });
  check("forward: unknown id answered with an error frame", [&] {
    if (!have_info) throw ProtocolError("skipped");
    const int bad = static_cast<int>(info.vocab_size) + 7;
    expect_type(session.call("forward",
                             {{"token_ids", {info.special_ids.cls, bad,
                                             info.special_ids.sep}}}),
                "error");
  });
  check("frame: unknown type answered with bad_request", [&] {
    const Json reply = session.call("frobnicate", {});
    expect_type(reply, "error");
    if (reply.at("error").at("code") != "bad_request") {
      throw ProtocolError("expected code bad_request");
    }
  });
  check("frame: malformed JSON answered with parse_error", [&] {
    const Json reply = parse_frame(session.raw("{\"protocol\":"));
    expect_type(reply, "error");
    if (reply.at("error").at("code") != "parse_error") {
      throw ProtocolError("expected code parse_error");
    }
  });
  check("frame: wrong version rejected", [&] {
    Json bad = make_message("info", 9);
    bad["version"] = kVersion + 1;
    expect_type(parse_frame(session.raw(bad.dump())), "error");
  });
  return out;
}

std::vector<CheckResult> run_golden(LineChannel& channel,
                                    const std::vector<GoldenPair>& pairs) {
  std::vector<CheckResult> out;
  for (const GoldenPair& pair : pairs) {
    CheckResult result{"golden: " + pair.name, false, ""};
    try {
      channel.write_line(pair.request);
      const Json actual = Json::parse(channel.read_line());
      std::string why;
      result.passed = frames_match(pair.response, actual, &why);
      if (!result.passed) result.detail = "mismatch at " + why;
    } catch (const std::exception& e) {
      result.detail = e.what();
    }
    out.push_back(std::move(result));
  }
  return out;
}

}  // namespace attnx::protocol
