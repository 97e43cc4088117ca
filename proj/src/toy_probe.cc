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

#include "attnx/toy_probe.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>

#include "attnx/attention.h"
#include "attnx/error.h"
#include "attnx/simd/kernels.h"
#include "json.hpp"

namespace attnx {
namespace {

constexpr int kPad = 0;
constexpr int kUnk = 1;
constexpr int kCls = 2;
constexpr int kSep = 3;
constexpr double kLayerNormEps = 1e-5;
constexpr const char* kWeightsFormat = "attnx-toy-weights";

// Uniform in [-scale, scale) from the top 53 bits of a 64-bit draw, so the
// stream is identical on every standard library.
class WeightStream {
 public:
  explicit WeightStream(std::uint64_t seed) : engine_(seed) {}

  std::vector<double> draw(std::size_t count, double scale) {
    std::vector<double> out(count);
    for (double& v : out) {
      const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      v = (2.0 * unit - 1.0) * scale;
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

void layer_norm(std::vector<double>& x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      var += (row[c] - mean) * (row[c] - mean);
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < cols; ++c) row[c] = (row[c] - mean) * inv;
  }
}

void add_bias(std::vector<double>& x, const std::vector<double>& bias,
              std::size_t rows) {
  const auto& k = simd::active_kernels();
  for (std::size_t r = 0; r < rows; ++r) {
    k.add(bias.data(), x.data() + r * bias.size(), bias.size());
  }
}

std::vector<double> matmul(const std::vector<double>& a,
                           const std::vector<double>& b, std::size_t m,
                           std::size_t k, std::size_t n) {
  std::vector<double> c(m * n);
  simd::active_kernels().gemm(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

ProbeInfo make_info(const ToyWeights& w) {
  ProbeInfo info;
  info.m_layers = w.layers;
  info.h_heads = w.heads;
  info.embed_dim = w.embed_dim;
  for (std::size_t i = 0; i < w.config.label_count; ++i) {
    info.labels.push_back("label" + std::to_string(i));
  }
  info.task_kind = w.config.task_kind;
  info.special_ids = {kCls, kSep, kUnk, kPad};
  info.max_seq_len = w.max_seq_len;
  info.vocab_size = w.vocab.size();
  info.pre_softmax = true;
  info.reentrant = true;
  return info;
}

void check_shape(const std::vector<double>& v, std::size_t expected,
                 const std::string& name) {
  if (v.size() != expected) {
    throw DataError("toy weights: tensor '" + name + "' has " +
                    std::to_string(v.size()) + " values, expected " +
                    std::to_string(expected));
  }
}

}  // namespace

const std::vector<std::string>& toy_vocabulary() {
  static const std::vector<std::string> vocab = {
      "[PAD]", "[UNK]", "[CLS]", "[SEP]",
      "a", "b", "the", "an", "is", "was", "are", "be", "and", "but", "not",
      "no", "never", "always", "very", "really", "so", "too", "i", "it",
      "this", "that", "they", "we", "you", "of", "to", "in", "with", "for",
      "good", "great", "amazing", "best", "fun", "love", "loved", "liked",
      "enjoyed", "bad", "terrible", "awful", "worst", "boring", "hate",
      "hated", "movie", "film", "plot", "acting", "story", "people", "time",
      "cells", "growth", "tumor", "protein", "gene", "cancer", "patients",
      "study", "results", "show", "new", "old", "strong", "weak", "metric",
      "model"};
  return vocab;
}

ToyWeights ToyWeights::Generate(const ToyProbeConfig& config) {
  if (config.label_count == 0) {
    throw ConfigError("toy probe: label_count must be >= 1");
  }
  if (config.task_kind == TaskKind::kSingleLabel && config.label_count < 2) {
    throw ConfigError("toy probe: single-label task needs >= 2 labels");
  }
  ToyWeights w;
  w.config = config;
  w.vocab = toy_vocabulary();
  WeightStream rng(config.seed);
  const std::size_t e = w.embed_dim;
  const std::size_t f = w.ffn_dim;
  w.embedding = rng.draw(w.vocab.size() * e, 1.0);
  for (std::size_t l = 0; l < w.layers; ++l) {
    ToyLayerWeights lw;
    lw.wq = rng.draw(e * e, 1.0);
    lw.wk = rng.draw(e * e, 1.0);
    lw.wv = rng.draw(e * e, 1.0 / std::sqrt(static_cast<double>(e)));
    lw.wo = rng.draw(e * e, 1.0 / std::sqrt(static_cast<double>(e)));
    lw.w1 = rng.draw(e * f, 1.0 / std::sqrt(static_cast<double>(e)));
    lw.b1 = rng.draw(f, 0.1);
    lw.w2 = rng.draw(f * e, 1.0 / std::sqrt(static_cast<double>(f)));
    lw.b2 = rng.draw(e, 0.1);
    w.layer_weights.push_back(std::move(lw));
  }
  w.classifier_w = rng.draw(e * config.label_count, 1.0);
  w.classifier_b = rng.draw(config.label_count, 0.1);
  return w;
}

void ToyWeights::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = kWeightsFormat;
  j["version"] = 1;
  j["seed"] = config.seed;
  j["task_kind"] = to_string(config.task_kind);
  j["dims"] = {{"layers", layers},       {"heads", heads},
               {"embed_dim", embed_dim}, {"ffn_dim", ffn_dim},
               {"labels", config.label_count}, {"max_seq_len", max_seq_len},
               {"vocab_size", vocab.size()}};
  j["vocab"] = vocab;
  j["embedding"] = embedding;
  auto& jl = j["layers"];
  jl = nlohmann::ordered_json::array();
  for (const auto& lw : layer_weights) {
    jl.push_back({{"wq", lw.wq}, {"wk", lw.wk}, {"wv", lw.wv}, {"wo", lw.wo},
                  {"w1", lw.w1}, {"b1", lw.b1}, {"w2", lw.w2}, {"b2", lw.b2}});
  }
  j["classifier_w"] = classifier_w;
  j["classifier_b"] = classifier_b;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write toy weights to " + path.string());
  out << j.dump(1) << "\n";
}

ToyWeights ToyWeights::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read toy weights from " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("toy weights " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != kWeightsFormat || j.at("version") != 1) {
      throw DataError("toy weights " + path.string() +
                      ": unsupported format header");
    }
    ToyWeights w;
    w.config.seed = j.at("seed").get<std::uint64_t>();
    w.config.task_kind = j.at("task_kind") == "multi_label"
                             ? TaskKind::kMultiLabel
                             : TaskKind::kSingleLabel;
    const auto& dims = j.at("dims");
    w.layers = dims.at("layers");
    w.heads = dims.at("heads");
    w.embed_dim = dims.at("embed_dim");
    w.ffn_dim = dims.at("ffn_dim");
    w.config.label_count = dims.at("labels");
    w.max_seq_len = dims.at("max_seq_len");
    w.vocab = j.at("vocab").get<std::vector<std::string>>();
    if (w.vocab.size() != dims.at("vocab_size").get<std::size_t>() ||
        w.vocab.size() <= kSep) {
      throw DataError("toy weights: vocabulary size mismatch");
    }
    if (w.heads == 0 || w.layers == 0 || w.embed_dim % w.heads != 0) {
      throw DataError("toy weights: heads must divide embed_dim");
    }
    const std::size_t e = w.embed_dim;
    const std::size_t f = w.ffn_dim;
    w.embedding = j.at("embedding").get<std::vector<double>>();
    check_shape(w.embedding, w.vocab.size() * e, "embedding");
    for (const auto& jl : j.at("layers")) {
      ToyLayerWeights lw;
      lw.wq = jl.at("wq").get<std::vector<double>>();
      lw.wk = jl.at("wk").get<std::vector<double>>();
      lw.wv = jl.at("wv").get<std::vector<double>>();
      lw.wo = jl.at("wo").get<std::vector<double>>();
      lw.w1 = jl.at("w1").get<std::vector<double>>();
      lw.b1 = jl.at("b1").get<std::vector<double>>();
      lw.w2 = jl.at("w2").get<std::vector<double>>();
      lw.b2 = jl.at("b2").get<std::vector<double>>();
      for (const auto* t : {&lw.wq, &lw.wk, &lw.wv, &lw.wo}) {
        check_shape(*t, e * e, "layer attention projection");
      }
      check_shape(lw.w1, e * f, "w1");
      check_shape(lw.b1, f, "b1");
      check_shape(lw.w2, f * e, "w2");
      check_shape(lw.b2, e, "b2");
      w.layer_weights.push_back(std::move(lw));
    }
    if (w.layer_weights.size() != w.layers) {
      throw DataError("toy weights: layer count mismatch");
    }
    w.classifier_w = j.at("classifier_w").get<std::vector<double>>();
    w.classifier_b = j.at("classifier_b").get<std::vector<double>>();
    check_shape(w.classifier_w, e * w.config.label_count, "classifier_w");
    check_shape(w.classifier_b, w.config.label_count, "classifier_b");
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("toy weights " + path.string() + ": " + e.what());
  }
}

ToyProbe::ToyProbe(const ToyProbeConfig& config)
    : ToyProbe(ToyWeights::Generate(config)) {}

ToyProbe::ToyProbe(ToyWeights weights)
    : weights_(std::move(weights)), info_(make_info(weights_)) {
  validate_probe_info(info_);
}

TokenSequence ToyProbe::tokenize(std::string_view text) const {
  std::vector<int> ids{kCls};
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    const auto it = std::find(weights_.vocab.begin() + kSep + 1,
                              weights_.vocab.end(), word);
    ids.push_back(it == weights_.vocab.end()
                      ? kUnk
                      : static_cast<int>(it - weights_.vocab.begin()));
    word.clear();
  };
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '\'') {
      word.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      flush();
    }
  }
  flush();
  if (ids.size() == 1) {
    throw ContractError("tokenize: text contains no tokens");
  }
  ids.push_back(kSep);
  return sequence_from_ids(ids);
}

TokenSequence ToyProbe::sequence_from_ids(std::span<const int> token_ids) const {
  std::vector<std::string> tokens;
  std::vector<std::uint8_t> special;
  std::size_t cls_index = token_ids.size();
  std::size_t cls_count = 0;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= weights_.vocab.size()) {
      throw ProbeError("unknown token id " + std::to_string(id) +
                       " at position " + std::to_string(i));
    }
    tokens.push_back(weights_.vocab[static_cast<std::size_t>(id)]);
    special.push_back(id == kCls || id == kSep || id == kPad);
    if (id == kCls) {
      cls_index = i;
      ++cls_count;
    }
  }
  if (cls_count != 1) {
    throw ProbeError("token ids must contain exactly one [CLS], found " +
                     std::to_string(cls_count));
  }
  return TokenSequence(std::move(tokens),
                       std::vector<int>(token_ids.begin(), token_ids.end()),
                       std::move(special), cls_index, kUnk);
}

ProbeResponse ToyProbe::forward(std::span<const int> token_ids) const {
  const ToyWeights& w = weights_;
  const std::size_t s = token_ids.size();
  if (s == 0) throw ProbeError("forward: empty input");
  if (s > w.max_seq_len) {
    throw ProbeError("forward: sequence length " + std::to_string(s) +
                     " exceeds max_seq_len " + std::to_string(w.max_seq_len));
  }
  TokenSequence seq = sequence_from_ids(token_ids);

  const auto& k = simd::active_kernels();
  const std::size_t e = w.embed_dim;
  const std::size_t d = e / w.heads;
  const double sqrt_e = std::sqrt(static_cast<double>(e));

  std::vector<double> x(s * e);
  for (std::size_t i = 0; i < s; ++i) {
    const auto id = static_cast<std::size_t>(token_ids[i]);
    for (std::size_t c = 0; c < e; ++c) {
      const double freq =
          std::pow(10000.0, static_cast<double>(c - c % 2) /
                                static_cast<double>(e));
      const double angle = static_cast<double>(i) / freq;
      const double pos = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
      x[i * e + c] = w.embedding[id * e + c] + pos;
    }
  }

  std::vector<double> scores(w.layers * w.heads * s * s);
  std::vector<double> qh(s * d), kt(d * s), vh(s * d), probs(s * s),
      zh(s * d);
  for (std::size_t l = 0; l < w.layers; ++l) {
    const ToyLayerWeights& lw = w.layer_weights[l];
    const auto q = matmul(x, lw.wq, s, e, e);
    const auto kk = matmul(x, lw.wk, s, e, e);
    const auto v = matmul(x, lw.wv, s, e, e);
    std::vector<double> z(s * e);
    for (std::size_t h = 0; h < w.heads; ++h) {
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
          qh[i * d + c] = q[i * e + h * d + c];
          kt[c * s + i] = kk[i * e + h * d + c];
          vh[i * d + c] = v[i * e + h * d + c];
        }
      }
      double* block = scores.data() + (l * w.heads + h) * s * s;
      k.gemm(qh.data(), kt.data(), block, s, d, s);
      k.div_scalar(block, sqrt_e, s * s);
      for (std::size_t i = 0; i < s; ++i) {
        softmax_row({block + i * s, s}, {probs.data() + i * s, s});
      }
      k.gemm(probs.data(), vh.data(), zh.data(), s, s, d);
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
          z[i * e + h * d + c] = zh[i * d + c];
        }
      }
    }
    const auto o = matmul(z, lw.wo, s, e, e);
    k.add(o.data(), x.data(), s * e);
    layer_norm(x, s, e);

    auto hidden = matmul(x, lw.w1, s, e, w.ffn_dim);
    add_bias(hidden, lw.b1, s);
    for (double& val : hidden) val = val > 0.0 ? val : 0.0;
    auto ff = matmul(hidden, lw.w2, s, w.ffn_dim, e);
    add_bias(ff, lw.b2, s);
    k.add(ff.data(), x.data(), s * e);
    layer_norm(x, s, e);
  }

  std::vector<double> pooled(e, 0.0);
  for (std::size_t i = 0; i < s; ++i) k.add(x.data() + i * e, pooled.data(), e);
  k.div_scalar(pooled.data(), static_cast<double>(s), e);

  const std::size_t labels = w.config.label_count;
  auto logits = matmul(pooled, w.classifier_w, 1, e, labels);
  k.add(w.classifier_b.data(), logits.data(), labels);

  std::vector<double> p(labels);
  if (w.config.task_kind == TaskKind::kSingleLabel) {
    softmax_row(logits, p);
  } else {
    for (std::size_t i = 0; i < labels; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    }
  }

  return ProbeResponse{PredictionVector(std::move(p), w.config.task_kind),
                       AttentionStack(w.layers, w.heads, s, std::move(scores)),
                       std::move(seq)};
}

}  // namespace attnx
