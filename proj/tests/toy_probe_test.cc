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

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "attnx/attention.h"
#include "attnx/error.h"
#include "attnx/faithfulness.h"
#include "attnx/simd/kernels.h"
#include "attnx/toy_probe.h"
#include "json.hpp"
#include "test_util.h"

namespace attnx {
namespace {

namespace fs = std::filesystem;

const fs::path kGolden = fs::path(ATTNX_TEST_DATA_DIR) / "toy_seed42_cls_a_b_sep.json";

// Straightforward re-implementation of the encoder from the dumped weights:
// triple loops, no kernels, no shared helpers.
struct NaiveOutput {
  std::vector<double> scores;  // (L, H, S, S)
  std::vector<double> probs;
};

NaiveOutput naive_forward(const ToyWeights& w, const std::vector<int>& ids) {
  const std::size_t s = ids.size();
  const std::size_t e = w.embed_dim;
  const std::size_t d = e / w.heads;
  auto mm = [](const std::vector<double>& a, const std::vector<double>& b,
               std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
  };
  auto norm = [&](std::vector<double>& x) {
    for (std::size_t r = 0; r < s; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < e; ++c) mean += x[r * e + c] / e;
      for (std::size_t c = 0; c < e; ++c) var += std::pow(x[r * e + c] - mean, 2) / e;
      for (std::size_t c = 0; c < e; ++c) {
        x[r * e + c] = (x[r * e + c] - mean) / std::sqrt(var + 1e-5);
      }
    }
  };
  std::vector<double> x(s * e);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t c = 0; c < e; ++c) {
      const double angle = i / std::pow(10000.0, double(c / 2 * 2) / e);
      x[i * e + c] = w.embedding[ids[i] * e + c] +
                     (c % 2 ? std::cos(angle) : std::sin(angle));
    }
  }
  NaiveOutput out;
  for (const ToyLayerWeights& lw : w.layer_weights) {
    const auto q = mm(x, lw.wq, s, e, e);
    const auto k = mm(x, lw.wk, s, e, e);
    const auto v = mm(x, lw.wv, s, e, e);
    std::vector<double> z(s * e, 0.0);
    for (std::size_t h = 0; h < w.heads; ++h) {
      for (std::size_t i = 0; i < s; ++i) {
        std::vector<double> row(s);
        for (std::size_t j = 0; j < s; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += q[i * e + h * d + c] * k[j * e + h * d + c];
          row[j] = dot / std::sqrt(double(e));
        }
        out.scores.insert(out.scores.end(), row.begin(), row.end());
        const auto p = testing::naive_softmax(row);
        for (std::size_t c = 0; c < d; ++c) {
          for (std::size_t j = 0; j < s; ++j) z[i * e + h * d + c] += p[j] * v[j * e + h * d + c];
        }
      }
    }
    const auto o = mm(z, lw.wo, s, e, e);
    for (std::size_t i = 0; i < s * e; ++i) x[i] += o[i];
    norm(x);
    auto hid = mm(x, lw.w1, s, e, w.ffn_dim);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t c = 0; c < w.ffn_dim; ++c)
        hid[i * w.ffn_dim + c] = std::max(0.0, hid[i * w.ffn_dim + c] + lw.b1[c]);
    const auto ff = mm(hid, lw.w2, s, w.ffn_dim, e);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t c = 0; c < e; ++c) x[i * e + c] += ff[i * e + c] + lw.b2[c];
    norm(x);
  }
  const std::size_t labels = w.config.label_count;
  std::vector<double> logits(labels);
  for (std::size_t l = 0; l < labels; ++l) {
    logits[l] = w.classifier_b[l];
    for (std::size_t c = 0; c < e; ++c) {
      double pooled = 0.0;
      for (std::size_t i = 0; i < s; ++i) pooled += x[i * e + c];
      logits[l] += pooled / s * w.classifier_w[c * labels + l];
    }
  }
  if (w.config.task_kind == TaskKind::kSingleLabel) {
    out.probs = testing::naive_softmax(logits);
  } else {
    for (double g : logits) out.probs.push_back(1.0 / (1.0 + std::exp(-g)));
  }
  return out;
}

TEST(ToyProbe, InfoMatchesFixedShape) {
  const ToyProbe probe;
  const ProbeInfo& info = probe.info();
  EXPECT_EQ(info.m_layers, 2u);
  EXPECT_EQ(info.h_heads, 2u);
  EXPECT_EQ(info.embed_dim, 8u);
  EXPECT_EQ(info.vocab_size, 73u);
  EXPECT_EQ(info.max_seq_len, 64u);
  EXPECT_EQ(info.labels, (std::vector<std::string>{"label0", "label1"}));
  EXPECT_TRUE(info.pre_softmax);
  EXPECT_EQ(ToyProbe().info(), info);
}

TEST(ToyProbe, Tokenize) {
  const ToyProbe probe;
  const TokenSequence seq = probe.tokenize("good movie");
  EXPECT_EQ(seq.tokens(),
            (std::vector<std::string>{"[CLS]", "good", "movie", "[SEP]"}));
  EXPECT_EQ(seq.special_mask(), (std::vector<std::uint8_t>{1, 0, 0, 1}));
  EXPECT_EQ(probe.tokenize("Good, zebra!").token_ids()[2],
            probe.info().special_ids.unk);
  EXPECT_THROW(probe.tokenize(""), ContractError);
  EXPECT_THROW(probe.tokenize(" ,. "), ContractError);
}

TEST(ToyProbe, ForwardErrors) {
  const ToyProbe probe;
  EXPECT_THROW(probe.forward(std::vector<int>(65, 4)), ProbeError);
  EXPECT_THROW(probe.forward(std::vector<int>{2, 999, 3}), ProbeError);
  EXPECT_THROW(probe.forward(std::vector<int>{}), ProbeError);
}

TEST(ToyProbe, MatchesNaiveOracle) {
  testing::Rng rng(17);
  for (auto kind : {TaskKind::kSingleLabel, TaskKind::kMultiLabel}) {
    const ToyProbe probe(ToyProbeConfig{42, kind,
                                        kind == TaskKind::kSingleLabel ? 2u : 3u});
    for (int t = 0; t < 10; ++t) {
      std::vector<int> ids{2};
      const int n = rng.range(1, 20);
      for (int i = 0; i < n; ++i) {
        const int id = rng.range(3, 72);
        ids.push_back(id == 3 ? 1 : id);
      }
      ids.push_back(3);
      const ProbeResponse r = probe.forward(ids);
      const NaiveOutput o = naive_forward(probe.weights(), ids);
      ASSERT_EQ(r.attention.data().size(), o.scores.size());
      for (std::size_t i = 0; i < o.scores.size(); ++i) {
        EXPECT_NEAR(r.attention.data()[i], o.scores[i], 1e-9);
      }
      for (std::size_t l = 0; l < o.probs.size(); ++l) {
        EXPECT_NEAR(r.prediction.probabilities()[l], o.probs[l], 1e-9);
      }
      validate_response(r, probe.info());
    }
  }
}

TEST(ToyProbe, WeightsRoundTripThroughDump) {
  const fs::path path = fs::temp_directory_path() / "attnx_toy_weights.json";
  const ToyProbe probe;
  probe.weights().save(path);
  const ToyProbe loaded(ToyWeights::Load(path));
  fs::remove(path);
  const std::vector<int> ids{2, 4, 5, 40, 3};
  EXPECT_EQ(loaded.forward(ids), probe.forward(ids));
  EXPECT_EQ(loaded.info(), probe.info());
}

TEST(ToyProbe, GoldenSeed42) {
  const ToyProbe probe;
  const std::vector<int> ids = probe.tokenize("a b").token_ids();
  ASSERT_EQ(ids, (std::vector<int>{2, 4, 5, 3}));
  const ProbeResponse r = probe.forward(ids);
  if (std::getenv("ATTNX_UPDATE_GOLDEN") != nullptr) {
    nlohmann::ordered_json j;
    j["seed"] = 42;
    j["token_ids"] = ids;
    j["attention"] = r.attention.data();
    j["probabilities"] = r.prediction.probabilities();
    std::ofstream(kGolden) << j.dump(1) << "\n";
  }
  std::ifstream in(kGolden);
  ASSERT_TRUE(in) << kGolden;
  const auto j = nlohmann::json::parse(in);
  const auto attention = j.at("attention").get<std::vector<double>>();
  const auto probs = j.at("probabilities").get<std::vector<double>>();
  ASSERT_EQ(attention.size(), r.attention.data().size());
  for (std::size_t i = 0; i < attention.size(); ++i) {
    EXPECT_NEAR(r.attention.data()[i], attention[i], 1e-12);
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    EXPECT_NEAR(r.prediction.probabilities()[i], probs[i], 1e-12);
  }
  // The golden itself agrees with the naive computation.
  const NaiveOutput o = naive_forward(probe.weights(), ids);
  for (std::size_t i = 0; i < attention.size(); ++i) {
    EXPECT_NEAR(attention[i], o.scores[i], 1e-9);
  }
}

TEST(ToyProbe, SoftmaxOfScoresIsRowStochastic) {
  const ToyProbe probe;
  const AttentionStack a =
      apply_softmax(probe.forward(probe.tokenize("the movie was great").token_ids())
                        .attention);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t r = 0; r < a.seq_len(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < a.seq_len(); ++c) sum += a.at(l, h, r, c);
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
}

TEST(ToyProbe, DeterministicAndBatchEquivalent) {
  const ToyProbe probe;
  const TokenSequence seq = probe.tokenize("this film was not boring at all");
  EXPECT_EQ(probe.forward(seq.token_ids()), probe.forward(seq.token_ids()));
  std::vector<std::vector<int>> batch{seq.token_ids()};
  for (std::size_t p : seq.content_positions()) {
    for (auto mode : {PerturbationMode::kReplaceWithUnk,
                      PerturbationMode::kDeleteToken}) {
      batch.push_back(perturb(seq, p, mode).token_ids());
    }
  }
  while (batch.size() < 32) batch.push_back(batch[batch.size() % 5]);
  const auto responses = probe.forward_batch(batch);
  ASSERT_EQ(responses.size(), batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(responses[i], probe.forward(batch[i]));
  }
}

TEST(ToyProbe, PerturbationShapes) {
  const ToyProbe probe;
  const TokenSequence seq = probe.tokenize("great acting and plot");
  const std::size_t s = seq.size();
  const auto unk = probe.forward(
      perturb(seq, 2, PerturbationMode::kReplaceWithUnk).token_ids());
  EXPECT_EQ(unk.attention.seq_len(), s);
  EXPECT_EQ(unk.tokens.size(), s);
  const auto del =
      probe.forward(perturb(seq, 2, PerturbationMode::kDeleteToken).token_ids());
  EXPECT_EQ(del.attention.seq_len(), s - 1);
  EXPECT_EQ(del.attention.data().size(), 4 * (s - 1) * (s - 1));
}

TEST(ToyProbe, ScalarAndWideKernelsAgreeBitwise) {
  const ToyProbe probe;
  const std::vector<int> ids = probe.tokenize("cells show strong growth").token_ids();
  const std::string before = simd::active_kernels().name;
  ASSERT_TRUE(simd::set_active_kernels("scalar"));
  const ProbeResponse scalar = probe.forward(ids);
  for (const auto* table : simd::available_kernels()) {
    ASSERT_TRUE(simd::set_active_kernels(table->name));
    EXPECT_EQ(probe.forward(ids), scalar) << table->name;
  }
  simd::set_active_kernels(before);
}

}  // namespace
}  // namespace attnx
