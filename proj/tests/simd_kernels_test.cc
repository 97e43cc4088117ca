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

#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "attnx/simd/kernels.h"
#include "test_util.h"

namespace attnx::simd {
namespace {

std::vector<double> random_vector(testing::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

TEST(SimdKernels, ScalarIsListedFirst) {
  const auto tables = available_kernels();
  ASSERT_FALSE(tables.empty());
  EXPECT_EQ(tables.front(), &scalar_kernels());
  EXPECT_EQ(tables.front()->isa, Isa::kScalar);
}

TEST(SimdKernels, ElementwiseMatchesScalarBitwise) {
  testing::Rng rng(7);
  const KernelTable& ref = scalar_kernels();
  for (const KernelTable* table : available_kernels()) {
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 13u, 64u, 65u}) {
      const auto x = random_vector(rng, n);
      const auto base = random_vector(rng, n);
      auto a = base;
      auto b = base;
      ref.add(x.data(), a.data(), n);
      table->add(x.data(), b.data(), n);
      EXPECT_TRUE(bitwise_equal(a, b)) << table->name << " add n=" << n;
      a = base;
      b = base;
      ref.mul(x.data(), a.data(), n);
      table->mul(x.data(), b.data(), n);
      EXPECT_TRUE(bitwise_equal(a, b)) << table->name << " mul n=" << n;
      a = base;
      b = base;
      ref.max(x.data(), a.data(), n);
      table->max(x.data(), b.data(), n);
      EXPECT_TRUE(bitwise_equal(a, b)) << table->name << " max n=" << n;
      a = base;
      b = base;
      ref.div_scalar(a.data(), 3.7, n);
      table->div_scalar(b.data(), 3.7, n);
      EXPECT_TRUE(bitwise_equal(a, b)) << table->name << " div n=" << n;
      EXPECT_EQ(ref.reduce_max(x.data(), n), table->reduce_max(x.data(), n))
          << table->name << " reduce_max n=" << n;
    }
  }
}

TEST(SimdKernels, GemmMatchesScalarBitwise) {
  testing::Rng rng(11);
  const KernelTable& ref = scalar_kernels();
  for (const KernelTable* table : available_kernels()) {
    for (std::size_t m : {1u, 3u, 8u}) {
      for (std::size_t k : {1u, 5u, 16u}) {
        for (std::size_t n : {1u, 4u, 7u, 9u}) {
          const auto a = random_vector(rng, m * k);
          const auto b = random_vector(rng, k * n);
          std::vector<double> c1(m * n, 99.0);
          std::vector<double> c2(m * n, -99.0);
          ref.gemm(a.data(), b.data(), c1.data(), m, k, n);
          table->gemm(a.data(), b.data(), c2.data(), m, k, n);
          EXPECT_TRUE(bitwise_equal(c1, c2))
              << table->name << " gemm " << m << "x" << k << "x" << n;
        }
      }
    }
  }
}

TEST(SimdKernels, GemmMatchesNaiveProduct) {
  testing::Rng rng(3);
  const std::size_t n = 6;
  const auto a = random_vector(rng, n * n);
  const auto b = random_vector(rng, n * n);
  std::vector<double> c(n * n);
  scalar_kernels().gemm(a.data(), b.data(), c.data(), n, n, n);
  const auto expected = testing::naive_matmul(a, b, n);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], expected[i], 1e-12);
}

TEST(SimdKernels, OverrideSelectsTable) {
  const KernelTable& before = active_kernels();
  ASSERT_TRUE(set_active_kernels("scalar"));
  EXPECT_EQ(&active_kernels(), &scalar_kernels());
  EXPECT_FALSE(set_active_kernels("no-such-isa"));
  EXPECT_EQ(&active_kernels(), &scalar_kernels());
  ASSERT_TRUE(set_active_kernels(before.name));
  EXPECT_EQ(&active_kernels(), &before);
}

}  // namespace
}  // namespace attnx::simd
