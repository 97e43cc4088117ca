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

// Built with -mavx2 (no -mfma): see src/CMakeLists.txt.

#include "simd/kernels_internal.h"

#if defined(__AVX2__)
#include <immintrin.h>

namespace attnx::simd {
namespace {

constexpr std::size_t kLanes = 4;

void add(const double* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d sum =
        _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(acc + i, sum);
  }
  for (; i < n; ++i) acc[i] += x[i];
}

void mul(const double* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d prod =
        _mm256_mul_pd(_mm256_loadu_pd(acc + i), _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(acc + i, prod);
  }
  for (; i < n; ++i) acc[i] *= x[i];
}

void max(const double* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    // maxpd(a, b) = a > b ? a : b, the scalar rule with a = x.
    const __m256d best =
        _mm256_max_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(acc + i));
    _mm256_storeu_pd(acc + i, best);
  }
  for (; i < n; ++i) acc[i] = x[i] > acc[i] ? x[i] : acc[i];
}

void div_scalar(double* x, double divisor, std::size_t n) {
  const __m256d d = _mm256_set1_pd(divisor);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(x + i, _mm256_div_pd(_mm256_loadu_pd(x + i), d));
  }
  for (; i < n; ++i) x[i] /= divisor;
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 2 * kLanes <= n; j += 2 * kLanes) {
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d scale = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * n + j;
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(scale, _mm256_loadu_pd(brow)));
        acc1 = _mm256_add_pd(
            acc1, _mm256_mul_pd(scale, _mm256_loadu_pd(brow + kLanes)));
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + kLanes, acc1);
    }
    for (; j + kLanes <= n; j += kLanes) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(arow[p]),
                                               _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

// Exact for finite inputs; only the sign of a zero maximum may differ from
// the scalar scan.
double reduce_max(const double* x, std::size_t n) {
  if (n < kLanes) {
    double best = x[0];
    for (std::size_t i = 1; i < n; ++i) best = x[i] > best ? x[i] : best;
    return best;
  }
  __m256d best4 = _mm256_loadu_pd(x);
  std::size_t i = kLanes;
  for (; i + kLanes <= n; i += kLanes) {
    best4 = _mm256_max_pd(_mm256_loadu_pd(x + i), best4);
  }
  alignas(32) double lanes[kLanes];
  _mm256_store_pd(lanes, best4);
  double best = lanes[0];
  for (std::size_t l = 1; l < kLanes; ++l) {
    best = lanes[l] > best ? lanes[l] : best;
  }
  for (; i < n; ++i) best = x[i] > best ? x[i] : best;
  return best;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Isa::kAvx2, "avx2", add, mul, max,
                                 div_scalar, gemm, reduce_max};
  return &table;
}

}  // namespace attnx::simd

#else

namespace attnx::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace attnx::simd

#endif
