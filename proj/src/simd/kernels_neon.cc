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

#include "simd/kernels_internal.h"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace attnx::simd {
namespace {

constexpr std::size_t kLanes = 2;

void add(const double* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), vld1q_f64(x + i)));
  }
  for (; i < n; ++i) acc[i] += x[i];
}

void mul(const double* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(acc + i, vmulq_f64(vld1q_f64(acc + i), vld1q_f64(x + i)));
  }
  for (; i < n; ++i) acc[i] *= x[i];
}

void max(const double* x, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t xv = vld1q_f64(x + i);
    const float64x2_t av = vld1q_f64(acc + i);
    // Select instead of vmaxq so equal-valued zeros keep the scalar choice.
    vst1q_f64(acc + i, vbslq_f64(vcgtq_f64(xv, av), xv, av));
  }
  for (; i < n; ++i) acc[i] = x[i] > acc[i] ? x[i] : acc[i];
}

void div_scalar(double* x, double divisor, std::size_t n) {
  const float64x2_t d = vdupq_n_f64(divisor);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(x + i, vdivq_f64(vld1q_f64(x + i), d));
  }
  for (; i < n; ++i) x[i] /= divisor;
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + kLanes <= n; j += kLanes) {
      float64x2_t acc = vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < k; ++p) {
        // vmulq + vaddq, not vfmaq: keeps the scalar rounding sequence.
        acc = vaddq_f64(acc, vmulq_f64(vdupq_n_f64(arow[p]),
                                       vld1q_f64(b + p * n + j)));
      }
      vst1q_f64(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

double reduce_max(const double* x, std::size_t n) {
  double best = x[0];
  for (std::size_t i = 1; i < n; ++i) best = x[i] > best ? x[i] : best;
  return best;
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{Isa::kNeon, "neon", add, mul, max,
                                 div_scalar, gemm, reduce_max};
  return &table;
}

}  // namespace attnx::simd

#else

namespace attnx::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace attnx::simd

#endif
