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

#ifndef ATTNX_SIMD_KERNEL_TABLE_H_
#define ATTNX_SIMD_KERNEL_TABLE_H_

// Kept free of library templates: it is included by translation units built
// with ISA-specific flags.

#include <cstddef>

namespace attnx::simd {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  const char* name;

  // acc[i] += x[i]
  void (*add)(const double* x, double* acc, std::size_t n);
  // acc[i] *= x[i]
  void (*mul)(const double* x, double* acc, std::size_t n);
  // acc[i] = x[i] > acc[i] ? x[i] : acc[i]
  void (*max)(const double* x, double* acc, std::size_t n);
  // x[i] /= divisor
  void (*div_scalar)(double* x, double divisor, std::size_t n);
  // c (m x n) = a (m x k) * b (k x n), all row-major; c is overwritten.
  // c[i][:] accumulates a[i][p] * b[p][:] for p = 0..k-1 in order.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);
  // Largest element of x[0..n), n >= 1.
  double (*reduce_max)(const double* x, std::size_t n);
};

}  // namespace attnx::simd

#endif  // ATTNX_SIMD_KERNEL_TABLE_H_
