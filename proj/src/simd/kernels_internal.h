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

#ifndef ATTNX_SRC_SIMD_KERNELS_INTERNAL_H_
#define ATTNX_SRC_SIMD_KERNELS_INTERNAL_H_

#include "attnx/simd/kernel_table.h"

namespace attnx::simd {

const KernelTable& scalar_kernels();
// Null when the variant is not compiled into this binary.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

}  // namespace attnx::simd

#endif  // ATTNX_SRC_SIMD_KERNELS_INTERNAL_H_
