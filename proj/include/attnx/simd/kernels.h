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

#ifndef ATTNX_SIMD_KERNELS_H_
#define ATTNX_SIMD_KERNELS_H_

// Data-parallel inner loops of the attention algebra and the toy encoder.
//
// Every ISA variant performs, per output element, exactly the same sequence
// of IEEE operations as the scalar reference (no FMA contraction, reductions
// always run over the outer index in order). Results are therefore bitwise
// identical whichever table is active; tests/simd_kernels_test.cc enforces it.

#include <string_view>
#include <vector>

#include "attnx/simd/kernel_table.h"

namespace attnx::simd {

const KernelTable& scalar_kernels();

// Tables compiled into this binary and supported by the running CPU,
// scalar first.
std::vector<const KernelTable*> available_kernels();

// The table used by the library. Chosen once: the widest supported ISA,
// unless the ATTNX_SIMD environment variable names another one ("scalar",
// "avx2", "neon").
const KernelTable& active_kernels();

// Overrides the active table; returns false if `name` is unavailable.
bool set_active_kernels(std::string_view name);

}  // namespace attnx::simd

#endif  // ATTNX_SIMD_KERNELS_H_
