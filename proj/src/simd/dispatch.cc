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

#include <atomic>
#include <cstdlib>
#include <string>

#include "attnx/simd/kernels.h"
#include "simd/kernels_internal.h"

namespace attnx::simd {
namespace {

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* find(std::string_view name) {
  for (const KernelTable* table : available_kernels()) {
    if (name == table->name) return table;
  }
  return nullptr;
}

const KernelTable* choose_default() {
  if (const char* forced = std::getenv("ATTNX_SIMD")) {
    if (const KernelTable* table = find(forced)) return table;
  }
  return available_kernels().back();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{choose_default()};
  return slot;
}

}  // namespace

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const KernelTable* table = neon_kernels()) out.push_back(table);
  if (const KernelTable* table = avx2_kernels();
      table != nullptr && cpu_supports_avx2()) {
    out.push_back(table);
  }
  return out;
}

const KernelTable& active_kernels() { return *active_slot().load(); }

bool set_active_kernels(std::string_view name) {
  const KernelTable* table = find(name);
  if (table == nullptr) return false;
  active_slot().store(table);
  return true;
}

}  // namespace attnx::simd
