// Copyright 2026 The saesteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "saesteer/kernels.hpp"

namespace saesteer::kernels {

#if !defined(SAESTEER_HAVE_AVX2)
const KernelTable* detail::avx2_table() { return nullptr; }
#endif
#if !defined(SAESTEER_HAVE_NEON)
const KernelTable* detail::neon_table() { return nullptr; }
#endif

namespace {

bool cpu_supports(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(SAESTEER_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
      // NEON is mandatory on AArch64.
      return detail::neon_table() != nullptr;
  }
  return false;
}

Backend pick_default() {
  if (const char* env = std::getenv("SAESTEER_KERNELS")) {
    const std::string want(env);
    for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
      if (want == backend_name(b) && is_available(b)) return b;
    }
  }
  if (is_available(Backend::kAvx2)) return Backend::kAvx2;
  if (is_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(pick_default())};
  return slot;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

bool is_available(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return detail::avx2_table() != nullptr && cpu_supports(b);
    case Backend::kNeon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (is_available(b)) out.push_back(b);
  }
  return out;
}

const KernelTable& table(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return detail::scalar_table();
    case Backend::kAvx2:
      if (is_available(b)) return *detail::avx2_table();
      break;
    case Backend::kNeon:
      if (is_available(b)) return *detail::neon_table();
      break;
  }
  throw std::invalid_argument("kernel backend '" + std::string(backend_name(b)) +
                              "' is not available on this machine");
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Backend b) { active_slot().store(&table(b), std::memory_order_release); }

}  // namespace saesteer::kernels
