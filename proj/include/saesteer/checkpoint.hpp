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


// SAE checkpoint file.
//
//   "SAEW" | version u32 | D u32 | K u32
//   W_enc (K x D) | b_enc (K) | W_dec (D x K) | b_dec (D) | log_theta (K)
//   CRC32
//
// Tensors are f32 little-endian, row-major in the shapes listed.

#pragma once

#include <filesystem>

#include "saesteer/sae.hpp"

namespace saesteer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const SaeParams& params, const std::filesystem::path& path);
SaeParams load_checkpoint(const std::filesystem::path& path);

}  // namespace saesteer
