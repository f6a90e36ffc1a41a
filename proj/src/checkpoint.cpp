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


#include "saesteer/checkpoint.hpp"

#include <cstring>

#include "saesteer/binary_io.hpp"
#include "saesteer/error.hpp"

namespace saesteer {
namespace {
constexpr char kMagic[4] = {'S', 'A', 'E', 'W'};
}

void save_checkpoint(const SaeParams& params, const std::filesystem::path& path) {
  params.validate();
  const std::size_t d = params.d_model;
  const std::size_t k = params.n_features;
  std::vector<float> dec_logical(d * k);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < k; ++j) dec_logical[i * k + j] = params.dec(i, j);
  }
  io::ChecksummedWriter out(path);
  out.write(kMagic, 4);
  out.write_u32(kCheckpointVersion);
  out.write_u32(params.d_model);
  out.write_u32(params.n_features);
  out.write_f32(params.w_enc);
  out.write_f32(params.b_enc);
  out.write_f32(dec_logical);
  out.write_f32(params.b_dec);
  out.write_f32(params.log_theta);
  out.finish();
}

SaeParams load_checkpoint(const std::filesystem::path& path) {
  auto buf = io::ChecksummedBuffer::load(path);
  char magic[4];
  buf.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("'" + path.string() + "' is not an SAE checkpoint (bad magic)");
  }
  const std::uint32_t version = buf.read_u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t d = buf.read_u32();
  const std::uint32_t k = buf.read_u32();
  if (d == 0 || k == 0) throw FormatError("checkpoint has zero dimensions");
  const std::size_t expected = (2 * static_cast<std::size_t>(d) * k + 2 * k + d) * 4;
  if (buf.remaining() != expected) throw FormatError("checkpoint payload size mismatch");

  SaeParams p = SaeParams::zeros(d, k);
  std::vector<float> dec_logical(static_cast<std::size_t>(d) * k);
  buf.read_f32(p.w_enc);
  buf.read_f32(p.b_enc);
  buf.read_f32(dec_logical);
  buf.read_f32(p.b_dec);
  buf.read_f32(p.log_theta);
  buf.expect_end();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < k; ++j) p.w_dec[j * d + i] = dec_logical[i * k + j];
  }
  p.validate();
  return p;
}

}  // namespace saesteer
