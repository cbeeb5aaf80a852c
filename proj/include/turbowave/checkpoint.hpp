// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace turbowave {

// Single-file archive: a JSON metadata record plus named tensors, closed by
// a CRC-32 over every preceding byte.
//
//   "TWCKPT\r\n" | u32 version | u32 meta_len | meta (JSON) | u32 count |
//   count x { u32 name_len | name | u8 dtype | u32 ndim | i64 dims[ndim] |
//             u64 nbytes | data } | u32 crc32
//
// All integers little-endian; tensors are stored contiguous in host order.
struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

inline constexpr uint32_t kArchiveVersion = 1;

std::string encode_archive(const Archive& archive);
// Throws IntegrityError on bad magic, version, truncation or checksum.
Archive decode_archive(const std::string& bytes);

void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);

}  // namespace turbowave
