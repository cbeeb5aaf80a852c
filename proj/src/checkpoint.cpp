// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "turbowave/errors.hpp"

namespace turbowave {

namespace {

constexpr char kMagic[8] = {'T', 'W', 'C', 'K', 'P', 'T', '\r', '\n'};

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    default:
      throw ShapeError(std::string("unsupported archive dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_code(uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: throw IntegrityError("unknown dtype code " + std::to_string(c));
  }
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(size_t n) {
    if (n > end_ - pos_) throw IntegrityError("checkpoint archive is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  size_t end_;
  size_t pos_ = 0;
};

uint32_t checksum(const char* data, size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

const torch::Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string encode_archive(const Archive& archive) {
  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kArchiveVersion);
  const std::string meta = archive.metadata.dump();
  put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
  out += meta;
  put<uint32_t>(out, static_cast<uint32_t>(archive.tensors.size()));
  for (const auto& [name, tensor] : archive.tensors) {
    auto t = tensor.detach().contiguous().cpu();
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put<uint8_t>(out, dtype_code(t.scalar_type()));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (int64_t d : t.sizes()) put<int64_t>(out, d);
    const uint64_t nbytes = t.numel() * t.element_size();
    put<uint64_t>(out, nbytes);
    out.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  put<uint32_t>(out, checksum(out.data(), out.size()));
  return out;
}

Archive decode_archive(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 4 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("not a checkpoint archive (bad magic)");
  }
  const size_t body = bytes.size() - 4;
  uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != checksum(bytes.data(), body)) {
    throw IntegrityError("checkpoint checksum mismatch");
  }
  Reader r(bytes, body);
  r.take(sizeof(kMagic));
  const auto version = r.get<uint32_t>();
  if (version != kArchiveVersion) {
    throw IntegrityError("checkpoint version " + std::to_string(version) +
                         " is not supported (expected " +
                         std::to_string(kArchiveVersion) + ")");
  }
  Archive archive;
  const auto meta_len = r.get<uint32_t>();
  const char* meta = r.take(meta_len);
  try {
    archive.metadata = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.get<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<uint32_t>();
    std::string name(r.take(name_len), name_len);
    const auto dtype = dtype_from_code(r.get<uint8_t>());
    const auto ndim = r.get<uint32_t>();
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = r.get<int64_t>();
    const auto nbytes = r.get<uint64_t>();
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (nbytes != static_cast<uint64_t>(t.numel() * t.element_size())) {
      throw IntegrityError("tensor '" + name + "' size disagrees with its shape");
    }
    std::memcpy(t.data_ptr(), r.take(nbytes), nbytes);
    archive.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw IntegrityError("trailing bytes in checkpoint archive");
  return archive;
}

void save_archive(const std::filesystem::path& path, const Archive& archive) {
  const auto bytes = encode_archive(archive);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DecodeError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_archive(ss.str());
}

}  // namespace turbowave
