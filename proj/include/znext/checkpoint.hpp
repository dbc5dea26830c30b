#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <zlib.h>

#include "znext/layers.hpp"
#include "znext/pnm.hpp"

namespace znext {

inline constexpr char kCheckpointMagic[4] = {'Z', 'N', 'X', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

inline std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

/// Decoded tensor table entry; payload is the raw little-endian data.
struct CheckpointEntry {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::string payload;
};

struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t digest = 0;
  std::vector<CheckpointEntry> entries;
};

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

namespace detail {

template <typename U>
void put(std::string& out, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, std::string origin)
      : buf_(buf), end_(end), origin_(std::move(origin)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (end_ - pos_ < n) throw DataError(origin_ + ": checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t end_, pos_ = 0;
  std::string origin_;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointFile& f) {
  std::string out(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(out, f.version);
  detail::put<std::uint64_t>(out, f.digest);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.entries.size()));
  for (const auto& e : f.entries) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out += e.payload;
  }
  detail::put<std::uint32_t>(out, crc32_of(out.data(), out.size()));
  return out;
}

inline CheckpointFile decode_checkpoint(const std::string& buf, const std::string& origin = "<checkpoint>") {
  if (buf.size() < 4 + 4 + 8 + 4 + 4) throw DataError(origin + ": checkpoint truncated");
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (crc32_of(buf.data(), buf.size() - 4) != stored) throw DataError(origin + ": checkpoint CRC mismatch");
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) throw DataError(origin + ": not a znext checkpoint");
  detail::Reader r(buf, buf.size() - 4, origin);
  r.bytes(4);
  CheckpointFile f;
  f.version = r.get<std::uint32_t>();
  if (f.version != kCheckpointVersion)
    throw DataError(origin + ": checkpoint version " + std::to_string(f.version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  f.digest = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.bytes(r.get<std::uint32_t>());
    const auto code = r.get<std::uint8_t>();
    if (code > 1) throw DataError(origin + ": unknown dtype code " + std::to_string(code) + " for " + e.name);
    e.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.shape.push_back(r.get<std::uint32_t>());
      n *= e.shape.back();
    }
    e.payload = r.bytes(n * dtype_size(e.dtype));
    f.entries.push_back(std::move(e));
  }
  if (r.pos() != buf.size() - 4) throw DataError(origin + ": trailing bytes after tensor table");
  return f;
}

template <typename T>
CheckpointFile make_checkpoint(const TensorList<T>& tensors, std::uint64_t digest) {
  CheckpointFile f;
  f.digest = digest;
  for (const auto& nt : tensors) {
    detail::check_finite<T>(nt.tensor.data(), nt.name.c_str());
    auto d = nt.tensor.data();
    f.entries.push_back({nt.name, dtype_of<T>(), nt.tensor.shape(),
                         std::string(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(T))});
  }
  return f;
}

/// Copies a decoded table into `tensors`. Names, order and shapes must match;
/// a digest mismatch is an error unless `force`.
template <typename T>
void apply_checkpoint(const CheckpointFile& f, TensorList<T>& tensors, std::uint64_t digest, bool force = false) {
  if (f.digest != digest && !force)
    throw DataError("checkpoint was saved under a different model configuration (use --force to override)");
  if (f.entries.size() != tensors.size())
    throw DataError("checkpoint holds " + std::to_string(f.entries.size()) + " tensors, model has " +
                    std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = f.entries[i];
    auto& nt = tensors[i];
    if (e.name != nt.name) throw DataError("checkpoint tensor '" + e.name + "' where '" + nt.name + "' expected");
    if (e.shape != nt.tensor.shape())
      throw DataError("checkpoint tensor '" + e.name + "' has shape " + shape_str(e.shape) + ", model expects " +
                      shape_str(nt.tensor.shape()));
    auto dst = nt.tensor.data();
    if (e.dtype == dtype_of<T>()) {
      std::memcpy(dst.data(), e.payload.data(), e.payload.size());
    } else if (e.dtype == DType::F32) {
      for (std::size_t k = 0; k < dst.size(); ++k) {
        float v;
        std::memcpy(&v, e.payload.data() + 4 * k, 4);
        dst[k] = static_cast<T>(v);
      }
    } else {
      for (std::size_t k = 0; k < dst.size(); ++k) {
        double v;
        std::memcpy(&v, e.payload.data() + 8 * k, 8);
        dst[k] = static_cast<T>(v);
      }
    }
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const TensorList<T>& tensors, std::uint64_t digest) {
  write_file(path, encode_checkpoint(make_checkpoint(tensors, digest)));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, TensorList<T>& tensors, std::uint64_t digest,
                     bool force = false) {
  apply_checkpoint(decode_checkpoint(read_file(path), path.string()), tensors, digest, force);
}

}  // namespace znext
