#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "znext/image.hpp"

namespace znext {

/// Raw 8-bit netpbm raster: 1 channel (P5) or 3 interleaved channels (P6).
struct PnmRaster {
  std::size_t channels = 1, height = 0, width = 0;
  std::vector<std::uint8_t> bytes;

  bool operator==(const PnmRaster&) const = default;
};

/// floor(v * 255) clamped to [0, 255]; b / 255 maps back to b.
inline std::uint8_t to_byte(double v) {
  if (!(v > 0)) return 0;
  if (v >= 1) return 255;
  double q = std::floor(v * 255.0);
  if (q < 255 && (q + 1) / 255.0 <= v) q += 1;
  return static_cast<std::uint8_t>(q);
}

inline double from_byte(std::uint8_t b) { return static_cast<double>(b) / 255.0; }

namespace detail {

inline std::string read_token(const std::string& buf, std::size_t& pos, const std::string& path) {
  for (;;) {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  if (start == pos) throw DataError(path + ": truncated netpbm header");
  return buf.substr(start, pos - start);
}

inline std::size_t header_number(const std::string& tok, const std::string& path, const char* what) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9)
    throw DataError(path + ": malformed " + what + " '" + tok + "' in netpbm header");
  return std::stoul(tok);
}

}  // namespace detail

inline PnmRaster parse_pnm(const std::string& buf, const std::string& path = "<memory>") {
  std::size_t pos = 0;
  const std::string magic = detail::read_token(buf, pos, path);
  PnmRaster r;
  if (magic == "P5")
    r.channels = 1;
  else if (magic == "P6")
    r.channels = 3;
  else
    throw DataError(path + ": unsupported netpbm magic '" + magic + "' (need P5 or P6)");
  r.width = detail::header_number(detail::read_token(buf, pos, path), path, "width");
  r.height = detail::header_number(detail::read_token(buf, pos, path), path, "height");
  const std::size_t maxval = detail::header_number(detail::read_token(buf, pos, path), path, "maxval");
  if (r.width == 0 || r.height == 0) throw DataError(path + ": zero image dimension");
  if (maxval != 255) throw DataError(path + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw DataError(path + ": missing whitespace after netpbm header");
  ++pos;
  const std::size_t need = r.channels * r.width * r.height;
  if (buf.size() - pos < need)
    throw DataError(path + ": truncated payload (" + std::to_string(buf.size() - pos) + " of " +
                    std::to_string(need) + " bytes)");
  r.bytes.assign(buf.begin() + static_cast<long>(pos), buf.begin() + static_cast<long>(pos + need));
  return r;
}

inline std::string format_pnm(const PnmRaster& r) {
  if (r.channels != 1 && r.channels != 3) throw DataError("netpbm: channels must be 1 or 3");
  if (r.bytes.size() != r.channels * r.width * r.height) throw DataError("netpbm: payload size mismatch");
  std::string out = (r.channels == 1 ? "P5\n" : "P6\n") + std::to_string(r.width) + " " +
                    std::to_string(r.height) + "\n255\n";
  out.append(r.bytes.begin(), r.bytes.end());
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

inline PnmRaster read_pnm_raster(const std::filesystem::path& path) {
  return parse_pnm(read_file(path), path.string());
}

inline void write_pnm_raster(const std::filesystem::path& path, const PnmRaster& r) {
  write_file(path, format_pnm(r));
}

inline Image raster_to_image(const PnmRaster& r) {
  Image img(r.channels, r.height, r.width);
  const std::size_t n = r.height * r.width;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < r.channels; ++c) img.data[c * n + i] = from_byte(r.bytes[i * r.channels + c]);
  return img;
}

inline PnmRaster image_to_raster(const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("netpbm: cannot store " + std::to_string(img.channels) + "-channel image");
  PnmRaster r{img.channels, img.height, img.width, {}};
  const std::size_t n = img.height * img.width;
  r.bytes.resize(n * img.channels);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < img.channels; ++c) r.bytes[i * img.channels + c] = to_byte(img.data[c * n + i]);
  return r;
}

inline Image read_image(const std::filesystem::path& path) { return raster_to_image(read_pnm_raster(path)); }

/// PGM for one channel, PPM for three. Values are stored as floor(v * 255).
inline void write_image(const std::filesystem::path& path, const Image& img) {
  write_pnm_raster(path, image_to_raster(img));
}

/// Reads a PGM mask; any nonzero byte is foreground.
inline Image read_mask(const std::filesystem::path& path) {
  auto r = read_pnm_raster(path);
  if (r.channels != 1) throw DataError(path.string() + ": mask must be a P5 (grayscale) image");
  Image img(1, r.height, r.width);
  for (std::size_t i = 0; i < r.bytes.size(); ++i) img.data[i] = r.bytes[i] ? 1.0 : 0.0;
  return img;
}

}  // namespace znext
