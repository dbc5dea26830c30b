#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "znext/pnm.hpp"

namespace znext {

/// One manifest entry: a single image or a clip of frames.
struct ManifestEntry {
  std::string name;
  std::vector<std::string> images;  // paths as written, relative to the manifest
  std::vector<std::string> masks;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  bool clips = false;
  std::filesystem::path dir;  // base for relative paths
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : dir / q;
  }
};

/// Image manifests hold one "image<TAB>mask" line per sample. Clip manifests
/// group frame lines under "clip<TAB>name" headers. Blank lines are ignored.
inline Manifest parse_manifest(const std::string& text, const std::filesystem::path& dir,
                               const std::string& origin = "<manifest>") {
  Manifest m;
  m.dir = dir;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected two tab-separated fields");
    std::string a = line.substr(0, tab), b = line.substr(tab + 1);
    if (a == "clip") {
      if (!m.clips && !m.entries.empty())
        throw DataError(origin + ":" + std::to_string(lineno) + ": clip header in an image manifest");
      m.clips = true;
      m.entries.push_back({b, {}, {}});
      continue;
    }
    if (m.clips) {
      m.entries.back().images.push_back(a);
      m.entries.back().masks.push_back(b);
    } else {
      m.entries.push_back({std::filesystem::path(a).stem().string(), {a}, {b}});
    }
  }
  for (const auto& e : m.entries)
    if (e.images.empty()) throw DataError(origin + ": clip '" + e.name + "' has no frames");
  return m;
}

inline std::string format_manifest(const Manifest& m) {
  std::string out;
  for (const auto& e : m.entries) {
    if (m.clips) out += "clip\t" + e.name + "\n";
    for (std::size_t i = 0; i < e.images.size(); ++i) out += e.images[i] + "\t" + e.masks[i] + "\n";
  }
  return out;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path(), path.string());
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file(path, format_manifest(m));
}

/// In-memory sample: one frame for images, T frames for clips.
struct Sample {
  std::string name;
  std::vector<Image> frames;  // 3-channel
  std::vector<Image> masks;   // binary, 1-channel
};

using Dataset = std::vector<Sample>;

inline void require_exists(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw DataError("missing file: " + p.string());
}

inline Dataset load_dataset(const Manifest& m) {
  for (const auto& e : m.entries) {
    for (const auto& p : e.images) require_exists(m.resolve(p));
    for (const auto& p : e.masks) require_exists(m.resolve(p));
  }
  Dataset ds;
  for (const auto& e : m.entries) {
    Sample s{e.name, {}, {}};
    for (std::size_t i = 0; i < e.images.size(); ++i) {
      Image img = read_image(m.resolve(e.images[i]));
      if (img.channels == 1) {
        Image rgb(3, img.height, img.width);
        for (std::size_t c = 0; c < 3; ++c)
          std::copy(img.data.begin(), img.data.end(), rgb.data.begin() + static_cast<long>(c * img.pixels()));
        img = std::move(rgb);
      }
      s.frames.push_back(std::move(img));
      s.masks.push_back(read_mask(m.resolve(e.masks[i])));
    }
    ds.push_back(std::move(s));
  }
  return ds;
}

}  // namespace znext
