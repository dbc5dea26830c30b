#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "znext/pnm.hpp"
#include "znext/train.hpp"

namespace znext {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    x = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw Error(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x)) throw Error(key + ": expected a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw Error(key + ": expected true or false, got '" + v + "'");
}

template <typename U>
std::string join(const std::vector<U>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

}  // namespace detail

/// Model and training settings resolved from defaults, an optional
/// "key = value" file, and command-line overrides, in that order.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string ual = "pow2";

  RunConfig() { train.seed = 0; }

  /// Applies one setting; unknown keys and malformed values are errors.
  void set(const std::string& key, const std::string& raw) {
    const std::string v = detail::trim(raw);
    using detail::parse_bool, detail::parse_real, detail::parse_size;
    if (key == "levels") model.encoder.levels = parse_size(key, v);
    else if (key == "channels") model.encoder.channels = parse_size(key, v);
    else if (key == "widths") {
      model.encoder.widths.clear();
      if (!v.empty())
        for (const auto& tok : split_list(v)) model.encoder.widths.push_back(parse_size(key, tok));
    } else if (key == "heads") model.heads = parse_size(key, v);
    else if (key == "groups") model.groups = parse_size(key, v);
    else if (key == "clip_len") model.clip_len = parse_size(key, v);
    else if (key == "scales") {
      model.scales.clear();
      for (const auto& tok : split_list(v)) model.scales.push_back(parse_real(key, tok));
    } else if (key == "fusion") {
      if (v == "mhsiu") model.fusion = Fusion::Mhsiu;
      else if (v == "add") model.fusion = Fusion::Add;
      else throw Error("fusion: expected mhsiu or add, got '" + v + "'");
    } else if (key == "downsample") model.downsample = parse_downsample(v);
    else if (key == "temporal_shift") model.temporal.shift = parse_bool(key, v);
    else if (key == "temporal_attention") model.temporal.attention = parse_bool(key, v);
    else if (key == "temporal_diffusion") model.temporal.diffusion = parse_bool(key, v);
    else if (key == "input_side") train.input_side = parse_size(key, v);
    else if (key == "ual") {
      parse_ual(v, train.loss);
      ual = v;
    } else if (key == "schedule") train.loss.schedule = parse_schedule(v);
    else if (key == "t_min") train.loss.t_min = parse_real(key, v);
    else if (key == "t_max") train.loss.t_max = parse_real(key, v);
    else if (key == "lambda_min") train.loss.lambda_min = parse_real(key, v);
    else if (key == "lambda_max") train.loss.lambda_max = parse_real(key, v);
    else if (key == "epochs") train.epochs = parse_size(key, v);
    else if (key == "batch_size") train.batch_size = parse_size(key, v);
    else if (key == "lr") train.lr = parse_real(key, v);
    else if (key == "decay_factor") train.decay_factor = parse_real(key, v);
    else if (key == "decay_every") train.decay_every = parse_size(key, v);
    else if (key == "augment") train.augment = parse_bool(key, v);
    else if (key == "seed") train.seed = parse_size(key, v);
    else throw Error("unknown config key '" + key + "'");
  }

  /// Parses "key = value" lines; '#' starts a comment.
  void load_text(const std::string& text, const std::string& origin = "<config>") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      if (detail::trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      try {
        set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
      } catch (const Error& e) {
        throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void load_file(const std::filesystem::path& p) { load_text(read_file(p), p.string()); }

  void validate() const {
    model.validate();
    train.loss.validate();
    if (train.epochs == 0) throw Error("epochs must be positive");
    if (train.batch_size == 0) throw Error("batch_size must be positive");
    if (!(train.lr > 0)) throw Error("lr must be positive");
    if (train.input_side % 4 != 0) throw Error("input_side must be divisible by 4");
  }

  /// Architecture keys only: enough to rebuild the model for inference.
  std::string model_text() const {
    std::ostringstream os;
    os << "levels = " << model.encoder.levels << "\n"
       << "channels = " << model.encoder.channels << "\n"
       << "widths = " << detail::join(model.encoder.widths) << "\n"
       << "heads = " << model.heads << "\n"
       << "groups = " << model.groups << "\n"
       << "clip_len = " << model.clip_len << "\n"
       << "scales = " << detail::join(model.scales) << "\n"
       << "fusion = " << (model.fusion == Fusion::Mhsiu ? "mhsiu" : "add") << "\n"
       << "downsample = " << to_string(model.downsample) << "\n"
       << "temporal_shift = " << (model.temporal.shift ? "true" : "false") << "\n"
       << "temporal_attention = " << (model.temporal.attention ? "true" : "false") << "\n"
       << "temporal_diffusion = " << (model.temporal.diffusion ? "true" : "false") << "\n"
       << "input_side = " << train.input_side << "\n";
    return os.str();
  }

  /// Every key with its resolved value.
  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << model_text() << "ual = " << ual << "\n"
       << "schedule = " << to_string(train.loss.schedule) << "\n"
       << "t_min = " << train.loss.t_min << "\n"
       << "t_max = " << train.loss.t_max << "\n"
       << "lambda_min = " << train.loss.lambda_min << "\n"
       << "lambda_max = " << train.loss.lambda_max << "\n"
       << "epochs = " << train.epochs << "\n"
       << "batch_size = " << train.batch_size << "\n"
       << "lr = " << train.lr << "\n"
       << "decay_factor = " << train.decay_factor << "\n"
       << "decay_every = " << train.decay_every << "\n"
       << "augment = " << (train.augment ? "true" : "false") << "\n"
       << "seed = " << train.seed << "\n";
    return os.str();
  }

 private:
  static std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(detail::trim(tok));
    return out;
  }
};

}  // namespace znext
