#ifndef DINOVO_CONFIG_HPP
#define DINOVO_CONFIG_HPP

// Pipeline configuration files: one "key = value" per line, '#' comments.
// Relative paths are resolved against the config file's directory.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "dinovo/error.hpp"
#include "dinovo/manifest.hpp"
#include "dinovo/pipeline.hpp"

namespace dinovo {

namespace detail {

inline int parse_int(const std::string& v, const std::string& key) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw InvalidArgument("config: " + key + " expects an integer");
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw InvalidArgument("config: " + key + " expects a non-negative integer");
  }
  return out;
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    return parse_real(v, key);
  } catch (const FormatError&) {
    throw InvalidArgument("config: " + key + " expects a number");
  }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config: " + key + " expects true or false");
}

}  // namespace detail

/// Applies one setting. Unknown keys and malformed values throw.
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value,
                          const std::filesystem::path& base = {}) {
  using namespace detail;
  auto path = [&] { return base.empty() || value.empty() ? std::filesystem::path(value) : base / value; };
  if (key == "keyframe_threshold") cfg.keyframe_threshold = parse_double(value, key);
  else if (key == "stride") cfg.stride = parse_int(value, key);
  else if (key == "scale_source") {
    if (value == "ground_truth") cfg.scale_source = ScaleSource::ground_truth;
    else if (value == "unit") cfg.scale_source = ScaleSource::unit;
    else throw InvalidArgument("config: scale_source must be ground_truth or unit");
  } else if (key == "min_parallax") cfg.min_parallax = parse_double(value, key);
  else if (key == "cheirality_weighted") cfg.cheirality_weighted = parse_bool(value, key);
  else if (key == "min_matches") cfg.min_matches = parse_int(value, key);
  else if (key == "consensus.iterations") cfg.consensus_iterations = parse_int(value, key);
  else if (key == "consensus.threshold") cfg.consensus_threshold = parse_double(value, key);
  else if (key == "consensus.seed") cfg.consensus_seed = parse_u64(value, key);
  else if (key == "detector.kernel_size") cfg.detector.gaussian_kernel = parse_int(value, key);
  else if (key == "detector.sigma") cfg.detector.gaussian_std = parse_double(value, key);
  else if (key == "detector.patch_size") cfg.detector.patch_size = parse_int(value, key);
  else if (key == "detector.nms_radius") cfg.detector.nms_radius = parse_int(value, key);
  else if (key == "detector.threshold") cfg.detector.gradient_threshold = parse_double(value, key);
  else if (key == "detector.top_k") cfg.detector.top_k = parse_int(value, key);
  else if (key == "descriptor.provider") {
    if (value == "classical") cfg.provider = DescriptorProvider::classical;
    else if (value == "file") cfg.provider = DescriptorProvider::file;
    else throw InvalidArgument("config: descriptor.provider must be classical or file");
  } else if (key == "descriptor.fusion_weights") cfg.fusion_weights = path();
  else if (key == "descriptor.seed") cfg.fusion_seed = parse_u64(value, key);
  else if (key == "descriptor.normalize") cfg.normalize_descriptors = parse_bool(value, key);
  else if (key == "matcher.backend") {
    if (value == "learned") cfg.backend = MatcherBackend::learned;
    else if (value == "mutual_nn") cfg.backend = MatcherBackend::mutual_nn;
    else if (value == "tracks") cfg.backend = MatcherBackend::tracks;
    else throw InvalidArgument("config: matcher.backend must be learned, mutual_nn or tracks");
  } else if (key == "matcher.threshold") cfg.match_threshold = parse_double(value, key);
  else if (key == "matcher.min_similarity") cfg.min_similarity = parse_double(value, key);
  else if (key == "matcher.radius") cfg.match_radius = parse_double(value, key);
  else if (key == "matcher.weights") cfg.matcher_weights = path();
  else throw InvalidArgument("config: unknown key '" + key + "'");
}

/// Splits "key = value" / "key=value"; throws on a missing '='.
inline std::pair<std::string, std::string> split_setting(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw InvalidArgument("config: expected key = value, got '" + text + "'");
  return {detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1))};
}

inline void apply_config(PipelineConfig& cfg, std::istream& in, const std::filesystem::path& base = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    try {
      const auto [k, v] = split_setting(line);
      apply_setting(cfg, k, v, base);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path.string());
  PipelineConfig cfg;
  apply_config(cfg, in, path.parent_path());
  return cfg;
}

}  // namespace dinovo

#endif  // DINOVO_CONFIG_HPP
