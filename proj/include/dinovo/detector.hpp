#ifndef DINOVO_DETECTOR_HPP
#define DINOVO_DETECTOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "dinovo/error.hpp"
#include "dinovo/grid.hpp"
#include "dinovo/image.hpp"

namespace dinovo {

/// Parameters of the grid-aligned salient keypoint detector.
struct DetectorConfig {
  int gaussian_kernel = 5;
  double gaussian_std = 2.0;
  int patch_size = 14;
  int nms_radius = 8;
  double gradient_threshold = 0.01;
  int top_k = 512;

  void validate() const {
    if (gaussian_kernel < 1 || gaussian_kernel % 2 == 0) throw InvalidArgument("detector: kernel size must be odd");
    if (!(gaussian_std > 0.0)) throw InvalidArgument("detector: gaussian std must be positive");
    if (patch_size < 1) throw InvalidArgument("detector: patch size must be positive");
    if (nms_radius < 1) throw InvalidArgument("detector: NMS radius must be >= 1");
    if (!(gradient_threshold >= 0.0)) throw InvalidArgument("detector: threshold must be >= 0");
    if (top_k < 8) throw InvalidArgument("detector: top-k must be >= 8");
  }
};

/// Keypoint at (x = row, y = column), 0-based pixel indices.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;

  /// (u, v) = (column, row).
  Eigen::Vector2d pixel() const { return {y, x}; }

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointSet {
  int image_rows = 0;
  int image_cols = 0;
  std::vector<Keypoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Keypoint& operator[](std::size_t i) const { return points[i]; }

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

/// Normalized 1-D Gaussian taps.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian smoothing with replicate borders.
inline Grid<double> gaussian_blur(const Grid<double>& img, int size, double sigma) {
  const auto k = gaussian_kernel(size, sigma);
  const int half = size / 2;
  Grid<double> tmp(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < size; ++i) acc += k[i] * img.clamped(r, c + i - half);
      tmp(r, c) = acc;
    }
  }
  Grid<double> out(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < size; ++i) acc += k[i] * tmp.clamped(r + i - half, c);
      out(r, c) = acc;
    }
  }
  return out;
}

struct SobelResponse {
  Grid<double> gx;  ///< derivative along columns
  Grid<double> gy;  ///< derivative along rows
};

/// 3x3 Sobel derivatives normalized by 1/8, replicate borders.
inline SobelResponse sobel(const Grid<double>& img) {
  SobelResponse s{Grid<double>(img.rows(), img.cols()), Grid<double>(img.rows(), img.cols())};
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const double a = img.clamped(r - 1, c - 1), b = img.clamped(r - 1, c), d = img.clamped(r - 1, c + 1);
      const double e = img.clamped(r, c - 1), f = img.clamped(r, c + 1);
      const double g = img.clamped(r + 1, c - 1), h = img.clamped(r + 1, c), i = img.clamped(r + 1, c + 1);
      s.gx(r, c) = ((d + 2.0 * f + i) - (a + 2.0 * e + g)) / 8.0;
      s.gy(r, c) = ((g + 2.0 * h + i) - (a + 2.0 * b + d)) / 8.0;
    }
  }
  return s;
}

/// Gradient magnitude of the Gaussian-smoothed image.
inline Grid<double> gradient_map(const GrayImage& img, const DetectorConfig& cfg) {
  cfg.validate();
  const auto smooth = gaussian_blur(img.pixels(), cfg.gaussian_kernel, cfg.gaussian_std);
  const auto s = sobel(smooth);
  Grid<double> mag(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) mag(r, c) = std::hypot(s.gx(r, c), s.gy(r, c));
  }
  return mag;
}

/// One candidate per full patch cell: the first row-major maximum.
inline std::vector<Keypoint> grid_candidates(const Grid<double>& gradient, int patch_size) {
  const int grid_rows = gradient.rows() / patch_size;
  const int grid_cols = gradient.cols() / patch_size;
  std::vector<Keypoint> out;
  out.reserve(static_cast<std::size_t>(grid_rows) * grid_cols);
  for (int gr = 0; gr < grid_rows; ++gr) {
    for (int gc = 0; gc < grid_cols; ++gc) {
      int br = gr * patch_size, bc = gc * patch_size;
      double best = gradient(br, bc);
      for (int r = gr * patch_size; r < (gr + 1) * patch_size; ++r) {
        for (int c = gc * patch_size; c < (gc + 1) * patch_size; ++c) {
          if (gradient(r, c) > best) {
            best = gradient(r, c);
            br = r;
            bc = c;
          }
        }
      }
      out.push_back({static_cast<double>(br), static_cast<double>(bc), best});
    }
  }
  return out;
}

/// Descending score, ties broken by (x, y) ascending.
inline bool stronger(const Keypoint& a, const Keypoint& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.x, a.y) < std::tie(b.x, b.y);
}

/// Greedy suppression: a keypoint survives if no stronger survivor lies
/// within Chebyshev distance `radius`. Output is sorted strongest first.
inline std::vector<Keypoint> non_max_suppression(std::vector<Keypoint> candidates, int radius) {
  std::sort(candidates.begin(), candidates.end(), stronger);
  std::vector<Keypoint> kept;
  for (const auto& k : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Keypoint& s) {
      return std::max(std::abs(s.x - k.x), std::abs(s.y - k.y)) <= radius;
    });
    if (!suppressed) kept.push_back(k);
  }
  return kept;
}

/// Salient keypoint detection: gradient map, per-cell max pooling aligned to
/// the patch grid, NMS, gradient threshold, top-k.
inline KeypointSet detect(const GrayImage& img, const DetectorConfig& cfg) {
  cfg.validate();
  if (img.rows() < cfg.patch_size || img.cols() < cfg.patch_size) {
    throw InvalidArgument("detect: image smaller than one grid cell");
  }
  const auto grad = gradient_map(img, cfg);
  auto kept = non_max_suppression(grid_candidates(grad, cfg.patch_size), cfg.nms_radius);
  std::erase_if(kept, [&](const Keypoint& k) { return k.score < cfg.gradient_threshold; });
  if (kept.size() > static_cast<std::size_t>(cfg.top_k)) kept.resize(cfg.top_k);
  return {img.rows(), img.cols(), std::move(kept)};
}

}  // namespace dinovo

#endif  // DINOVO_DETECTOR_HPP
