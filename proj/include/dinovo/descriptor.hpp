#ifndef DINOVO_DESCRIPTOR_HPP
#define DINOVO_DESCRIPTOR_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <span>

#include <Eigen/Core>
#include <Eigen/QR>

#include "dinovo/detector.hpp"
#include "dinovo/error.hpp"
#include "dinovo/fmap.hpp"
#include "dinovo/grid.hpp"
#include "dinovo/image.hpp"

namespace dinovo {

inline constexpr int kCoarseChannels = 384;
inline constexpr int kFineChannels = 64;
inline constexpr int kDescriptorDim = 192;
inline constexpr int kCoarseStride = 14;

/// Pixel stride of a dense map: one cell per 14x14 patch, or one per pixel.
enum class FeatureStride : int { coarse14 = kCoarseStride, fine1 = 1 };

/// Dense channel-last feature map with a stride tag.
class DenseFeatureMap {
 public:
  DenseFeatureMap() = default;
  DenseFeatureMap(Tensor3f tensor, FeatureStride stride) : tensor_(std::move(tensor)), stride_(stride) {
    if (tensor_.values.size() != static_cast<std::size_t>(tensor_.rows) * tensor_.cols * tensor_.channels) {
      throw InvalidArgument("feature map: value count does not match shape");
    }
    for (float v : tensor_.values) {
      if (!std::isfinite(v)) throw InvalidArgument("feature map: non-finite value");
    }
  }

  int rows() const { return static_cast<int>(tensor_.rows); }
  int cols() const { return static_cast<int>(tensor_.cols); }
  int channels() const { return static_cast<int>(tensor_.channels); }
  FeatureStride stride() const { return stride_; }
  int stride_pixels() const { return static_cast<int>(stride_); }
  const Tensor3f& tensor() const { return tensor_; }

  std::span<const float> at(int r, int c) const {
    return {tensor_.values.data() + tensor_.index(r, c), tensor_.channels};
  }

 private:
  Tensor3f tensor_;
  FeatureStride stride_ = FeatureStride::fine1;
};

namespace detail {

inline Eigen::MatrixXd query_map(const DenseFeatureMap& map, const KeypointSet& kp, FeatureStride expected) {
  if (map.stride() != expected) throw InvalidArgument("feature query: map has the wrong stride");
  const int s = map.stride_pixels();
  if (map.rows() != kp.image_rows / s || map.cols() != kp.image_cols / s) {
    throw InvalidArgument("feature query: map shape inconsistent with image size");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(kp.size()), map.channels());
  for (std::size_t i = 0; i < kp.size(); ++i) {
    const int r = static_cast<int>(std::floor(kp[i].x / s));
    const int c = static_cast<int>(std::floor(kp[i].y / s));
    if (r < 0 || c < 0 || r >= map.rows() || c >= map.cols()) {
      throw InvalidArgument("feature query: keypoint outside the feature grid");
    }
    const auto f = map.at(r, c);
    for (int ch = 0; ch < map.channels(); ++ch) out(static_cast<Eigen::Index>(i), ch) = f[ch];
  }
  return out;
}

}  // namespace detail

/// Coarse lookup: keypoint (x, y) reads cell (floor(x/14), floor(y/14)).
inline Eigen::MatrixXd query_coarse(const DenseFeatureMap& map, const KeypointSet& kp) {
  return detail::query_map(map, kp, FeatureStride::coarse14);
}

/// Fine lookup: keypoint (x, y) reads cell (floor(x), floor(y)).
inline Eigen::MatrixXd query_fine(const DenseFeatureMap& map, const KeypointSet& kp) {
  return detail::query_map(map, kp, FeatureStride::fine1);
}

/// Linear projector from the concatenated [coarse | fine] vector to the
/// descriptor space: f = W [c | f] + b.
struct FusionWeights {
  Eigen::MatrixXd weight = Eigen::MatrixXd::Zero(kDescriptorDim, kCoarseChannels + kFineChannels);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(kDescriptorDim);

  void validate() const {
    if (weight.rows() != kDescriptorDim || weight.cols() != kCoarseChannels + kFineChannels ||
        bias.size() != kDescriptorDim) {
      throw InvalidArgument("fusion weights: expected shape (192, 448) plus 192 bias");
    }
    if (!weight.allFinite() || !bias.allFinite()) throw InvalidArgument("fusion weights: non-finite values");
  }

  /// Seeded projection with orthonormal rows and zero bias.
  static FusionWeights random(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd g(kCoarseChannels + kFineChannels, kDescriptorDim);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    FusionWeights w;
    w.weight = q.transpose();
    return w;
  }

  /// Container layout: rows = 192, cols = 449, channels = 1; last column is the bias.
  Tensor3f to_tensor() const {
    validate();
    Tensor3f t{kDescriptorDim, kCoarseChannels + kFineChannels + 1, 1, {}};
    t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
    for (int r = 0; r < kDescriptorDim; ++r) {
      for (int c = 0; c < kCoarseChannels + kFineChannels; ++c) t.at(r, c) = static_cast<float>(weight(r, c));
      t.at(r, kCoarseChannels + kFineChannels) = static_cast<float>(bias(r));
    }
    return t;
  }

  static FusionWeights from_tensor(const Tensor3f& t) {
    if (t.rows != kDescriptorDim || t.cols != kCoarseChannels + kFineChannels + 1 || t.channels != 1) {
      throw FormatError("fusion weights: expected a 192 x 449 x 1 tensor");
    }
    FusionWeights w;
    for (int r = 0; r < kDescriptorDim; ++r) {
      for (int c = 0; c < kCoarseChannels + kFineChannels; ++c) w.weight(r, c) = t.at(r, c);
      w.bias(r) = t.at(r, kCoarseChannels + kFineChannels);
    }
    return w;
  }
};

/// Fused descriptors, index-aligned with their keypoints, plus keypoint
/// positions normalized to [0, 1)^2 as (x / H, y / W).
struct DescriptorSet {
  KeypointSet keypoints;
  Eigen::MatrixXd descriptors;  ///< K x D
  Eigen::MatrixXd positions;    ///< K x 2

  std::size_t size() const { return keypoints.size(); }
  int dim() const { return static_cast<int>(descriptors.cols()); }
};

/// f_i = W [coarse_i | fine_i] + b, one 192-vector per row.
inline Eigen::MatrixXd fuse(const Eigen::MatrixXd& coarse, const Eigen::MatrixXd& fine, const FusionWeights& w) {
  w.validate();
  if (coarse.cols() != kCoarseChannels || fine.cols() != kFineChannels || coarse.rows() != fine.rows()) {
    throw InvalidArgument("fuse: expected K x 384 coarse and K x 64 fine features");
  }
  Eigen::MatrixXd cat(coarse.rows(), kCoarseChannels + kFineChannels);
  cat << coarse, fine;
  return (cat * w.weight.transpose()).rowwise() + w.bias.transpose();
}

inline Eigen::MatrixXd normalized_positions(const KeypointSet& kp) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(kp.size()), 2);
  for (std::size_t i = 0; i < kp.size(); ++i) {
    p(static_cast<Eigen::Index>(i), 0) = kp[i].x / kp.image_rows;
    p(static_cast<Eigen::Index>(i), 1) = kp[i].y / kp.image_cols;
  }
  return p;
}

inline DescriptorSet make_descriptor_set(KeypointSet kp, Eigen::MatrixXd descriptors, bool l2_normalize = false) {
  if (descriptors.rows() != static_cast<Eigen::Index>(kp.size())) {
    throw InvalidArgument("descriptor set: descriptor count differs from keypoint count");
  }
  if (!descriptors.allFinite()) throw InvalidArgument("descriptor set: non-finite descriptor");
  if (l2_normalize) {
    for (Eigen::Index i = 0; i < descriptors.rows(); ++i) {
      const double n = descriptors.row(i).norm();
      if (n > 0.0) descriptors.row(i) /= n;
    }
  }
  Eigen::MatrixXd pos = normalized_positions(kp);
  return {std::move(kp), std::move(descriptors), std::move(pos)};
}

struct FeatureMaps {
  DenseFeatureMap coarse;
  DenseFeatureMap fine;
};

/// Query both maps for every keypoint and fuse.
inline DescriptorSet describe(const KeypointSet& kp, const FeatureMaps& maps, const FusionWeights& w,
                              bool l2_normalize = false) {
  return make_descriptor_set(kp, fuse(query_coarse(maps.coarse, kp), query_fine(maps.fine, kp), w), l2_normalize);
}

inline FeatureMaps provider_file(const std::filesystem::path& coarse, const std::filesystem::path& fine) {
  return {DenseFeatureMap(read_fmap(coarse), FeatureStride::coarse14),
          DenseFeatureMap(read_fmap(fine), FeatureStride::fine1)};
}

namespace detail {

/// Samples `img` on a rows x cols grid with `step` spacing centred on (r, c).
inline void sample_grid(const Grid<double>& img, double r, double c, int rows, int cols, int step, float*& out) {
  for (int a = 0; a < rows; ++a) {
    for (int b = 0; b < cols; ++b) {
      const int y = static_cast<int>(std::lround(r + (a - (rows - 1) / 2.0) * step));
      const int x = static_cast<int>(std::lround(c + (b - (cols - 1) / 2.0) * step));
      *out++ = static_cast<float>(img.clamped(y, x));
    }
  }
}

}  // namespace detail

/// Deterministic hand-crafted stand-in for the learned feature encoders,
/// built from Gaussian-smoothed intensity samples on regular grids.
///
/// Fine map (64 channels per pixel): 8x8 samples at 10-px spacing of the
/// image smoothed with std 5 px. Coarse map (384 channels per 14x14 cell,
/// centred on the cell): 12x16 samples at 12-px spacing with std 8 px, then
/// 12x16 samples at 24-px spacing with std 16 px.
inline FeatureMaps provider_classical(const GrayImage& img) {
  if (img.rows() < kCoarseStride || img.cols() < kCoarseStride) {
    throw InvalidArgument("classical provider: image smaller than one grid cell");
  }
  const int h = img.rows(), w = img.cols();
  const Grid<double> s5 = gaussian_blur(img.pixels(), 31, 5.0);
  const Grid<double> s8 = gaussian_blur(img.pixels(), 49, 8.0);
  const Grid<double> s16 = gaussian_blur(img.pixels(), 97, 16.0);

  Tensor3f fine{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w), kFineChannels, {}};
  fine.values.resize(static_cast<std::size_t>(h) * w * kFineChannels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      float* f = fine.values.data() + fine.index(r, c);
      detail::sample_grid(s5, r, c, 8, 8, 10, f);
    }
  }

  const int gh = h / kCoarseStride, gw = w / kCoarseStride;
  Tensor3f coarse{static_cast<std::uint32_t>(gh), static_cast<std::uint32_t>(gw), kCoarseChannels, {}};
  coarse.values.resize(static_cast<std::size_t>(gh) * gw * kCoarseChannels);
  for (int gr = 0; gr < gh; ++gr) {
    for (int gc = 0; gc < gw; ++gc) {
      float* f = coarse.values.data() + coarse.index(gr, gc);
      const double r = gr * kCoarseStride + (kCoarseStride - 1) / 2.0, c = gc * kCoarseStride + (kCoarseStride - 1) / 2.0;
      detail::sample_grid(s8, r, c, 12, 16, 12, f);
      detail::sample_grid(s16, r, c, 12, 16, 24, f);
    }
  }
  return {DenseFeatureMap(std::move(coarse), FeatureStride::coarse14),
          DenseFeatureMap(std::move(fine), FeatureStride::fine1)};
}

}  // namespace dinovo

#endif  // DINOVO_DESCRIPTOR_HPP
