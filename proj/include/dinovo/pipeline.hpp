#ifndef DINOVO_PIPELINE_HPP
#define DINOVO_PIPELINE_HPP

#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dinovo/descriptor.hpp"
#include "dinovo/detector.hpp"
#include "dinovo/error.hpp"
#include "dinovo/fmap.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/image.hpp"
#include "dinovo/manifest.hpp"
#include "dinovo/matcher.hpp"
#include "dinovo/matcher_io.hpp"
#include "dinovo/pose_solver.hpp"
#include "dinovo/trajectory.hpp"

namespace dinovo {

enum class ScaleSource { ground_truth, unit };
enum class DescriptorProvider { classical, file };
enum class MatcherBackend { learned, mutual_nn, tracks };

struct PipelineConfig {
  double keyframe_threshold = 24.0;  ///< px; a frame becomes a keyframe when mean displacement exceeds this
  int stride = 2;
  ScaleSource scale_source = ScaleSource::ground_truth;
  double min_parallax = 0.5;  ///< px; below this the relative motion is taken as identity
  bool cheirality_weighted = true;
  int min_matches = 8;
  int consensus_iterations = 0;     ///< > 0 zeroes the weights of consensus outliers before solving
  double consensus_threshold = 1.0;  ///< px, Sampson distance
  std::uint64_t consensus_seed = 0;

  DetectorConfig detector;

  DescriptorProvider provider = DescriptorProvider::classical;
  std::filesystem::path fusion_weights;  ///< FMAP (192 x 449 x 1); empty -> seeded random projection
  std::uint64_t fusion_seed = 0;
  bool normalize_descriptors = false;

  MatcherBackend backend = MatcherBackend::mutual_nn;
  double match_threshold = 0.2;  ///< learned backend: minimum assignment probability
  double min_similarity = 0.0;   ///< mutual-NN backend: minimum cosine similarity
  double match_radius = 0.0;     ///< mutual-NN backend: max pixel distance, 0 disables
  std::filesystem::path matcher_weights;

  void validate() const {
    if (!(keyframe_threshold > 0.0)) throw InvalidArgument("config: keyframe_threshold must be > 0");
    if (stride < 1) throw InvalidArgument("config: stride must be >= 1");
    if (!(min_parallax >= 0.0)) throw InvalidArgument("config: min_parallax must be >= 0");
    if (min_matches < 8) throw InvalidArgument("config: min_matches must be >= 8");
    if (consensus_iterations < 0) throw InvalidArgument("config: consensus.iterations must be >= 0");
    if (!(consensus_threshold > 0.0)) throw InvalidArgument("config: consensus.threshold must be > 0");
    if (!(match_threshold >= 0.0 && match_threshold <= 1.0)) {
      throw InvalidArgument("config: matcher.threshold must lie in [0, 1]");
    }
    if (!(min_similarity >= -1.0 && min_similarity <= 1.0)) {
      throw InvalidArgument("config: matcher.min_similarity must lie in [-1, 1]");
    }
    if (!(match_radius >= 0.0)) throw InvalidArgument("config: matcher.radius must be >= 0");
    if (backend == MatcherBackend::learned && matcher_weights.empty()) {
      throw InvalidArgument("config: the learned matcher needs matcher.weights");
    }
    detector.validate();
  }
};

/// Keypoints and descriptors of one frame. In track mode the descriptors are
/// empty and `track_ids` names the scene point behind each keypoint.
struct FrameFeatures {
  std::int64_t frame_id = 0;
  double timestamp = 0.0;
  DescriptorSet features;
  std::vector<std::int64_t> track_ids;
};

/// Arithmetic mean of the pixel displacement over matched pairs.
inline double mean_displacement(const MatchSet& m) {
  if (m.empty()) throw InvalidArgument("mean_displacement: empty match set");
  double sum = 0.0;
  for (const auto& mt : m.matches) sum += (m.keypoints_b[mt.second].pixel() - m.keypoints_a[mt.first].pixel()).norm();
  return sum / static_cast<double>(m.size());
}

/// Strict: a displacement equal to the threshold does not trigger a keyframe.
inline bool is_keyframe(double displacement, double threshold) { return displacement > threshold; }

/// Relative pose with the translation magnitude of `gt_rel`.
inline Pose scale_translation(const RelativePose& pose, const Pose& gt_rel) {
  return Pose(pose.rotation, pose.direction * gt_rel.translation().norm());
}

/// Matches keypoints carrying equal track ids, in first-frame order.
inline MatchSet match_tracks(const FrameFeatures& a, const FrameFeatures& b) {
  MatchSet m{a.features.keypoints, b.features.keypoints, {}};
  std::unordered_map<std::int64_t, int> index;
  for (std::size_t j = 0; j < b.track_ids.size(); ++j) index.emplace(b.track_ids[j], static_cast<int>(j));
  for (std::size_t i = 0; i < a.track_ids.size(); ++i) {
    const auto it = index.find(a.track_ids[i]);
    if (it != index.end()) m.matches.push_back({static_cast<int>(i), it->second, 1.0, 1.0});
  }
  return m;
}

/// Turns frames into features: detection plus description, or track files.
class FeatureExtractor {
 public:
  FeatureExtractor(PipelineConfig cfg, CameraIntrinsics intrinsics) : cfg_(std::move(cfg)), k_(intrinsics) {
    if (cfg_.backend != MatcherBackend::tracks) {
      fusion_ = cfg_.fusion_weights.empty() ? FusionWeights::random(cfg_.fusion_seed)
                                            : FusionWeights::from_tensor(read_fmap(cfg_.fusion_weights));
    }
  }

  FrameFeatures from_image(const GrayImage& img, const FeatureMaps* maps, std::int64_t id, double stamp) const {
    if (img.rows() != k_.height || img.cols() != k_.width) {
      throw InvalidArgument("frame " + std::to_string(id) + ": image size differs from the camera size");
    }
    FrameFeatures f;
    f.frame_id = id;
    f.timestamp = stamp;
    const KeypointSet kp = detect(img, cfg_.detector);
    if (maps) {
      f.features = describe(kp, *maps, fusion_, cfg_.normalize_descriptors);
    } else {
      f.features = describe(kp, provider_classical(img), fusion_, cfg_.normalize_descriptors);
    }
    return f;
  }

  FrameFeatures from_tracks(const std::vector<TrackObservation>& obs, std::int64_t id, double stamp) const {
    FrameFeatures f;
    f.frame_id = id;
    f.timestamp = stamp;
    KeypointSet kp{k_.height, k_.width, {}};
    for (const auto& o : obs) {
      kp.points.push_back({o.x, o.y, 1.0});
      f.track_ids.push_back(o.track_id);
    }
    f.features = make_descriptor_set(std::move(kp), Eigen::MatrixXd(static_cast<Eigen::Index>(obs.size()), 0));
    return f;
  }

  FrameFeatures from_entry(const FrameEntry& e, std::int64_t id) const {
    if (cfg_.backend == MatcherBackend::tracks) {
      if (!e.tracks) throw InvalidArgument("frame " + std::to_string(id) + ": track backend needs tracks=");
      return from_tracks(read_tracks(*e.tracks), id, e.timestamp);
    }
    if (e.image.empty()) throw InvalidArgument("frame " + std::to_string(id) + ": no image");
    const GrayImage img = read_pnm(e.image);
    if (cfg_.provider == DescriptorProvider::file) {
      if (!e.coarse || !e.fine) throw InvalidArgument("frame " + std::to_string(id) + ": file provider needs coarse= and fine=");
      const FeatureMaps maps = provider_file(*e.coarse, *e.fine);
      return from_image(img, &maps, id, e.timestamp);
    }
    return from_image(img, nullptr, id, e.timestamp);
  }

 private:
  PipelineConfig cfg_;
  CameraIntrinsics k_;
  FusionWeights fusion_;
};

struct StepResult {
  Pose pose;  ///< camera-to-world
  bool keyframe = false;
  bool tracked = true;
  std::size_t matches = 0;
  double displacement = 0.0;
};

/// Frame-to-keyframe odometry. Each frame is matched against the latest
/// keyframe; its pose is T_w_kf * inverse(T_cur_kf). Frames with too few
/// matches or degenerate geometry hold the previous pose, are flagged
/// untracked, and become the new keyframe.
class VisualOdometry {
 public:
  VisualOdometry(PipelineConfig cfg, CameraIntrinsics intrinsics, std::optional<MatcherWeights> weights = std::nullopt)
      : cfg_(std::move(cfg)), k_(intrinsics), weights_(std::move(weights)), trajectory_(true) {
    k_.validate();
    if (cfg_.backend == MatcherBackend::learned && !weights_) {
      throw InvalidArgument("odometry: the learned backend needs matcher weights");
    }
    if (weights_) weights_->validate();
  }

  MatchSet match(const FrameFeatures& a, const FrameFeatures& b) const {
    switch (cfg_.backend) {
      case MatcherBackend::tracks:
        return match_tracks(a, b);
      case MatcherBackend::mutual_nn:
        return match_mutual_nn(a.features, b.features, cfg_.min_similarity, cfg_.match_radius);
      case MatcherBackend::learned:
        return match_learned(a.features, b.features, *weights_, cfg_.match_threshold);
    }
    throw InvalidArgument("odometry: unknown matcher backend");
  }

  StepResult step(FrameFeatures frame, const std::optional<Pose>& gt_pose = std::nullopt) {
    if (cfg_.scale_source == ScaleSource::ground_truth && !gt_pose) {
      throw InvalidArgument("odometry: ground-truth pose missing for frame " + std::to_string(frame.frame_id));
    }
    StepResult r;
    if (!keyframe_) {
      r.keyframe = true;
      anchor(std::move(frame), Pose::identity(), gt_pose, r);
      return r;
    }
    const MatchSet m = match(*keyframe_, frame);
    r.matches = m.size();
    std::optional<Pose> rel;  // pose_cur_from_kf
    if (m.size() >= static_cast<std::size_t>(cfg_.min_matches)) {
      r.displacement = mean_displacement(m);
      if (r.displacement < cfg_.min_parallax) {
        rel = Pose::identity();
      } else {
        try {
          CorrespondenceSet c = make_correspondences(m, k_);
          if (cfg_.consensus_iterations > 0) {
            const double f = 0.5 * (k_.fx + k_.fy);
            c = consensus_filter(c, cfg_.consensus_iterations, cfg_.consensus_threshold / f,
                                 cfg_.consensus_seed + static_cast<std::uint64_t>(frame.frame_id));
          }
          const RelativePose rp = estimate_relative_pose(c, cfg_.cheirality_weighted);
          rel = cfg_.scale_source == ScaleSource::ground_truth ? scale_translation(rp, gt_pose->inverse() * *gt_keyframe_)
                                                               : rp.as_pose(1.0);
        } catch (const DegenerateGeometry&) {
        }
      }
    }
    if (!rel) {
      r.tracked = false;
      r.keyframe = true;
      anchor(std::move(frame), trajectory_.back().pose, gt_pose, r);
      return r;
    }
    const Pose pose = keyframe_pose_ * rel->inverse();
    r.keyframe = is_keyframe(r.displacement, cfg_.keyframe_threshold);
    if (r.keyframe) {
      anchor(std::move(frame), pose, gt_pose, r);
    } else {
      r.pose = pose;
      trajectory_.push_back({frame.frame_id, frame.timestamp, pose, false, true, false});
    }
    return r;
  }

  const Trajectory& trajectory() const { return trajectory_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  void anchor(FrameFeatures frame, const Pose& pose, const std::optional<Pose>& gt_pose, StepResult& r) {
    r.pose = pose;
    trajectory_.push_back({frame.frame_id, frame.timestamp, pose, true, r.tracked, false});
    keyframe_ = std::move(frame);
    keyframe_pose_ = pose;
    gt_keyframe_ = gt_pose;
  }

  PipelineConfig cfg_;
  CameraIntrinsics k_;
  std::optional<MatcherWeights> weights_;
  Trajectory trajectory_;
  std::optional<FrameFeatures> keyframe_;
  Pose keyframe_pose_;
  std::optional<Pose> gt_keyframe_;
};

struct SequenceResult {
  Trajectory trajectory;
  std::size_t untracked = 0;
};

/// Runs the odometry over every `stride`-th manifest frame. With threads > 1,
/// feature extraction of upcoming frames runs ahead of the pose updates,
/// which stay strictly ordered.
inline SequenceResult run_sequence(const SequenceManifest& manifest, const PipelineConfig& cfg, int threads = 1) {
  cfg.validate();
  manifest.validate();
  std::optional<MatcherWeights> weights;
  if (cfg.backend == MatcherBackend::learned) weights = load_matcher_weights(cfg.matcher_weights);
  const auto gt = cfg.scale_source == ScaleSource::ground_truth ? groundtruth_poses(manifest)
                                                                : std::vector<std::optional<Pose>>(manifest.size());
  const FeatureExtractor extractor(cfg, manifest.intrinsics);
  VisualOdometry vo(cfg, manifest.intrinsics, std::move(weights));

  std::vector<std::size_t> frames;
  for (std::size_t i = 0; i < manifest.size(); i += static_cast<std::size_t>(cfg.stride)) frames.push_back(i);
  auto extract = [&](std::size_t i) { return extractor.from_entry(manifest.frames[i], static_cast<std::int64_t>(i)); };

  SequenceResult out;
  std::deque<std::future<FrameFeatures>> ahead;
  std::size_t next = 0;
  const std::size_t window = threads > 1 ? static_cast<std::size_t>(threads) : 0;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    while (ahead.size() < window && next < frames.size()) {
      ahead.push_back(std::async(std::launch::async, extract, frames[next++]));
    }
    FrameFeatures f;
    if (window > 0) {
      f = ahead.front().get();
      ahead.pop_front();
    } else {
      f = extract(frames[n]);
    }
    const auto r = vo.step(std::move(f), gt[frames[n]]);
    if (!r.tracked) ++out.untracked;
  }
  out.trajectory = vo.trajectory();
  return out;
}

}  // namespace dinovo

#endif  // DINOVO_PIPELINE_HPP
