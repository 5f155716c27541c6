#ifndef DINOVO_MATCHER_HPP
#define DINOVO_MATCHER_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dinovo/descriptor.hpp"
#include "dinovo/detector.hpp"
#include "dinovo/error.hpp"

namespace dinovo {

/// y = W x + b, applied row-wise to a K x in matrix.
struct Affine {
  Eigen::MatrixXd weight;  ///< out x in
  Eigen::VectorXd bias;    ///< out

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& x) const {
    return (x * weight.transpose()).rowwise() + bias.transpose();
  }

  static Affine zeros(int out, int in) { return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)}; }

  template <typename Rng>
  static Affine random(int out, int in, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Affine a = zeros(out, in);
    for (Eigen::Index i = 0; i < a.weight.size(); ++i) a.weight.data()[i] = n(rng);
    return a;
  }
};

struct LayerNormParams {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;

  static LayerNormParams identity(int dim) { return {Eigen::VectorXd::Ones(dim), Eigen::VectorXd::Zero(dim)}; }

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mean = x.row(i).mean();
      const double var = (x.row(i).array() - mean).square().mean();
      y.row(i) = ((x.row(i).array() - mean) / std::sqrt(var + 1e-5)).matrix();
    }
    return (y.array().rowwise() * gamma.transpose().array()).rowwise() + beta.transpose().array();
  }
};

inline Eigen::MatrixXd gelu(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double log_sigmoid(double x) { return -softplus(-x); }
inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Residual update network: fc2(GELU(norm(fc1([f | m])))).
struct MessageMlp {
  Affine fc1;
  LayerNormParams norm;
  Affine fc2;

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& f, const Eigen::MatrixXd& m) const {
    Eigen::MatrixXd cat(f.rows(), f.cols() + m.cols());
    cat << f, m;
    return fc2(gelu(norm(fc1(cat))));
  }
};

struct SelfAttentionBlock {
  Affine q, k, v, out;
  MessageMlp mlp;
};

/// Cross attention uses one shared projection for queries and keys so that
/// the score matrix of one direction is the transpose of the other.
struct CrossAttentionBlock {
  Affine qk, v, out;
  MessageMlp mlp;
};

struct MatcherLayer {
  SelfAttentionBlock self;
  CrossAttentionBlock cross;
};

/// All learnable parameters of the attention matcher.
struct MatcherWeights {
  int heads = 3;
  int head_dim = 64;
  Eigen::MatrixXd rotary_frequencies;  ///< (head_dim/2) x 2, angle = freq . p
  std::vector<MatcherLayer> layers;
  Affine similarity;         ///< D -> D, applied to both images
  Affine matchability;       ///< D -> 1
  Affine confidence_hidden;  ///< 2D -> hidden
  Affine confidence_out;     ///< hidden -> 1

  int dim() const { return heads * head_dim; }

  void validate() const {
    const int d = dim();
    auto check = [](const Affine& a, int out, int in, const char* what) {
      if (a.out() != out || a.in() != in || a.bias.size() != out) {
        throw InvalidArgument(std::string("matcher weights: bad shape for ") + what);
      }
      if (!a.weight.allFinite() || !a.bias.allFinite()) {
        throw InvalidArgument(std::string("matcher weights: non-finite ") + what);
      }
    };
    auto check_mlp = [&](const MessageMlp& m) {
      check(m.fc1, 2 * d, 2 * d, "mlp.fc1");
      check(m.fc2, d, 2 * d, "mlp.fc2");
      if (m.norm.gamma.size() != 2 * d || m.norm.beta.size() != 2 * d) {
        throw InvalidArgument("matcher weights: bad layer norm shape");
      }
    };
    if (heads < 1 || head_dim < 2 || head_dim % 2 != 0) throw InvalidArgument("matcher weights: bad head layout");
    if (rotary_frequencies.rows() != head_dim / 2 || rotary_frequencies.cols() != 2 ||
        !rotary_frequencies.allFinite()) {
      throw InvalidArgument("matcher weights: bad rotary frequencies");
    }
    for (const auto& l : layers) {
      check(l.self.q, d, d, "self.q");
      check(l.self.k, d, d, "self.k");
      check(l.self.v, d, d, "self.v");
      check(l.self.out, d, d, "self.out");
      check_mlp(l.self.mlp);
      check(l.cross.qk, d, d, "cross.qk");
      check(l.cross.v, d, d, "cross.v");
      check(l.cross.out, d, d, "cross.out");
      check_mlp(l.cross.mlp);
    }
    check(similarity, d, d, "similarity");
    check(matchability, 1, d, "matchability");
    check(confidence_hidden, confidence_hidden.out(), 2 * d, "confidence.fc1");
    check(confidence_out, 1, confidence_hidden.out(), "confidence.fc2");
  }

  /// Deterministic random initialization for a given seed.
  static MatcherWeights random(std::uint64_t seed, int layers = 12, int heads = 3, int head_dim = 64,
                               int confidence_hidden = 128) {
    std::mt19937_64 rng(seed);
    MatcherWeights w;
    w.heads = heads;
    w.head_dim = head_dim;
    const int d = w.dim();
    std::normal_distribution<double> n(0.0, std::numbers::pi);
    w.rotary_frequencies.resize(head_dim / 2, 2);
    for (Eigen::Index i = 0; i < w.rotary_frequencies.size(); ++i) w.rotary_frequencies.data()[i] = n(rng);
    auto mlp = [&] {
      return MessageMlp{Affine::random(2 * d, 2 * d, rng), LayerNormParams::identity(2 * d),
                        Affine::random(d, 2 * d, rng)};
    };
    for (int l = 0; l < layers; ++l) {
      MatcherLayer layer;
      layer.self = {Affine::random(d, d, rng), Affine::random(d, d, rng), Affine::random(d, d, rng),
                    Affine::random(d, d, rng), mlp()};
      layer.cross = {Affine::random(d, d, rng), Affine::random(d, d, rng), Affine::random(d, d, rng), mlp()};
      w.layers.push_back(std::move(layer));
    }
    w.similarity = Affine::random(d, d, rng);
    w.matchability = Affine::random(1, d, rng);
    w.confidence_hidden = Affine::random(confidence_hidden, 2 * d, rng);
    w.confidence_out = Affine::random(1, confidence_hidden, rng);
    return w;
  }
};

// ---------------------------------------------------------------------------
// Rotary positional encoding

/// Explicit block-diagonal rotation R_P(delta): pair m of the vector is
/// rotated by angle freq_m . delta.
inline Eigen::MatrixXd rotary_matrix(const Eigen::Vector2d& delta, const Eigen::MatrixXd& frequencies) {
  const Eigen::Index pairs = frequencies.rows();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2 * pairs, 2 * pairs);
  for (Eigen::Index m = 0; m < pairs; ++m) {
    const double a = frequencies.row(m).dot(delta);
    r(2 * m, 2 * m) = std::cos(a);
    r(2 * m, 2 * m + 1) = -std::sin(a);
    r(2 * m + 1, 2 * m) = std::sin(a);
    r(2 * m + 1, 2 * m + 1) = std::cos(a);
  }
  return r;
}

/// Applies R_P(p_i) to row i of `x` (K x head_dim) in place, as paired rotations.
/// Since R_P(a)^T R_P(b) = R_P(b - a), q_i^T R_P(p_j - p_i) k_j equals the dot
/// product of the individually rotated rows.
inline void apply_rotary(Eigen::Ref<Eigen::MatrixXd> x, const Eigen::MatrixXd& positions,
                         const Eigen::MatrixXd& frequencies) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd angles = frequencies * positions.row(i).transpose();
    for (Eigen::Index m = 0; m < angles.size(); ++m) {
      const double c = std::cos(angles(m)), s = std::sin(angles(m));
      const double a = x(i, 2 * m), b = x(i, 2 * m + 1);
      x(i, 2 * m) = c * a - s * b;
      x(i, 2 * m + 1) = s * a + c * b;
    }
  }
}

// ---------------------------------------------------------------------------
// Attention

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    p.row(i) = (s.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

/// Per-head self-attention scores a_ij = q_i^T R_P(p_j - p_i) k_j / sqrt(d_h).
inline std::vector<Eigen::MatrixXd> self_attention_scores(const SelfAttentionBlock& block, const MatcherWeights& w,
                                                          const Eigen::MatrixXd& desc,
                                                          const Eigen::MatrixXd& positions) {
  const Eigen::MatrixXd q = block.q(desc), k = block.k(desc);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim));
  std::vector<Eigen::MatrixXd> out;
  for (int h = 0; h < w.heads; ++h) {
    Eigen::MatrixXd qh = q.middleCols(h * w.head_dim, w.head_dim);
    Eigen::MatrixXd kh = k.middleCols(h * w.head_dim, w.head_dim);
    apply_rotary(qh, positions, w.rotary_frequencies);
    apply_rotary(kh, positions, w.rotary_frequencies);
    out.push_back(scale * qh * kh.transpose());
  }
  return out;
}

/// Per-head cross-attention scores a_ij = k_i^T k_j / sqrt(d_h) from target
/// to source. cross_attention_scores(b, a) is the transpose of (a, b).
inline std::vector<Eigen::MatrixXd> cross_attention_scores(const CrossAttentionBlock& block, const MatcherWeights& w,
                                                           const Eigen::MatrixXd& target,
                                                           const Eigen::MatrixXd& source) {
  const Eigen::MatrixXd kt = block.qk(target), ks = block.qk(source);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim));
  std::vector<Eigen::MatrixXd> out;
  for (int h = 0; h < w.heads; ++h) {
    out.push_back(scale * kt.middleCols(h * w.head_dim, w.head_dim) *
                  ks.middleCols(h * w.head_dim, w.head_dim).transpose());
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd aggregate(const std::vector<Eigen::MatrixXd>& scores, const Eigen::MatrixXd& values,
                                 int head_dim, bool transpose_scores) {
  Eigen::MatrixXd m(transpose_scores ? scores.front().cols() : scores.front().rows(), values.cols());
  for (std::size_t h = 0; h < scores.size(); ++h) {
    const Eigen::MatrixXd a = softmax_rows(transpose_scores ? Eigen::MatrixXd(scores[h].transpose()) : scores[h]);
    m.middleCols(static_cast<Eigen::Index>(h) * head_dim, head_dim) =
        a * values.middleCols(static_cast<Eigen::Index>(h) * head_dim, head_dim);
  }
  return m;
}

}  // namespace detail

/// f <- f + MLP([f | m]) with m the rotary self-attention message.
inline Eigen::MatrixXd self_update(const SelfAttentionBlock& block, const MatcherWeights& w,
                                   const Eigen::MatrixXd& desc, const Eigen::MatrixXd& positions) {
  const auto scores = self_attention_scores(block, w, desc, positions);
  const Eigen::MatrixXd msg = block.out(detail::aggregate(scores, block.v(desc), w.head_dim, false));
  return desc + block.mlp(desc, msg);
}

/// Bidirectional cross update sharing one score matrix per head.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> cross_update(const CrossAttentionBlock& block,
                                                                 const MatcherWeights& w, const Eigen::MatrixXd& a,
                                                                 const Eigen::MatrixXd& b) {
  const auto scores = cross_attention_scores(block, w, a, b);
  const Eigen::MatrixXd msg_a = block.out(detail::aggregate(scores, block.v(b), w.head_dim, false));
  const Eigen::MatrixXd msg_b = block.out(detail::aggregate(scores, block.v(a), w.head_dim, true));
  return {a + block.mlp(a, msg_a), b + block.mlp(b, msg_b)};
}

/// Descriptors after every layer (index 0 = after the first layer).
inline std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> attend_layers(const DescriptorSet& a,
                                                                              const DescriptorSet& b,
                                                                              const MatcherWeights& w) {
  w.validate();
  if (a.dim() != w.dim() || b.dim() != w.dim()) throw InvalidArgument("attend: descriptor dimension mismatch");
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> trace;
  Eigen::MatrixXd fa = a.descriptors, fb = b.descriptors;
  for (const auto& layer : w.layers) {
    fa = self_update(layer.self, w, fa, a.positions);
    fb = self_update(layer.self, w, fb, b.positions);
    std::tie(fa, fb) = cross_update(layer.cross, w, fa, fb);
    trace.emplace_back(fa, fb);
  }
  return trace;
}

/// Runs all L self/cross layers and returns the updated descriptor sets.
inline std::pair<DescriptorSet, DescriptorSet> attend(const DescriptorSet& a, const DescriptorSet& b,
                                                      const MatcherWeights& w) {
  auto trace = attend_layers(a, b, w);
  DescriptorSet oa = a, ob = b;
  if (!trace.empty()) {
    oa.descriptors = std::move(trace.back().first);
    ob.descriptors = std::move(trace.back().second);
  }
  return {std::move(oa), std::move(ob)};
}

// ---------------------------------------------------------------------------
// Soft partial assignment

struct AssignmentMatrix {
  Eigen::MatrixXd probabilities;  ///< K_a x K_b, P_ij in [0, 1]
  Eigen::VectorXd matchability_a;
  Eigen::VectorXd matchability_b;
};

/// P_ij = sigma_i sigma_j softmax over i of S(:, j) times softmax over j of
/// S(i, :), evaluated in the log domain.
inline AssignmentMatrix assignment_from_scores(const Eigen::MatrixXd& s, const Eigen::VectorXd& sigma_a,
                                               const Eigen::VectorXd& sigma_b) {
  if (sigma_a.size() != s.rows() || sigma_b.size() != s.cols()) {
    throw InvalidArgument("assignment: matchability size mismatch");
  }
  AssignmentMatrix out{Eigen::MatrixXd::Zero(s.rows(), s.cols()), sigma_a, sigma_b};
  if (s.size() == 0) return out;
  Eigen::VectorXd row_lse(s.rows()), col_lse(s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    row_lse(i) = mx + std::log((s.row(i).array() - mx).exp().sum());
  }
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const double mx = s.col(j).maxCoeff();
    col_lse(j) = mx + std::log((s.col(j).array() - mx).exp().sum());
  }
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double log_p = std::log(sigma_a(i)) + std::log(sigma_b(j)) + (s(i, j) - col_lse(j)) + (s(i, j) - row_lse(i));
      out.probabilities(i, j) = std::exp(log_p);
    }
  }
  return out;
}

inline Eigen::MatrixXd similarity_scores(const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb,
                                         const MatcherWeights& w) {
  const double scale = std::pow(static_cast<double>(w.dim()), -0.25);
  return (scale * w.similarity(fa)) * (scale * w.similarity(fb)).transpose();
}

inline Eigen::VectorXd matchability(const Eigen::MatrixXd& f, const MatcherWeights& w) {
  return w.matchability(f).col(0).unaryExpr([](double z) { return sigmoid(z); });
}

inline AssignmentMatrix assignment(const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb, const MatcherWeights& w) {
  return assignment_from_scores(similarity_scores(fa, fb, w), matchability(fa, w), matchability(fb, w));
}

inline AssignmentMatrix assignment(const DescriptorSet& a, const DescriptorSet& b, const MatcherWeights& w) {
  return assignment(a.descriptors, b.descriptors, w);
}

// ---------------------------------------------------------------------------
// Correspondences

struct Match {
  int first = 0;   ///< index into the first keypoint set
  int second = 0;  ///< index into the second keypoint set
  double probability = 0.0;
  double confidence = 1.0;  ///< weight for the eight-point system
};

struct MatchSet {
  KeypointSet keypoints_a;
  KeypointSet keypoints_b;
  std::vector<Match> matches;

  std::size_t size() const { return matches.size(); }
  bool empty() const { return matches.empty(); }
};

/// w_ij = softplus(fc2(ReLU(fc1([f_i | f_j])))).
inline double match_confidence(const Eigen::VectorXd& fi, const Eigen::VectorXd& fj, const MatcherWeights& w) {
  Eigen::MatrixXd cat(1, fi.size() + fj.size());
  cat << fi.transpose(), fj.transpose();
  const Eigen::MatrixXd hidden = w.confidence_hidden(cat).cwiseMax(0.0);
  return softplus(w.confidence_out(hidden)(0, 0));
}

namespace detail {

/// Index pairs (i, j) where j is the first row maximum of i and i the first
/// column maximum of j.
inline std::vector<std::pair<int, int>> mutual_argmax(const Eigen::MatrixXd& m) {
  std::vector<std::pair<int, int>> out;
  if (m.size() == 0) return out;
  std::vector<Eigen::Index> col_best(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j).maxCoeff(&col_best[j]);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index j = 0;
    m.row(i).maxCoeff(&j);
    if (col_best[j] == i) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  }
  return out;
}

}  // namespace detail

/// Mutual-argmax partial matching on P with P_ij >= threshold; each pair is
/// weighted by the confidence head on the final-layer descriptors.
inline MatchSet extract_matches(const AssignmentMatrix& p, const DescriptorSet& a, const DescriptorSet& b,
                                const MatcherWeights& w, double threshold) {
  if (p.probabilities.rows() != static_cast<Eigen::Index>(a.size()) ||
      p.probabilities.cols() != static_cast<Eigen::Index>(b.size())) {
    throw InvalidArgument("extract_matches: assignment shape differs from descriptor counts");
  }
  MatchSet out{a.keypoints, b.keypoints, {}};
  for (const auto& [i, j] : detail::mutual_argmax(p.probabilities)) {
    const double pij = p.probabilities(i, j);
    if (pij < threshold) continue;
    out.matches.push_back(
        {i, j, pij, match_confidence(a.descriptors.row(i).transpose(), b.descriptors.row(j).transpose(), w)});
  }
  return out;
}

/// attend -> assignment -> extract_matches.
inline MatchSet match_learned(const DescriptorSet& a, const DescriptorSet& b, const MatcherWeights& w,
                              double threshold) {
  const auto [fa, fb] = attend(a, b, w);
  return extract_matches(assignment(fa, fb, w), fa, fb, w, threshold);
}

/// Mutual nearest neighbours under cosine similarity. With `max_pixel_distance`
/// > 0, pairs farther apart than that (in pixels) are never candidates.
/// Confidences are 1, probabilities hold the cosine similarity.
inline MatchSet match_mutual_nn(const DescriptorSet& a, const DescriptorSet& b, double threshold,
                                double max_pixel_distance = 0.0) {
  if (a.size() > 0 && b.size() > 0 && a.dim() != b.dim()) {
    throw InvalidArgument("match_mutual_nn: descriptor dimension mismatch");
  }
  MatchSet out{a.keypoints, b.keypoints, {}};
  if (a.size() == 0 || b.size() == 0) return out;
  auto unit = [](Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (n > 0.0) m.row(i) /= n;
    }
    return m;
  };
  Eigen::MatrixXd sim = unit(a.descriptors) * unit(b.descriptors).transpose();
  if (max_pixel_distance > 0.0) {
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if ((a.keypoints[i].pixel() - b.keypoints[j].pixel()).norm() > max_pixel_distance) {
          sim(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
    }
  }
  for (const auto& [i, j] : detail::mutual_argmax(sim)) {
    if (sim(i, j) >= threshold) out.matches.push_back({i, j, sim(i, j), 1.0});
  }
  return out;
}

}  // namespace dinovo

#endif  // DINOVO_MATCHER_HPP
