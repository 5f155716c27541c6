#ifndef DINOVO_MATCHER_IO_HPP
#define DINOVO_MATCHER_IO_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dinovo/error.hpp"
#include "dinovo/fmap.hpp"
#include "dinovo/matcher.hpp"

// Matcher weight manifest: a text file of `key value` lines.
//
//   # comment
//   layers 12
//   heads 3
//   head_dim 64
//   confidence_hidden 128
//   tensor <name> <path relative to the manifest>
//
// Affine tensors are FMAP files with rows = out, cols = in + 1 (last column
// is the bias), channels = 1. Layer norms are 2 x dim (gamma, beta). The
// rotary frequencies are (head_dim/2) x 2. Tensor names:
//
//   rotary.freq
//   layer{n}.self.{q,k,v,out}          layer{n}.cross.{qk,v,out}
//   layer{n}.self.mlp.{fc1,norm,fc2}   layer{n}.cross.mlp.{fc1,norm,fc2}
//   head.similarity  head.matchability  head.confidence.fc1  head.confidence.fc2

namespace dinovo {

namespace detail {

template <typename Visitor>
void visit_parameters(MatcherWeights& w, Visitor&& visit) {
  visit("rotary.freq", w.rotary_frequencies);
  for (std::size_t n = 0; n < w.layers.size(); ++n) {
    const std::string p = "layer" + std::to_string(n) + ".";
    auto& s = w.layers[n].self;
    auto& c = w.layers[n].cross;
    visit(p + "self.q", s.q);
    visit(p + "self.k", s.k);
    visit(p + "self.v", s.v);
    visit(p + "self.out", s.out);
    visit(p + "self.mlp.fc1", s.mlp.fc1);
    visit(p + "self.mlp.norm", s.mlp.norm);
    visit(p + "self.mlp.fc2", s.mlp.fc2);
    visit(p + "cross.qk", c.qk);
    visit(p + "cross.v", c.v);
    visit(p + "cross.out", c.out);
    visit(p + "cross.mlp.fc1", c.mlp.fc1);
    visit(p + "cross.mlp.norm", c.mlp.norm);
    visit(p + "cross.mlp.fc2", c.mlp.fc2);
  }
  visit("head.similarity", w.similarity);
  visit("head.matchability", w.matchability);
  visit("head.confidence.fc1", w.confidence_hidden);
  visit("head.confidence.fc2", w.confidence_out);
}

inline Tensor3f to_tensor(const Affine& a) {
  Tensor3f t{static_cast<std::uint32_t>(a.out()), static_cast<std::uint32_t>(a.in() + 1), 1, {}};
  t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
  for (int r = 0; r < a.out(); ++r) {
    for (int c = 0; c < a.in(); ++c) t.at(r, c) = static_cast<float>(a.weight(r, c));
    t.at(r, a.in()) = static_cast<float>(a.bias(r));
  }
  return t;
}

inline Tensor3f to_tensor(const LayerNormParams& n) {
  Tensor3f t{2, static_cast<std::uint32_t>(n.gamma.size()), 1, {}};
  t.values.resize(2 * n.gamma.size());
  for (Eigen::Index i = 0; i < n.gamma.size(); ++i) {
    t.at(0, static_cast<std::uint32_t>(i)) = static_cast<float>(n.gamma(i));
    t.at(1, static_cast<std::uint32_t>(i)) = static_cast<float>(n.beta(i));
  }
  return t;
}

inline Tensor3f to_tensor(const Eigen::MatrixXd& m) {
  Tensor3f t{static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), 1, {}};
  t.values.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t.at(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)) = static_cast<float>(m(r, c));
    }
  }
  return t;
}

inline void from_tensor(const Tensor3f& t, Eigen::MatrixXd& m) {
  if (t.channels != 1) throw FormatError("matcher weights: tensors must have one channel");
  m.resize(t.rows, t.cols);
  for (std::uint32_t r = 0; r < t.rows; ++r) {
    for (std::uint32_t c = 0; c < t.cols; ++c) m(r, c) = t.at(r, c);
  }
}

inline void from_tensor(const Tensor3f& t, Affine& a) {
  Eigen::MatrixXd m;
  from_tensor(t, m);
  if (m.cols() < 2) throw FormatError("matcher weights: affine tensor needs a bias column");
  a.weight = m.leftCols(m.cols() - 1);
  a.bias = m.col(m.cols() - 1);
}

inline void from_tensor(const Tensor3f& t, LayerNormParams& n) {
  Eigen::MatrixXd m;
  from_tensor(t, m);
  if (m.rows() != 2) throw FormatError("matcher weights: layer norm tensor must have 2 rows");
  n.gamma = m.row(0).transpose();
  n.beta = m.row(1).transpose();
}

}  // namespace detail

/// Writes one FMAP per tensor into `dir` plus `dir/matcher.txt`; returns the
/// manifest path.
inline std::filesystem::path save_matcher_weights(const std::filesystem::path& dir, MatcherWeights w) {
  w.validate();
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "matcher.txt";
  std::ofstream out(manifest);
  if (!out) throw FormatError("matcher weights: cannot write " + manifest.string());
  out << "# dinovo matcher weights\n"
      << "layers " << w.layers.size() << "\nheads " << w.heads << "\nhead_dim " << w.head_dim
      << "\nconfidence_hidden " << w.confidence_hidden.out() << "\n";
  detail::visit_parameters(w, [&](const std::string& name, const auto& param) {
    const std::string file = name + ".fmap";
    write_fmap(dir / file, detail::to_tensor(param));
    out << "tensor " << name << ' ' << file << '\n';
  });
  if (!out) throw FormatError("matcher weights: write failed for " + manifest.string());
  return manifest;
}

inline MatcherWeights load_matcher_weights(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("matcher weights: cannot open " + manifest.string());
  std::map<std::string, std::string> header;
  std::map<std::string, std::filesystem::path> tensors;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key.front() == '#') continue;
    if (key == "tensor") {
      std::string name, file;
      if (!(ls >> name >> file)) throw FormatError("matcher weights: malformed tensor line: " + line);
      tensors[name] = manifest.parent_path() / file;
    } else {
      std::string value;
      if (!(ls >> value)) throw FormatError("matcher weights: missing value for " + key);
      header[key] = value;
    }
  }
  auto get_int = [&](const std::string& key) {
    const auto it = header.find(key);
    if (it == header.end()) throw FormatError("matcher weights: missing header field " + key);
    return std::stoi(it->second);
  };
  MatcherWeights w;
  w.heads = get_int("heads");
  w.head_dim = get_int("head_dim");
  w.layers.resize(static_cast<std::size_t>(get_int("layers")));
  detail::visit_parameters(w, [&](const std::string& name, auto& param) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("matcher weights: missing tensor " + name);
    detail::from_tensor(read_fmap(it->second), param);
  });
  try {
    w.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return w;
}

}  // namespace dinovo

#endif  // DINOVO_MATCHER_IO_HPP
