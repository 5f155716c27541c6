#ifndef DINOVO_FMAP_HPP
#define DINOVO_FMAP_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dinovo/error.hpp"

// FMAP binary container:
//   bytes 0..3   "FMAP"
//   u32 LE       version (= 1)
//   u32 LE       rows (H_grid)
//   u32 LE       cols (W_grid)
//   u32 LE       channels (C)
//   f32 LE       rows*cols*channels values, row-major, channel-last

namespace dinovo {

struct Tensor3f {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t channels = 0;
  std::vector<float> values;

  std::size_t index(std::uint32_t r, std::uint32_t c, std::uint32_t ch = 0) const {
    return (static_cast<std::size_t>(r) * cols + c) * channels + ch;
  }
  float& at(std::uint32_t r, std::uint32_t c, std::uint32_t ch = 0) { return values[index(r, c, ch)]; }
  float at(std::uint32_t r, std::uint32_t c, std::uint32_t ch = 0) const { return values[index(r, c, ch)]; }

  friend bool operator==(const Tensor3f&, const Tensor3f&) = default;
};

inline constexpr std::uint32_t kFmapVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_fmap(const std::filesystem::path& path, const Tensor3f& t) {
  if (t.values.size() != static_cast<std::size_t>(t.rows) * t.cols * t.channels) {
    throw InvalidArgument("fmap: value count does not match shape");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("fmap: cannot write " + path.string());
  out.write("FMAP", 4);
  detail::put_u32(out, kFmapVersion);
  detail::put_u32(out, t.rows);
  detail::put_u32(out, t.cols);
  detail::put_u32(out, t.channels);
  std::vector<unsigned char> raw(t.values.size() * 4);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(t.values[i]);
    raw[4 * i + 0] = static_cast<unsigned char>(bits);
    raw[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
    raw[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
    raw[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("fmap: write failed for " + path.string());
}

/// Reads an FMAP file. Non-finite values are rejected.
inline Tensor3f read_fmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("fmap: cannot open " + path.string());
  std::array<unsigned char, 20> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size()) || std::memcmp(header.data(), "FMAP", 4) != 0) {
    throw FormatError("fmap: bad magic in " + path.string());
  }
  if (detail::get_u32(header.data() + 4) != kFmapVersion) throw FormatError("fmap: unsupported version");
  Tensor3f t;
  t.rows = detail::get_u32(header.data() + 8);
  t.cols = detail::get_u32(header.data() + 12);
  t.channels = detail::get_u32(header.data() + 16);
  const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols * t.channels;
  std::vector<unsigned char> raw(n * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError("fmap: truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("fmap: trailing bytes after payload");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.values[i] = std::bit_cast<float>(detail::get_u32(raw.data() + 4 * i));
    if (!std::isfinite(t.values[i])) throw FormatError("fmap: non-finite value in " + path.string());
  }
  return t;
}

}  // namespace dinovo

#endif  // DINOVO_FMAP_HPP
