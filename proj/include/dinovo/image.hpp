#ifndef DINOVO_IMAGE_HPP
#define DINOVO_IMAGE_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dinovo/error.hpp"
#include "dinovo/grid.hpp"

namespace dinovo {

/// Single-channel image with intensities in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;

  explicit GrayImage(Grid<double> pixels) : pixels_(std::move(pixels)) {
    for (double v : pixels_.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("image: intensity outside [0, 1]");
    }
  }

  GrayImage(int rows, int cols, double fill = 0.0) : GrayImage(Grid<double>(rows, cols, fill)) {}

  int rows() const { return pixels_.rows(); }
  int cols() const { return pixels_.cols(); }
  double operator()(int r, int c) const { return pixels_(r, c); }
  const Grid<double>& pixels() const { return pixels_; }

 private:
  Grid<double> pixels_;
};

/// Rec.601 luma.
inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

namespace detail {

inline std::string pnm_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> tok;
  return tok;
}

}  // namespace detail

/// Reads an 8-bit binary PGM (P5) or PPM (P6). Color is reduced to luma.
inline GrayImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("pnm: cannot open " + path.string());
  const std::string magic = detail::pnm_token(in);
  if (magic != "P5" && magic != "P6") throw FormatError("pnm: unsupported magic in " + path.string());
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(detail::pnm_token(in));
    height = std::stoi(detail::pnm_token(in));
    maxval = std::stoi(detail::pnm_token(in));
  } catch (const std::exception&) {
    throw FormatError("pnm: malformed header in " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw FormatError("pnm: only 8-bit images are supported: " + path.string());
  }
  in.get();  // single whitespace before raster
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError("pnm: truncated raster");

  Grid<double> g(height, width);
  const double scale = 1.0 / maxval;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * width + c) * channels;
      g(r, c) = channels == 1 ? raw[i] * scale : luma(raw[i] * scale, raw[i + 1] * scale, raw[i + 2] * scale);
      g(r, c) = std::min(g(r, c), 1.0);
    }
  }
  return GrayImage(std::move(g));
}

/// Writes an 8-bit binary PGM, rounding intensities to the nearest level.
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("pgm: cannot write " + path.string());
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.rows()) * img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      raw[static_cast<std::size_t>(r) * img.cols() + c] =
          static_cast<unsigned char>(std::lround(std::clamp(img(r, c), 0.0, 1.0) * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("pgm: write failed for " + path.string());
}

}  // namespace dinovo

#endif  // DINOVO_IMAGE_HPP
