#ifndef DINOVO_GRID_HPP
#define DINOVO_GRID_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "dinovo/error.hpp"

namespace dinovo {

/// Row-major 2-D array of scalars.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}
  Grid(int rows, int cols, std::vector<T> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw InvalidArgument("grid: value count does not match rows*cols");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  /// Replicate-border access: coordinates are clamped into the grid.
  const T& clamped(int r, int c) const {
    return (*this)(std::clamp(r, 0, rows_ - 1), std::clamp(c, 0, cols_ - 1));
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw InvalidArgument("grid: negative dimension");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace dinovo

#endif  // DINOVO_GRID_HPP
