#pragma once

#include <cstddef>
#include <vector>

#include "pim/error.hpp"

namespace pim {

inline constexpr int kMacroblockSize = 16;

/// Number of macroblock rows/cols covering `pixels` (partial blocks count).
constexpr int mb_count(int pixels) {
  return (pixels + kMacroblockSize - 1) / kMacroblockSize;
}

/// Row-major rows x cols lattice with one cell per macroblock.
template <typename T>
class MacroblockGrid {
 public:
  MacroblockGrid() = default;
  MacroblockGrid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), cells_(checked_size(rows, cols), fill) {}

  /// Grid sized for a video of the given pixel dimensions.
  static MacroblockGrid for_video(int width, int height, T fill = T{}) {
    return MacroblockGrid(mb_count(height), mb_count(width), fill);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }

  T& operator()(int r, int c) { return cells_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return cells_[static_cast<std::size_t>(r) * cols_ + c];
  }

  std::vector<T>& cells() noexcept { return cells_; }
  const std::vector<T>& cells() const noexcept { return cells_; }

  auto begin() noexcept { return cells_.begin(); }
  auto end() noexcept { return cells_.end(); }
  auto begin() const noexcept { return cells_.begin(); }
  auto end() const noexcept { return cells_.end(); }

  bool same_shape(const MacroblockGrid& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const MacroblockGrid&, const MacroblockGrid&) = default;

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw DimensionError("negative grid dimension");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> cells_;
};

}  // namespace pim
