#include "pim/gridmap.hpp"

#include <algorithm>
#include <cmath>

namespace pim::gridmap {
namespace {

struct Span1D {
  int first = 0;                // first map index touched
  std::vector<double> weights;  // coverage of map indices first, first+1, ...
};

// Map-axis coverage of each macroblock along one axis.
std::vector<Span1D> axis_coverage(int map_len, int video_len) {
  const int blocks = mb_count(video_len);
  const double scale = static_cast<double>(map_len) / video_len;
  std::vector<Span1D> spans(blocks);
  for (int b = 0; b < blocks; ++b) {
    const double lo = b * kMacroblockSize * scale;
    const double hi = std::min(b * kMacroblockSize + kMacroblockSize, video_len) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(map_len - 1, static_cast<int>(std::ceil(hi)) - 1);
    Span1D& s = spans[b];
    s.first = first;
    for (int i = first; i <= last; ++i) {
      const double overlap = std::min<double>(i + 1, hi) - std::max<double>(i, lo);
      s.weights.push_back(std::max(0.0, overlap));
    }
  }
  return spans;
}

}  // namespace

MacroblockGrid<double> pool_dense(std::span<const double> values, int map_w, int map_h,
                                  int video_w, int video_h) {
  if (map_w <= 0 || map_h <= 0 || video_w <= 0 || video_h <= 0) {
    throw DimensionError("pooling requires positive map and video dimensions");
  }
  if (values.size() != static_cast<std::size_t>(map_w) * map_h) {
    throw DimensionError("dense map size does not match its dimensions");
  }
  const auto xs = axis_coverage(map_w, video_w);
  const auto ys = axis_coverage(map_h, video_h);
  MacroblockGrid<double> grid(static_cast<int>(ys.size()), static_cast<int>(xs.size()));
  for (int r = 0; r < grid.rows(); ++r) {
    const Span1D& sy = ys[r];
    for (int c = 0; c < grid.cols(); ++c) {
      const Span1D& sx = xs[c];
      double acc = 0.0, area = 0.0;
      for (std::size_t j = 0; j < sy.weights.size(); ++j) {
        const double* row = values.data() + static_cast<std::size_t>(sy.first + j) * map_w + sx.first;
        double row_acc = 0.0, row_w = 0.0;
        for (std::size_t i = 0; i < sx.weights.size(); ++i) {
          row_acc += sx.weights[i] * row[i];
          row_w += sx.weights[i];
        }
        acc += sy.weights[j] * row_acc;
        area += sy.weights[j] * row_w;
      }
      grid(r, c) = area > 0.0 ? acc / area : 0.0;
    }
  }
  return grid;
}

MacroblockGrid<double> pool_to_grid(const media::ImportanceMap& map, int video_w, int video_h) {
  if (map.width() <= 0 || map.height() <= 0) throw DimensionError("empty importance map");
  std::vector<double> dense(map.values().begin(), map.values().end());
  auto grid = pool_dense(dense, map.width(), map.height(), video_w, video_h);
  for (double& v : grid) v = std::clamp(v, 0.0, 255.0);
  return grid;
}

std::uint8_t quantize_class(double value) {
  if (value < kLowBoundary) return 0;
  if (value < kHighBoundary) return 1;
  return 2;
}

ClassGrid quantize_classes(const MacroblockGrid<double>& grid) {
  ClassGrid out(grid.rows(), grid.cols());
  std::transform(grid.begin(), grid.end(), out.begin(), quantize_class);
  return out;
}

ImportanceGrid classes_to_importance(const ClassGrid& classes) {
  ImportanceGrid out(classes.rows(), classes.cols());
  std::transform(classes.begin(), classes.end(), out.begin(), [](std::uint8_t k) {
    if (k >= kNumClasses) throw RangeError("class label out of range");
    return kClassImportance[k];
  });
  return out;
}

media::ImportanceMap average_maps(std::span<const media::ImportanceMap> maps) {
  if (maps.empty()) throw DimensionError("average_maps needs at least one map");
  const int w = maps.front().width(), h = maps.front().height();
  for (const auto& m : maps) {
    if (m.width() != w || m.height() != h) throw DimensionError("maps differ in dimensions");
  }
  const std::uint64_t n = maps.size();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t sum = 0;
    for (const auto& m : maps) sum += m.values()[i];
    // floor(sum/n + 1/2) in exact integer arithmetic
    out[i] = static_cast<std::uint8_t>((2 * sum + n) / (2 * n));
  }
  return media::ImportanceMap(w, h, std::move(out));
}

}  // namespace pim::gridmap
