#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pim/grid.hpp"
#include "pim/media.hpp"

namespace pim::gridmap {

using ClassGrid = MacroblockGrid<std::uint8_t>;
using ImportanceGrid = MacroblockGrid<std::uint8_t>;

inline constexpr int kNumClasses = 3;
inline constexpr std::uint8_t kClassImportance[kNumClasses] = {0, 128, 255};
inline constexpr double kLowBoundary = 64.0;
inline constexpr double kHighBoundary = 191.5;

/// Area-weighted mean pooling of a dense map_w x map_h surface onto the
/// macroblock grid of a video_w x video_h video. The map is assumed to cover
/// the same field of view as the video; each cell averages exactly the map
/// area its macroblock covers (partial boundary blocks use their real extent).
MacroblockGrid<double> pool_dense(std::span<const double> values, int map_w, int map_h,
                                  int video_w, int video_h);

MacroblockGrid<double> pool_to_grid(const media::ImportanceMap& map, int video_w, int video_h);

ClassGrid quantize_classes(const MacroblockGrid<double>& grid);
std::uint8_t quantize_class(double value);

ImportanceGrid classes_to_importance(const ClassGrid& classes);

/// Per-pixel mean of equally sized maps, rounded half away from zero.
media::ImportanceMap average_maps(std::span<const media::ImportanceMap> maps);

/// Round half away from zero, the single real -> integer rule used everywhere.
inline double round_half_away(double v) { return v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

}  // namespace pim::gridmap
