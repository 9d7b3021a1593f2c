#pragma once

#include <vector>

#include "pim/grid.hpp"
#include "pim/media.hpp"

namespace pim::metrics {

enum class MetricKind { kPsnr, kSsim, kVif };

const char* metric_name(MetricKind kind);

struct MetricGrid {
  MetricKind kind;
  MacroblockGrid<double> values;
};

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kSsimC1 = (0.01 * 255) * (0.01 * 255);
inline constexpr double kSsimC2 = (0.03 * 255) * (0.03 * 255);

/// Pixel-domain VIF constants.
struct VifConfig {
  double noise_variance = 2.0;  // σ²_N
  int scales = 4;
  int window = 256;             // centred on each macroblock, cropped at frame edges
  int moment_radius = 1;        // 3x3 local moments
  double variance_floor = 1e-10;
};

MetricGrid mb_psnr(const media::Frame& ref, const media::Frame& dist);
MetricGrid mb_ssim(const media::Frame& ref, const media::Frame& dist);
MetricGrid block_vif(const media::Frame& ref, const media::Frame& dist, const VifConfig& cfg = {});

/// Single-channel FT01 tensor view of a metric grid.
media::FeatureTensor to_tensor(const MetricGrid& grid);

namespace detail {

/// Row-major double plane.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double operator()(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& operator()(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// One octave down: [1 3 3 1]/8 blur sampled between pixel pairs, renormalised
/// over the taps that fall inside the plane.
Plane downsample(const Plane& in);

/// Per-pixel VIF numerator and denominator contributions at one scale.
void vif_terms(const Plane& ref, const Plane& dist, const VifConfig& cfg, Plane& num, Plane& den);

}  // namespace detail

}  // namespace pim::metrics
