#include "pim/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pim::metrics {
namespace {

void check_pair(const media::Frame& ref, const media::Frame& dist) {
  if (ref.width() != dist.width() || ref.height() != dist.height()) {
    throw DimensionError("reference and distorted frames differ in dimensions");
  }
  if (ref.width() <= 0 || ref.height() <= 0) throw DimensionError("empty frame");
}

struct BlockExtent {
  int x0, y0, x1, y1;
};

BlockExtent mb_extent(const media::Frame& f, int r, int c) {
  return {c * kMacroblockSize, r * kMacroblockSize,
          std::min((c + 1) * kMacroblockSize, f.width()),
          std::min((r + 1) * kMacroblockSize, f.height())};
}

detail::Plane luma_plane(const media::Frame& f) {
  detail::Plane p{f.width(), f.height(), {}};
  p.values.assign(f.y().begin(), f.y().end());
  return p;
}

// Level-s sample indices whose footprint centre lies in [lo, hi) at level 0.
std::pair<int, int> level_range(int lo, int hi, int level, int level_len) {
  const double step = std::ldexp(1.0, level);
  const int first = static_cast<int>(std::ceil(lo / step - 0.5));
  const int last = static_cast<int>(std::ceil(hi / step - 0.5));
  return {std::clamp(first, 0, level_len), std::clamp(last, 0, level_len)};
}

}  // namespace

const char* metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kPsnr: return "psnr";
    case MetricKind::kSsim: return "ssim";
    case MetricKind::kVif: return "vif";
  }
  return "?";
}

MetricGrid mb_psnr(const media::Frame& ref, const media::Frame& dist) {
  check_pair(ref, dist);
  MetricGrid out{MetricKind::kPsnr, MacroblockGrid<double>::for_video(ref.width(), ref.height())};
  for (int r = 0; r < out.values.rows(); ++r) {
    for (int c = 0; c < out.values.cols(); ++c) {
      const auto e = mb_extent(ref, r, c);
      double sse = 0.0;
      for (int y = e.y0; y < e.y1; ++y) {
        for (int x = e.x0; x < e.x1; ++x) {
          const double d = static_cast<double>(ref.luma(x, y)) - dist.luma(x, y);
          sse += d * d;
        }
      }
      const double mse = sse / ((e.x1 - e.x0) * (e.y1 - e.y0));
      out.values(r, c) =
          mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
    }
  }
  return out;
}

MetricGrid mb_ssim(const media::Frame& ref, const media::Frame& dist) {
  check_pair(ref, dist);
  MetricGrid out{MetricKind::kSsim, MacroblockGrid<double>::for_video(ref.width(), ref.height())};
  for (int r = 0; r < out.values.rows(); ++r) {
    for (int c = 0; c < out.values.cols(); ++c) {
      const auto e = mb_extent(ref, r, c);
      const double n = static_cast<double>((e.x1 - e.x0) * (e.y1 - e.y0));
      double sx = 0.0, sy = 0.0;
      for (int y = e.y0; y < e.y1; ++y) {
        for (int x = e.x0; x < e.x1; ++x) {
          sx += ref.luma(x, y);
          sy += dist.luma(x, y);
        }
      }
      const double mx = sx / n, my = sy / n;
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (int y = e.y0; y < e.y1; ++y) {
        for (int x = e.x0; x < e.x1; ++x) {
          const double dx = ref.luma(x, y) - mx, dy = dist.luma(x, y) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      }
      vx /= n;
      vy /= n;
      cxy /= n;
      out.values(r, c) = ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) /
                         ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
    }
  }
  return out;
}

namespace detail {

Plane downsample(const Plane& in) {
  static constexpr std::array<double, 4> kTaps{1.0, 3.0, 3.0, 1.0};
  const int ow = (in.width + 1) / 2, oh = (in.height + 1) / 2;
  // Horizontal pass on every row, then vertical; the renormalised product
  // kernel over a rectangle is separable.
  Plane tmp{ow, in.height, std::vector<double>(static_cast<std::size_t>(ow) * in.height)};
  for (int y = 0; y < in.height; ++y) {
    for (int i = 0; i < ow; ++i) {
      double acc = 0.0, wsum = 0.0;
      for (int a = 0; a < 4; ++a) {
        const int x = 2 * i - 1 + a;
        if (x < 0 || x >= in.width) continue;
        acc += kTaps[a] * in(x, y);
        wsum += kTaps[a];
      }
      tmp(i, y) = acc / wsum;
    }
  }
  Plane out{ow, oh, std::vector<double>(static_cast<std::size_t>(ow) * oh)};
  for (int j = 0; j < oh; ++j) {
    for (int i = 0; i < ow; ++i) {
      double acc = 0.0, wsum = 0.0;
      for (int a = 0; a < 4; ++a) {
        const int y = 2 * j - 1 + a;
        if (y < 0 || y >= in.height) continue;
        acc += kTaps[a] * tmp(i, y);
        wsum += kTaps[a];
      }
      out(i, j) = acc / wsum;
    }
  }
  return out;
}

void vif_terms(const Plane& ref, const Plane& dist, const VifConfig& cfg, Plane& num, Plane& den) {
  const int w = ref.width, h = ref.height, rad = cfg.moment_radius;
  num = Plane{w, h, std::vector<double>(ref.values.size())};
  den = Plane{w, h, std::vector<double>(ref.values.size())};
  for (int y = 0; y < h; ++y) {
    const int ya = std::max(0, y - rad), yb = std::min(h - 1, y + rad);
    for (int x = 0; x < w; ++x) {
      const int xa = std::max(0, x - rad), xb = std::min(w - 1, x + rad);
      const double n = static_cast<double>((xb - xa + 1) * (yb - ya + 1));
      double mx = 0.0, my = 0.0;
      for (int yy = ya; yy <= yb; ++yy) {
        for (int xx = xa; xx <= xb; ++xx) {
          mx += ref(xx, yy);
          my += dist(xx, yy);
        }
      }
      mx /= n;
      my /= n;
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (int yy = ya; yy <= yb; ++yy) {
        for (int xx = xa; xx <= xb; ++xx) {
          const double dx = ref(xx, yy) - mx, dy = dist(xx, yy) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      }
      vx /= n;
      vy /= n;
      cxy /= n;

      double g, sv;
      if (vx < cfg.variance_floor) {
        g = 0.0;
        sv = vy;
        vx = 0.0;
      } else {
        g = cxy / vx;
        sv = vy - g * cxy;
      }
      if (vy < cfg.variance_floor) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = vy;
        g = 0.0;
      }
      sv = std::max(sv, 0.0);
      num(x, y) = std::log2(1.0 + g * g * vx / (sv + cfg.noise_variance));
      den(x, y) = std::log2(1.0 + vx / cfg.noise_variance);
    }
  }
}

}  // namespace detail

MetricGrid block_vif(const media::Frame& ref, const media::Frame& dist, const VifConfig& cfg) {
  check_pair(ref, dist);
  if (cfg.scales < 1 || cfg.window < 1 || cfg.moment_radius < 0 || !(cfg.noise_variance > 0.0)) {
    throw ConfigError("invalid VIF configuration");
  }
  MetricGrid out{MetricKind::kVif, MacroblockGrid<double>::for_video(ref.width(), ref.height())};
  const int rows = out.values.rows(), cols = out.values.cols();
  const int half = cfg.window / 2;
  std::vector<std::pair<int, int>> xwin(cols), ywin(rows);
  for (int c = 0; c < cols; ++c) {
    const int cx = c * kMacroblockSize + kMacroblockSize / 2;
    xwin[c] = {std::max(0, cx - half), std::min(ref.width(), cx - half + cfg.window)};
  }
  for (int r = 0; r < rows; ++r) {
    const int cy = r * kMacroblockSize + kMacroblockSize / 2;
    ywin[r] = {std::max(0, cy - half), std::min(ref.height(), cy - half + cfg.window)};
  }

  MacroblockGrid<double> num_sum(rows, cols, 0.0), den_sum(rows, cols, 0.0);
  detail::Plane rp = luma_plane(ref), dp = luma_plane(dist);
  for (int s = 0; s < cfg.scales; ++s) {
    if (s > 0) {
      rp = detail::downsample(rp);
      dp = detail::downsample(dp);
    }
    detail::Plane num, den;
    detail::vif_terms(rp, dp, cfg, num, den);

    // All terms are non-negative, so plain strip sums stay exact at zero.
    std::vector<double> hnum(static_cast<std::size_t>(rp.height) * cols);
    std::vector<double> hden(hnum.size());
    for (int c = 0; c < cols; ++c) {
      const auto [xa, xb] = level_range(xwin[c].first, xwin[c].second, s, rp.width);
      for (int y = 0; y < rp.height; ++y) {
        double an = 0.0, ad = 0.0;
        for (int x = xa; x < xb; ++x) {
          an += num(x, y);
          ad += den(x, y);
        }
        hnum[static_cast<std::size_t>(y) * cols + c] = an;
        hden[static_cast<std::size_t>(y) * cols + c] = ad;
      }
    }
    for (int r = 0; r < rows; ++r) {
      const auto [ya, yb] = level_range(ywin[r].first, ywin[r].second, s, rp.height);
      for (int c = 0; c < cols; ++c) {
        double an = 0.0, ad = 0.0;
        for (int y = ya; y < yb; ++y) {
          an += hnum[static_cast<std::size_t>(y) * cols + c];
          ad += hden[static_cast<std::size_t>(y) * cols + c];
        }
        num_sum(r, c) += an;
        den_sum(r, c) += ad;
      }
    }
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double den = den_sum.cells()[i];
    out.values.cells()[i] = den == 0.0 ? 1.0 : num_sum.cells()[i] / den;
  }
  return out;
}

media::FeatureTensor to_tensor(const MetricGrid& grid) {
  media::FeatureTensor t(static_cast<std::uint32_t>(grid.values.rows()),
                         static_cast<std::uint32_t>(grid.values.cols()), 1);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    t.data[i] = static_cast<float>(grid.values.cells()[i]);
  }
  return t;
}

}  // namespace pim::metrics
