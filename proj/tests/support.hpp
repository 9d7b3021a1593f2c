#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pim/media.hpp"

namespace pimtest {

using pim::media::ChromaFormat;
using pim::media::Frame;
using pim::media::ImportanceMap;
using pim::media::VideoSequence;

inline std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

inline Frame random_frame(int w, int h, std::mt19937_64& rng, ChromaFormat fmt = ChromaFormat::k420) {
  Frame f(w, h, fmt);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : f.y()) v = static_cast<std::uint8_t>(d(rng));
  for (auto& v : f.u()) v = static_cast<std::uint8_t>(d(rng));
  for (auto& v : f.v()) v = static_cast<std::uint8_t>(d(rng));
  return f;
}

// Smooth sinusoidal texture plus a little noise.
inline Frame textured_frame(int w, int h, std::mt19937_64& rng, double phase = 0.0) {
  Frame f(w, h, ChromaFormat::k420);
  std::normal_distribution<double> noise(0.0, 6.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = 128 + 50 * std::sin(0.21 * x + phase) * std::cos(0.17 * y) +
                       30 * std::sin(0.05 * (x + 2 * y)) + noise(rng);
      f.luma(x, y) = clamp8(v);
    }
  }
  for (std::size_t i = 0; i < f.u().size(); ++i) {
    f.u()[i] = static_cast<std::uint8_t>(100 + i % 37);
    f.v()[i] = static_cast<std::uint8_t>(140 - i % 23);
  }
  return f;
}

inline Frame box_blur(const Frame& in, int radius) {
  Frame out = in;
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= in.width() || yy >= in.height()) continue;
          s += in.luma(xx, yy);
          ++n;
        }
      }
      out.luma(x, y) = clamp8(s / n);
    }
  }
  return out;
}

inline Frame flip_h(const Frame& in) {
  Frame out = in;
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) out.luma(x, y) = in.luma(in.width() - 1 - x, y);
  }
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pimtest-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pimtest
