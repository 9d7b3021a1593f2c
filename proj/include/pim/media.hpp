#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "pim/grid.hpp"

namespace pim::media {

enum class ChromaFormat { k420, k444 };

/// Planar 8-bit YUV frame. Chroma planes are ceil(w/2) x ceil(h/2) for 4:2:0.
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, ChromaFormat format);
  Frame(int width, int height, ChromaFormat format, std::vector<std::uint8_t> y,
        std::vector<std::uint8_t> u, std::vector<std::uint8_t> v);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  ChromaFormat format() const noexcept { return format_; }
  int chroma_width() const noexcept;
  int chroma_height() const noexcept;

  std::uint8_t luma(int x, int y) const { return y_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& luma(int x, int y) { return y_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<std::uint8_t>& y() const noexcept { return y_; }
  const std::vector<std::uint8_t>& u() const noexcept { return u_; }
  const std::vector<std::uint8_t>& v() const noexcept { return v_; }
  std::vector<std::uint8_t>& y() noexcept { return y_; }
  std::vector<std::uint8_t>& u() noexcept { return u_; }
  std::vector<std::uint8_t>& v() noexcept { return v_; }

  /// Bytes of one raw frame payload (Y, then U, then V).
  std::size_t payload_size() const noexcept;

  bool same_geometry(const Frame& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && format_ == other.format_;
  }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  ChromaFormat format_ = ChromaFormat::k420;
  std::vector<std::uint8_t> y_, u_, v_;
};

struct VideoSequence {
  std::vector<Frame> frames;
  double fps = 25.0;
  int fps_num = 25;
  int fps_den = 1;

  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
};

/// Per-pixel 0..255 importance surface.
class ImportanceMap {
 public:
  ImportanceMap() = default;
  ImportanceMap(int width, int height, std::uint8_t fill = 0);
  ImportanceMap(int width, int height, std::vector<std::uint8_t> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::uint8_t operator()(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& operator()(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }
  std::vector<std::uint8_t>& values() noexcept { return values_; }

  friend bool operator==(const ImportanceMap&, const ImportanceMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> values_;
};

/// rows x cols x channels float tensor, channel-fastest (FT01 on disk).
struct FeatureTensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;

  FeatureTensor() = default;
  FeatureTensor(std::uint32_t r, std::uint32_t c, std::uint32_t ch)
      : rows(r), cols(c), channels(ch), data(static_cast<std::size_t>(r) * c * ch, 0.0f) {}

  float& at(std::uint32_t r, std::uint32_t c, std::uint32_t ch) {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
  float at(std::uint32_t r, std::uint32_t c, std::uint32_t ch) const {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

using DeltaQpGrid = MacroblockGrid<int>;

inline constexpr int kMaxAbsDeltaQp = 10;

/// Per-frame ΔQP grids (DQP1 on disk).
struct DqpSidecar {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<DeltaQpGrid> frames;

  friend bool operator==(const DqpSidecar&, const DqpSidecar&) = default;
};

// YUV4MPEG2
VideoSequence load_y4m(std::istream& in);
VideoSequence load_y4m(const std::filesystem::path& path);
void save_y4m(const VideoSequence& video, std::ostream& out);
void save_y4m(const VideoSequence& video, const std::filesystem::path& path);

// Binary PGM (P5, maxval 255)
ImportanceMap load_pgm(std::istream& in);
ImportanceMap load_pgm(const std::filesystem::path& path);
void save_pgm(const ImportanceMap& map, std::ostream& out);
void save_pgm(const ImportanceMap& map, const std::filesystem::path& path);

// FT01
FeatureTensor read_tensor(std::istream& in);
FeatureTensor read_tensor(const std::filesystem::path& path);
void write_tensor(const FeatureTensor& tensor, std::ostream& out);
void write_tensor(const FeatureTensor& tensor, const std::filesystem::path& path);

// DQP1
DqpSidecar read_dqp(std::istream& in);
DqpSidecar read_dqp(const std::filesystem::path& path);
void write_dqp(const DqpSidecar& sidecar, std::ostream& out);
void write_dqp(const DqpSidecar& sidecar, const std::filesystem::path& path);

/// Luma plane of a frame as an ImportanceMap-shaped grayscale image.
ImportanceMap luma_image(const Frame& frame);

}  // namespace pim::media
