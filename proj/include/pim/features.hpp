#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pim/grid.hpp"
#include "pim/media.hpp"
#include "pim/metrics.hpp"

namespace pim::features {

/// Full-resolution multi-channel map, one plane per channel.
struct DenseMaps {
  int width = 0;
  int height = 0;
  std::vector<std::vector<double>> planes;

  double at(int ch, int x, int y) const { return planes[ch][static_cast<std::size_t>(y) * width + x]; }
};

struct FlowField {
  MacroblockGrid<int> dx;
  MacroblockGrid<int> dy;
};

struct FeatureSelection {
  bool frame = true;
  bool saliency = true;
  bool segmentation = true;
  bool flow = true;
  bool quality_metrics = true;
  bool highpass = true;
  bool embeddings = true;

  static FeatureSelection none() { return {false, false, false, false, false, false, false}; }
  /// Parses a comma list such as "frame,saliency,highpass".
  static FeatureSelection parse(const std::string& families);
  std::string to_string() const;
  bool any() const { return frame || saliency || segmentation || flow || quality_metrics || highpass || embeddings; }
};

inline constexpr int kColorChannels = 3;
inline constexpr int kSegmentationClasses = 21;
inline constexpr int kDefaultEmbeddingChannels = 25;
inline constexpr int kDefaultFlowRadius = 8;

struct ChannelGroup {
  std::string name;
  int count = 0;

  friend bool operator==(const ChannelGroup&, const ChannelGroup&) = default;
};

/// rows x cols x C stack with a recorded channel layout.
struct FeatureStack {
  int rows = 0;
  int cols = 0;
  std::vector<ChannelGroup> layout;
  std::vector<double> data;  // channel-fastest

  int channels() const;
  double at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels() + ch];
  }
  double& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels() + ch];
  }

  media::FeatureTensor to_tensor() const;
  /// Wraps a tensor; an empty layout becomes a single anonymous group.
  static FeatureStack from_tensor(const media::FeatureTensor& t, std::vector<ChannelGroup> layout = {});

  friend bool operator==(const FeatureStack&, const FeatureStack&) = default;
};

/// Y, U, V at luma resolution (4:2:0 chroma upsampled by nearest neighbour).
DenseMaps color_planes(const media::Frame& frame);

/// v(p) minus the mean of its existing 8-neighbours, per colour channel.
DenseMaps spatial_highpass(const media::Frame& frame);

/// cur - (prev + next) / 2, per colour channel.
DenseMaps temporal_highpass(const media::Frame& prev, const media::Frame& cur, const media::Frame& next);

/// Exhaustive SAD block matching of each macroblock of `cur` against `prev`.
/// The vector (dx, dy) means cur(x, y) ~ prev(x - dx, y - dy).
FlowField block_flow(const media::Frame& prev, const media::Frame& cur, int radius = kDefaultFlowRadius);

/// Area-weighted macroblock pooling of a luma-resolution plane.
MacroblockGrid<double> to_grid_channel(std::span<const double> plane, int width, int height);

/// Internally computed features of one frame, already at grid resolution.
struct FrameFeatures {
  int video_width = 0;
  int video_height = 0;
  std::vector<MacroblockGrid<double>> frame;     // 3
  std::vector<MacroblockGrid<double>> flow;      // 2: dx, dy
  std::vector<MacroblockGrid<double>> spatial;   // 3
  std::vector<MacroblockGrid<double>> temporal;  // 3
};

FrameFeatures compute_frame_features(const media::VideoSequence& video, std::size_t index,
                                     const FeatureSelection& sel, int flow_radius = kDefaultFlowRadius);

/// Precomputed outputs of external models, as FT01 tensors.
struct ExternalFeatures {
  std::optional<media::FeatureTensor> saliency;      // 1 channel
  std::optional<media::FeatureTensor> segmentation;  // 21 one-hot channels
  std::optional<media::FeatureTensor> embeddings;    // E channels
};

/// Concatenates enabled families in the fixed order
/// frame | saliency | segmentation | flow | psnr | ssim | vif |
/// spatial_highpass | temporal_highpass | embeddings.
FeatureStack assemble(const FrameFeatures& frame, const ExternalFeatures& external,
                      std::span<const metrics::MetricGrid> quality, const FeatureSelection& sel,
                      int embedding_channels = kDefaultEmbeddingChannels);

/// Channel count the selection produces.
int channel_count(const FeatureSelection& sel, int embedding_channels = kDefaultEmbeddingChannels);

}  // namespace pim::features
