#include "pim/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <tuple>

#include "pim/gridmap.hpp"

namespace pim::features {
namespace {

void check_same(const media::Frame& a, const media::Frame& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("frames differ in dimensions");
  }
}

std::vector<MacroblockGrid<double>> pool_all(const DenseMaps& maps) {
  std::vector<MacroblockGrid<double>> out;
  for (const auto& p : maps.planes) out.push_back(to_grid_channel(p, maps.width, maps.height));
  return out;
}

// Grid-resolution channels of an external tensor, pooled if it is denser.
std::vector<MacroblockGrid<double>> tensor_channels(const media::FeatureTensor& t, int rows, int cols,
                                                    int video_w, int video_h) {
  std::vector<MacroblockGrid<double>> out;
  const bool at_grid = static_cast<int>(t.rows) == rows && static_cast<int>(t.cols) == cols;
  if (!at_grid && (static_cast<int>(t.rows) < rows || static_cast<int>(t.cols) < cols)) {
    throw DimensionError("external tensor is coarser than the macroblock grid");
  }
  for (std::uint32_t ch = 0; ch < t.channels; ++ch) {
    std::vector<double> plane(static_cast<std::size_t>(t.rows) * t.cols);
    for (std::uint32_t r = 0; r < t.rows; ++r) {
      for (std::uint32_t c = 0; c < t.cols; ++c) {
        const float v = t.at(r, c, ch);
        if (!std::isfinite(v)) throw RangeError("non-finite value in external tensor");
        plane[static_cast<std::size_t>(r) * t.cols + c] = v;
      }
    }
    if (at_grid) {
      MacroblockGrid<double> g(rows, cols);
      g.cells() = std::move(plane);
      out.push_back(std::move(g));
    } else {
      out.push_back(gridmap::pool_dense(plane, static_cast<int>(t.cols), static_cast<int>(t.rows),
                                        video_w, video_h));
    }
  }
  return out;
}

}  // namespace

FeatureSelection FeatureSelection::parse(const std::string& families) {
  FeatureSelection sel = none();
  std::stringstream ss(families);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    if (name == "all") {
      sel = FeatureSelection{};
    } else if (name == "frame") {
      sel.frame = true;
    } else if (name == "saliency") {
      sel.saliency = true;
    } else if (name == "segmentation") {
      sel.segmentation = true;
    } else if (name == "flow") {
      sel.flow = true;
    } else if (name == "quality_metrics" || name == "metrics") {
      sel.quality_metrics = true;
    } else if (name == "highpass") {
      sel.highpass = true;
    } else if (name == "embeddings") {
      sel.embeddings = true;
    } else {
      throw ConfigError("unknown feature family: " + name);
    }
  }
  if (!sel.any()) throw ConfigError("at least one feature family must be enabled");
  return sel;
}

std::string FeatureSelection::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(frame, "frame");
  add(saliency, "saliency");
  add(segmentation, "segmentation");
  add(flow, "flow");
  add(quality_metrics, "quality_metrics");
  add(highpass, "highpass");
  add(embeddings, "embeddings");
  return out;
}

int FeatureStack::channels() const {
  int total = 0;
  for (const auto& g : layout) total += g.count;
  return total;
}

media::FeatureTensor FeatureStack::to_tensor() const {
  media::FeatureTensor t(static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols),
                         static_cast<std::uint32_t>(channels()));
  for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<float>(data[i]);
  return t;
}

FeatureStack FeatureStack::from_tensor(const media::FeatureTensor& t, std::vector<ChannelGroup> layout) {
  FeatureStack s;
  s.rows = static_cast<int>(t.rows);
  s.cols = static_cast<int>(t.cols);
  s.layout = layout.empty() ? std::vector<ChannelGroup>{{"features", static_cast<int>(t.channels)}}
                            : std::move(layout);
  if (s.channels() != static_cast<int>(t.channels)) {
    throw ChannelMismatch("layout declares " + std::to_string(s.channels()) +
                          " channels but tensor has " + std::to_string(t.channels));
  }
  s.data.assign(t.data.begin(), t.data.end());
  return s;
}

DenseMaps color_planes(const media::Frame& f) {
  const int w = f.width(), h = f.height();
  const bool sub = f.format() == media::ChromaFormat::k420;
  const int cw = f.chroma_width();
  DenseMaps out{w, h, std::vector<std::vector<double>>(kColorChannels)};
  for (auto& p : out.planes) p.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int cy = sub ? y / 2 : y;
    for (int x = 0; x < w; ++x) {
      const int cx = sub ? x / 2 : x;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const std::size_t ci = static_cast<std::size_t>(cy) * cw + cx;
      out.planes[0][i] = f.y()[i];
      out.planes[1][i] = f.u()[ci];
      out.planes[2][i] = f.v()[ci];
    }
  }
  return out;
}

DenseMaps spatial_highpass(const media::Frame& frame) {
  DenseMaps in = color_planes(frame);
  const int w = in.width, h = in.height;
  DenseMaps out{w, h, std::vector<std::vector<double>>(kColorChannels)};
  for (int ch = 0; ch < kColorChannels; ++ch) {
    const auto& src = in.planes[ch];
    auto& dst = out.planes[ch];
    dst.resize(src.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sum = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            sum += src[static_cast<std::size_t>(yy) * w + xx];
            ++n;
          }
        }
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        dst[i] = n > 0 ? src[i] - sum / n : 0.0;
      }
    }
  }
  return out;
}

DenseMaps temporal_highpass(const media::Frame& prev, const media::Frame& cur,
                            const media::Frame& next) {
  check_same(prev, cur);
  check_same(next, cur);
  const DenseMaps p = color_planes(prev), c = color_planes(cur), n = color_planes(next);
  DenseMaps out{c.width, c.height, std::vector<std::vector<double>>(kColorChannels)};
  for (int ch = 0; ch < kColorChannels; ++ch) {
    out.planes[ch].resize(c.planes[ch].size());
    for (std::size_t i = 0; i < c.planes[ch].size(); ++i) {
      out.planes[ch][i] = c.planes[ch][i] - 0.5 * (p.planes[ch][i] + n.planes[ch][i]);
    }
  }
  return out;
}

FlowField block_flow(const media::Frame& prev, const media::Frame& cur, int radius) {
  check_same(prev, cur);
  if (radius < 0) throw ConfigError("flow radius must be non-negative");
  const int w = cur.width(), h = cur.height();
  FlowField flow{MacroblockGrid<int>::for_video(w, h), MacroblockGrid<int>::for_video(w, h)};
  for (int r = 0; r < flow.dx.rows(); ++r) {
    for (int c = 0; c < flow.dx.cols(); ++c) {
      const int x0 = c * kMacroblockSize, y0 = r * kMacroblockSize;
      const int x1 = std::min(x0 + kMacroblockSize, w), y1 = std::min(y0 + kMacroblockSize, h);
      // Key: (SAD, |dx|+|dy|, dy, dx), smallest wins.
      std::tuple<long, int, int, int> best{-1, 0, 0, 0};
      for (int dy = -radius; dy <= radius; ++dy) {
        if (y0 - dy < 0 || y1 - dy > h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          if (x0 - dx < 0 || x1 - dx > w) continue;
          long sad = 0;
          for (int y = y0; y < y1; ++y) {
            const std::uint8_t* a = &cur.y()[static_cast<std::size_t>(y) * w];
            const std::uint8_t* b = &prev.y()[static_cast<std::size_t>(y - dy) * w - dx];
            for (int x = x0; x < x1; ++x) sad += std::abs(static_cast<int>(a[x]) - b[x]);
          }
          const std::tuple<long, int, int, int> key{sad, std::abs(dx) + std::abs(dy), dy, dx};
          if (std::get<0>(best) < 0 || key < best) best = key;
        }
      }
      flow.dx(r, c) = std::get<3>(best);
      flow.dy(r, c) = std::get<2>(best);
    }
  }
  return flow;
}

MacroblockGrid<double> to_grid_channel(std::span<const double> plane, int width, int height) {
  return gridmap::pool_dense(plane, width, height, width, height);
}

FrameFeatures compute_frame_features(const media::VideoSequence& video, std::size_t index,
                                     const FeatureSelection& sel, int flow_radius) {
  if (index >= video.frames.size()) throw NotFound("frame index out of range");
  const media::Frame& cur = video.frames[index];
  const media::Frame& prev = video.frames[index == 0 ? (video.frames.size() > 1 ? 1 : 0) : index - 1];
  const media::Frame& next =
      video.frames[index + 1 < video.frames.size() ? index + 1 : (index > 0 ? index - 1 : index)];

  FrameFeatures out;
  out.video_width = cur.width();
  out.video_height = cur.height();
  if (sel.frame) out.frame = pool_all(color_planes(cur));
  if (sel.flow) {
    // The first frame has no predecessor: zero motion.
    const FlowField f = block_flow(index == 0 ? cur : video.frames[index - 1], cur, flow_radius);
    MacroblockGrid<double> dx(f.dx.rows(), f.dx.cols()), dy(f.dy.rows(), f.dy.cols());
    std::copy(f.dx.begin(), f.dx.end(), dx.begin());
    std::copy(f.dy.begin(), f.dy.end(), dy.begin());
    out.flow = {std::move(dx), std::move(dy)};
  }
  if (sel.highpass) {
    out.spatial = pool_all(spatial_highpass(cur));
    out.temporal = pool_all(temporal_highpass(prev, cur, next));
  }
  return out;
}

int channel_count(const FeatureSelection& sel, int embedding_channels) {
  return (sel.frame ? kColorChannels : 0) + (sel.saliency ? 1 : 0) +
         (sel.segmentation ? kSegmentationClasses : 0) + (sel.flow ? 2 : 0) +
         (sel.quality_metrics ? 3 : 0) + (sel.highpass ? 2 * kColorChannels : 0) +
         (sel.embeddings ? embedding_channels : 0);
}

FeatureStack assemble(const FrameFeatures& frame, const ExternalFeatures& external,
                      std::span<const metrics::MetricGrid> quality, const FeatureSelection& sel,
                      int embedding_channels) {
  if (!sel.any()) throw ConfigError("at least one feature family must be enabled");
  if (frame.video_width <= 0 || frame.video_height <= 0) throw DimensionError("missing video geometry");
  const int rows = mb_count(frame.video_height), cols = mb_count(frame.video_width);

  FeatureStack stack;
  stack.rows = rows;
  stack.cols = cols;
  std::vector<const MacroblockGrid<double>*> planes;
  std::vector<MacroblockGrid<double>> owned;
  owned.reserve(static_cast<std::size_t>(channel_count(sel, embedding_channels)));

  auto add_group = [&](const char* name, std::vector<const MacroblockGrid<double>*> grids,
                       int expected) {
    if (static_cast<int>(grids.size()) != expected) {
      throw ChannelMismatch(std::string(name) + ": expected " + std::to_string(expected) +
                            " channels, got " + std::to_string(grids.size()));
    }
    for (const auto* g : grids) {
      if (g->rows() != rows || g->cols() != cols) {
        throw DimensionError(std::string(name) + ": channel is not at grid resolution");
      }
      planes.push_back(g);
    }
    stack.layout.push_back({name, expected});
  };
  auto ptrs = [](const std::vector<MacroblockGrid<double>>& grids) {
    std::vector<const MacroblockGrid<double>*> out;
    for (const auto& g : grids) out.push_back(&g);
    return out;
  };
  auto add_external = [&](const char* name, const std::optional<media::FeatureTensor>& t,
                          int expected) {
    if (!t) throw NotFound(std::string("missing required tensor: ") + name);
    if (static_cast<int>(t->channels) != expected) {
      throw ChannelMismatch(std::string(name) + ": expected " + std::to_string(expected) +
                            " channels, got " + std::to_string(t->channels));
    }
    for (auto& g : tensor_channels(*t, rows, cols, frame.video_width, frame.video_height)) {
      owned.push_back(std::move(g));
      planes.push_back(&owned.back());
    }
    stack.layout.push_back({name, expected});
  };
  auto find_metric = [&](metrics::MetricKind kind) -> const MacroblockGrid<double>& {
    for (const auto& m : quality) {
      if (m.kind == kind) return m.values;
    }
    throw NotFound(std::string("missing required tensor: ") + metrics::metric_name(kind));
  };

  if (sel.frame) add_group("frame", ptrs(frame.frame), kColorChannels);
  if (sel.saliency) add_external("saliency", external.saliency, 1);
  if (sel.segmentation) add_external("segmentation", external.segmentation, kSegmentationClasses);
  if (sel.flow) add_group("flow", ptrs(frame.flow), 2);
  if (sel.quality_metrics) {
    for (auto kind : {metrics::MetricKind::kPsnr, metrics::MetricKind::kSsim, metrics::MetricKind::kVif}) {
      add_group(metrics::metric_name(kind), {&find_metric(kind)}, 1);
    }
  }
  if (sel.highpass) {
    add_group("spatial_highpass", ptrs(frame.spatial), kColorChannels);
    add_group("temporal_highpass", ptrs(frame.temporal), kColorChannels);
  }
  if (sel.embeddings) add_external("embeddings", external.embeddings, embedding_channels);

  const int channels = static_cast<int>(planes.size());
  stack.data.resize(static_cast<std::size_t>(rows) * cols * channels);
  for (int ch = 0; ch < channels; ++ch) {
    const auto& g = planes[ch]->cells();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) throw RangeError("non-finite feature value");
      stack.data[i * channels + ch] = g[i];
    }
  }
  return stack;
}

}  // namespace pim::features
