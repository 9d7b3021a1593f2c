#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "pim/gridmap.hpp"
#include "pim/pimm.hpp"

namespace pimtest {

// Items whose target class is the saliency channel thresholded at 1/3 and
// 2/3. The other channels are smooth distractors.
inline std::vector<pim::pimm::TrainingItem> saliency_threshold_dataset(std::uint64_t seed, int items = 10,
                                                                       int rows = 29, int cols = 50,
                                                                       int distractors = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<pim::pimm::TrainingItem> out;
  const int channels = distractors + 1;
  for (int it = 0; it < items; ++it) {
    pim::features::FeatureStack x;
    x.rows = rows;
    x.cols = cols;
    x.layout = {{"frame", distractors}, {"saliency", 1}};
    x.data.assign(static_cast<std::size_t>(rows) * cols * channels, 0.0);
    pim::gridmap::ClassGrid t(rows, cols);

    struct Blob {
      double r, c, s, a;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < 4; ++b) blobs.push_back({u(rng) * rows, u(rng) * cols, 2.0 + 5.0 * u(rng), 0.4 + 0.6 * u(rng)});
    std::vector<double> phase(distractors);
    for (auto& p : phase) p = 6.28 * u(rng);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        double s = 0.0;
        for (const auto& b : blobs) {
          const double d2 = (r - b.r) * (r - b.r) + (c - b.c) * (c - b.c);
          s = std::max(s, b.a * std::exp(-d2 / (2 * b.s * b.s)));
        }
        const std::size_t base = (static_cast<std::size_t>(r) * cols + c) * channels;
        for (int d = 0; d < distractors; ++d) {
          x.data[base + d] = 100 + 60 * std::sin(0.3 * (d + 1) * c + phase[d]) * std::cos(0.2 * r) + 10 * u(rng);
        }
        x.data[base + distractors] = s;
        t(r, c) = static_cast<std::uint8_t>(s < 1.0 / 3 ? 0 : (s < 2.0 / 3 ? 1 : 2));
      }
    }
    out.push_back({std::move(x), std::move(t)});
  }
  return out;
}

inline double cell_accuracy(const pim::pimm::ModelWeights& w, const std::vector<pim::pimm::TrainingItem>& data) {
  long hit = 0, total = 0;
  for (const auto& item : data) {
    const auto pred = pim::pimm::predict_classes(w, item.features);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      hit += pred.cells()[i] == item.targets.cells()[i];
      ++total;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace pimtest
