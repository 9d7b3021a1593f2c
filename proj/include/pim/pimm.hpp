#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pim/features.hpp"
#include "pim/gridmap.hpp"

namespace pim::pimm {

inline constexpr int kFilters = 8;
inline constexpr int kClasses = gridmap::kNumClasses;
inline constexpr std::uint32_t kWeightsVersion = 1;

/// Trainable parameter count for C input channels.
constexpr long parameter_count(int channels) { return 82L * channels + 2963L; }

/// Named parameter array, row-major in the order of `shape`.
struct Array {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;

  friend bool operator==(const Array&, const Array&) = default;
};

/// Indices into Parameters::arrays.
enum ParamIndex : int {
  kBnScale,
  kBnShift,
  kB1Conv1W, kB1Conv1B, kB1Conv2W, kB1Conv2B, kB1SkipW, kB1SkipB,
  kB2Conv1W, kB2Conv1B, kB2Conv2W, kB2Conv2B,
  kB3Conv1W, kB3Conv1B, kB3Conv2W, kB3Conv2B,
  kHeadW, kHeadB,
  kParamCount
};

/// Every trainable array of the network in a fixed order.
struct Parameters {
  std::vector<Array> arrays;

  static Parameters zeros(int channels);
  std::size_t count() const;
  Array& operator[](ParamIndex i) { return arrays[i]; }
  const Array& operator[](ParamIndex i) const { return arrays[i]; }

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

struct ModelWeights {
  std::uint32_t version = kWeightsVersion;
  int channels = 0;
  double dropout = 0.2;
  Parameters params;
  std::vector<double> running_mean;  // input batch-norm statistics (not trained)
  std::vector<double> running_var;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Glorot-uniform convolutions, zero biases, identity batch-norm.
ModelWeights init(int channels, std::uint64_t seed, double dropout = 0.2);

enum class Mode { kTrain, kInfer };

/// rows x cols x 3 class scores, cell-major.
struct Logits {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double at(int r, int c, int k) const { return data[(static_cast<std::size_t>(r) * cols + c) * kClasses + k]; }
};

/// Activations a train-mode forward keeps for backward.
struct ForwardCache {
  struct Block {
    std::vector<double> input;  // after dropout
    std::vector<double> pre1;   // conv1 output before ReLU
    std::vector<double> sum;    // conv2 + skip before ReLU
    std::vector<double> out;
  };

  bool train = false;
  int rows = 0;
  int cols = 0;
  std::uint64_t fingerprint = 0;
  std::vector<double> normalized;  // x-hat, channel-major
  std::vector<double> batch_mean;
  std::vector<double> batch_var;   // biased
  std::array<std::vector<double>, 3> masks;  // inverted-dropout multipliers
  std::array<Block, 3> blocks;
  Logits logits;
};

struct ForwardResult {
  Logits logits;
  ForwardCache cache;
};

using ClassWeights = std::array<double, kClasses>;

ForwardResult forward(const ModelWeights& w, const features::FeatureStack& x, Mode mode,
                      std::uint64_t seed = 0);

/// Softmax probabilities of one cell.
std::array<double, kClasses> softmax(const Logits& logits, int r, int c);

/// Weighted cross-entropy normalised by the mean weight of the target cells.
double loss_wce(const Logits& logits, const gridmap::ClassGrid& targets, const ClassWeights& weights);

/// Exact gradients of loss_wce for a train-mode forward.
Parameters backward(const ModelWeights& w, const ForwardCache& cache,
                    const gridmap::ClassGrid& targets, const ClassWeights& weights);

/// Folds a train-mode batch's statistics into the running estimates.
void update_running_stats(ModelWeights& w, const ForwardCache& cache, double momentum = 0.1);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Parameters m;
  Parameters v;
  long step = 0;

  static AdamState for_weights(const ModelWeights& w);
};

void adam_step(ModelWeights& w, AdamState& state, const Parameters& grads, double lr,
               const AdamConfig& cfg = {});

struct TrainConfig {
  int epochs = 70;
  int iterations_per_epoch = 499;
  double learning_rate = 1e-4;
  AdamConfig adam;
  std::optional<ClassWeights> class_weights;  // default: inverse class frequency, mean 1
  double dropout = 0.2;
  std::uint64_t seed = 0;
  bool flip_augmentation = true;

  void validate() const;
};

struct TrainingItem {
  features::FeatureStack features;
  gridmap::ClassGrid targets;
};

struct TrainLogRecord {
  int epoch = 0;
  long iteration = 0;  // global iteration count at the end of the epoch
  double loss = 0.0;   // mean training loss over the epoch
};

/// Inverse class frequency over all target cells, scaled to mean 1.
ClassWeights inverse_frequency_weights(std::span<const TrainingItem> dataset);

ModelWeights train(std::span<const TrainingItem> dataset, const TrainConfig& cfg,
                   const std::function<void(const TrainLogRecord&)>& on_epoch = {});

/// Argmax class per cell, ties toward the lower class.
gridmap::ClassGrid predict_classes(const ModelWeights& w, const features::FeatureStack& x);
gridmap::ImportanceGrid predict_map(const ModelWeights& w, const features::FeatureStack& x);

/// Mirrors a stack or class grid horizontally and/or vertically.
features::FeatureStack flip(const features::FeatureStack& x, bool horizontal, bool vertical);
gridmap::ClassGrid flip(const gridmap::ClassGrid& g, bool horizontal, bool vertical);

// PIMW container: little-endian float32 arrays with names and shapes.
void save_weights(const ModelWeights& w, std::ostream& out);
void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(std::istream& in, std::optional<int> expected_channels = std::nullopt);
ModelWeights load_weights(const std::filesystem::path& path,
                          std::optional<int> expected_channels = std::nullopt);

}  // namespace pim::pimm
