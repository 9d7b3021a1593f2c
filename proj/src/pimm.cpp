#include "pim/pimm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace pim::pimm {
namespace {

constexpr double kBnEpsilon = 1e-5;
constexpr int kBlocks = 3;

struct BlockParams {
  ParamIndex w1, b1, w2, b2;
};
constexpr BlockParams kBlockParams[kBlocks] = {
    {kB1Conv1W, kB1Conv1B, kB1Conv2W, kB1Conv2B},
    {kB2Conv1W, kB2Conv1B, kB2Conv2W, kB2Conv2B},
    {kB3Conv1W, kB3Conv1B, kB3Conv2W, kB3Conv2B},
};

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

Array make_array(std::string name, std::vector<int> shape) {
  Array a{std::move(name), std::move(shape), {}};
  a.data.assign(product(a.shape), 0.0);
  return a;
}

// --- convolution kernels on channel-major planes --------------------------

void conv3x3_forward(const double* in, int cin, int h, int w, const double* weights,
                     const double* bias, int cout, double* out) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < cout; ++o) {
    double* dst = out + o * n;
    std::fill(dst, dst + n, bias[o]);
    for (int i = 0; i < cin; ++i) {
      const double* src = in + i * n;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double k = weights[((o * cin + i) * 3 + ky) * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            double* drow = dst + static_cast<std::size_t>(y) * w;
            const double* srow = src + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) drow[x] += k * srow[x];
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients and, when din is non-null, input gradients.
void conv3x3_backward(const double* in, int cin, int h, int w, const double* weights, int cout,
                      const double* dout, double* dweights, double* dbias, double* din) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < cout; ++o) {
    const double* g = dout + o * n;
    double bsum = 0.0;
    for (std::size_t p = 0; p < n; ++p) bsum += g[p];
    dbias[o] += bsum;
    for (int i = 0; i < cin; ++i) {
      const double* src = in + i * n;
      double* dsrc = din ? din + i * n : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const std::size_t widx = static_cast<std::size_t>(((o * cin + i) * 3 + ky) * 3 + kx);
          const double k = weights[widx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * w;
            const double* srow = src + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (dsrc) {
              double* drow = dsrc + static_cast<std::size_t>(y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) drow[x] += k * grow[x];
            }
          }
          dweights[widx] += acc;
        }
      }
    }
  }
}

void conv1x1_forward(const double* in, int cin, std::size_t n, const double* weights,
                     const double* bias, int cout, double* out) {
  for (int o = 0; o < cout; ++o) {
    double* dst = out + o * n;
    std::fill(dst, dst + n, bias[o]);
    for (int i = 0; i < cin; ++i) {
      const double k = weights[o * cin + i];
      const double* src = in + i * n;
      for (std::size_t p = 0; p < n; ++p) dst[p] += k * src[p];
    }
  }
}

void conv1x1_backward(const double* in, int cin, std::size_t n, const double* weights, int cout,
                      const double* dout, double* dweights, double* dbias, double* din) {
  for (int o = 0; o < cout; ++o) {
    const double* g = dout + o * n;
    double bsum = 0.0;
    for (std::size_t p = 0; p < n; ++p) bsum += g[p];
    dbias[o] += bsum;
    for (int i = 0; i < cin; ++i) {
      const double* src = in + i * n;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += g[p] * src[p];
      dweights[o * cin + i] += acc;
      if (din) {
        const double k = weights[o * cin + i];
        double* d = din + i * n;
        for (std::size_t p = 0; p < n; ++p) d[p] += k * g[p];
      }
    }
  }
}

std::uint64_t fingerprint(const ModelWeights& w) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(w.channels));
  for (const auto& a : w.params.arrays) {
    for (double v : a.data) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

void check_input(const ModelWeights& w, const features::FeatureStack& x) {
  if (x.channels() != w.channels) {
    throw ChannelMismatch("feature stack has " + std::to_string(x.channels()) +
                          " channels, model expects " + std::to_string(w.channels));
  }
  if (x.rows <= 0 || x.cols <= 0) throw DimensionError("empty feature stack");
  if (x.data.size() != static_cast<std::size_t>(x.rows) * x.cols * x.channels()) {
    throw DimensionError("feature stack payload size mismatch");
  }
}

void check_targets(const Logits& logits, const gridmap::ClassGrid& targets) {
  if (targets.rows() != logits.rows || targets.cols() != logits.cols) {
    throw DimensionError("target grid shape differs from logits");
  }
}

// --- weights container helpers --------------------------------------------

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError("truncated weights file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

double get_f32(std::istream& in) {
  const float f = std::bit_cast<float>(get_u32(in));
  if (!std::isfinite(f)) throw FormatError("non-finite value in weights file");
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------

Parameters Parameters::zeros(int channels) {
  if (channels < 1) throw ConfigError("model needs at least one input channel");
  const int c = channels, f = kFilters;
  Parameters p;
  p.arrays = {
      make_array("bn.scale", {c}),
      make_array("bn.shift", {c}),
      make_array("block1.conv1.weight", {f, c, 3, 3}),
      make_array("block1.conv1.bias", {f}),
      make_array("block1.conv2.weight", {f, f, 3, 3}),
      make_array("block1.conv2.bias", {f}),
      make_array("block1.skip.weight", {f, c}),
      make_array("block1.skip.bias", {f}),
      make_array("block2.conv1.weight", {f, f, 3, 3}),
      make_array("block2.conv1.bias", {f}),
      make_array("block2.conv2.weight", {f, f, 3, 3}),
      make_array("block2.conv2.bias", {f}),
      make_array("block3.conv1.weight", {f, f, 3, 3}),
      make_array("block3.conv1.bias", {f}),
      make_array("block3.conv2.weight", {f, f, 3, 3}),
      make_array("block3.conv2.bias", {f}),
      make_array("head.weight", {kClasses, f}),
      make_array("head.bias", {kClasses}),
  };
  return p;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.data.size();
  return n;
}

ModelWeights init(int channels, std::uint64_t seed, double dropout) {
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  ModelWeights w;
  w.channels = channels;
  w.dropout = dropout;
  w.params = Parameters::zeros(channels);
  w.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
  w.running_var.assign(static_cast<std::size_t>(channels), 1.0);
  std::fill(w.params[kBnScale].data.begin(), w.params[kBnScale].data.end(), 1.0);

  std::mt19937_64 rng(seed);
  for (auto& a : w.params.arrays) {
    if (a.shape.size() < 2) continue;  // biases and batch-norm affine
    const int out = a.shape[0], in = a.shape[1];
    const int k = a.shape.size() == 4 ? a.shape[2] * a.shape[3] : 1;
    const double limit = std::sqrt(6.0 / (static_cast<double>(in) * k + static_cast<double>(out) * k));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : a.data) v = dist(rng);
  }
  return w;
}

ForwardResult forward(const ModelWeights& w, const features::FeatureStack& x, Mode mode,
                      std::uint64_t seed) {
  check_input(w, x);
  const int h = x.rows, wd = x.cols, c = w.channels, f = kFilters;
  const std::size_t n = static_cast<std::size_t>(h) * wd;
  const bool train = mode == Mode::kTrain;
  const auto& P = w.params;

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.train = train;
  cache.rows = h;
  cache.cols = wd;
  cache.fingerprint = fingerprint(w);

  // Input batch normalisation.
  std::vector<double> act(static_cast<std::size_t>(c) * n);
  cache.normalized.resize(act.size());
  cache.batch_mean.assign(c, 0.0);
  cache.batch_var.assign(c, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += x.data[p * c + ch];
      mean = s / n;
      double v = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double d = x.data[p * c + ch] - mean;
        v += d * d;
      }
      var = v / n;
      cache.batch_mean[ch] = mean;
      cache.batch_var[ch] = var;
    } else {
      mean = w.running_mean[ch];
      var = w.running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + kBnEpsilon);
    const double g = P[kBnScale].data[ch], b = P[kBnShift].data[ch];
    for (std::size_t p = 0; p < n; ++p) {
      const double xh = (x.data[p * c + ch] - mean) * istd;
      cache.normalized[ch * n + p] = xh;
      act[ch * n + p] = g * xh + b;
    }
  }

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - w.dropout);
  const double scale = w.dropout > 0.0 ? 1.0 / (1.0 - w.dropout) : 1.0;
  int in_ch = c;
  for (int k = 0; k < kBlocks; ++k) {
    auto& blk = cache.blocks[k];
    blk.input = std::move(act);
    if (train && w.dropout > 0.0) {
      auto& mask = cache.masks[k];
      mask.resize(blk.input.size());
      for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = keep(rng) ? scale : 0.0;
        blk.input[i] *= mask[i];
      }
    }
    const BlockParams& bp = kBlockParams[k];
    blk.pre1.resize(static_cast<std::size_t>(f) * n);
    conv3x3_forward(blk.input.data(), in_ch, h, wd, P[bp.w1].data.data(), P[bp.b1].data.data(), f,
                    blk.pre1.data());
    std::vector<double> h1(blk.pre1.size());
    std::transform(blk.pre1.begin(), blk.pre1.end(), h1.begin(), [](double v) { return v > 0 ? v : 0.0; });
    blk.sum.resize(static_cast<std::size_t>(f) * n);
    conv3x3_forward(h1.data(), f, h, wd, P[bp.w2].data.data(), P[bp.b2].data.data(), f, blk.sum.data());
    if (k == 0) {
      std::vector<double> skip(static_cast<std::size_t>(f) * n);
      conv1x1_forward(blk.input.data(), in_ch, n, P[kB1SkipW].data.data(), P[kB1SkipB].data.data(), f,
                      skip.data());
      for (std::size_t i = 0; i < skip.size(); ++i) blk.sum[i] += skip[i];
    } else {
      for (std::size_t i = 0; i < blk.sum.size(); ++i) blk.sum[i] += blk.input[i];
    }
    blk.out.resize(blk.sum.size());
    std::transform(blk.sum.begin(), blk.sum.end(), blk.out.begin(), [](double v) { return v > 0 ? v : 0.0; });
    act = blk.out;
    in_ch = f;
  }

  std::vector<double> head(static_cast<std::size_t>(kClasses) * n);
  conv1x1_forward(act.data(), f, n, P[kHeadW].data.data(), P[kHeadB].data.data(), kClasses, head.data());
  Logits& logits = result.logits;
  logits.rows = h;
  logits.cols = wd;
  logits.data.resize(head.size());
  for (std::size_t p = 0; p < n; ++p) {
    for (int k = 0; k < kClasses; ++k) logits.data[p * kClasses + k] = head[k * n + p];
  }
  if (train) {
    cache.logits = logits;
  } else {
    // Inference keeps nothing for backward.
    cache.normalized.clear();
    for (auto& b : cache.blocks) b = {};
  }
  return result;
}

std::array<double, kClasses> softmax(const Logits& logits, int r, int c) {
  std::array<double, kClasses> p{};
  double m = logits.at(r, c, 0);
  for (int k = 1; k < kClasses; ++k) m = std::max(m, logits.at(r, c, k));
  double s = 0.0;
  for (int k = 0; k < kClasses; ++k) {
    p[k] = std::exp(logits.at(r, c, k) - m);
    s += p[k];
  }
  for (double& v : p) v /= s;
  return p;
}

double loss_wce(const Logits& logits, const gridmap::ClassGrid& targets, const ClassWeights& weights) {
  check_targets(logits, targets);
  for (double v : logits.data) {
    if (!std::isfinite(v)) throw RangeError("non-finite logits");
  }
  double num = 0.0, wsum = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    for (int c = 0; c < logits.cols; ++c) {
      const int t = targets(r, c);
      if (t >= kClasses) throw RangeError("target class out of range");
      double m = logits.at(r, c, 0);
      for (int k = 1; k < kClasses; ++k) m = std::max(m, logits.at(r, c, k));
      double s = 0.0;
      for (int k = 0; k < kClasses; ++k) s += std::exp(logits.at(r, c, k) - m);
      const double log_p = logits.at(r, c, t) - m - std::log(s);
      num += -weights[t] * log_p;
      wsum += weights[t];
    }
  }
  return wsum > 0.0 ? num / wsum : 0.0;
}

Parameters backward(const ModelWeights& w, const ForwardCache& cache,
                    const gridmap::ClassGrid& targets, const ClassWeights& weights) {
  if (!cache.train) throw StateError("stale cache: backward needs a train-mode forward");
  if (cache.fingerprint != fingerprint(w)) throw StateError("stale cache: weights changed since forward");
  check_targets(cache.logits, targets);
  const int h = cache.rows, wd = cache.cols, c = w.channels, f = kFilters;
  const std::size_t n = static_cast<std::size_t>(h) * wd;
  const auto& P = w.params;
  Parameters grads = Parameters::zeros(c);

  double wsum = 0.0;
  for (auto t : targets) wsum += weights[t];
  if (wsum == 0.0) return grads;

  std::vector<double> dhead(static_cast<std::size_t>(kClasses) * n);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < wd; ++col) {
      const std::size_t p = static_cast<std::size_t>(r) * wd + col;
      const int t = targets(r, col);
      const auto prob = softmax(cache.logits, r, col);
      const double scale = weights[t] / wsum;
      for (int k = 0; k < kClasses; ++k) dhead[k * n + p] = scale * (prob[k] - (k == t ? 1.0 : 0.0));
    }
  }

  std::vector<double> dact(static_cast<std::size_t>(f) * n, 0.0);
  conv1x1_backward(cache.blocks[kBlocks - 1].out.data(), f, n, P[kHeadW].data.data(), kClasses,
                   dhead.data(), grads[kHeadW].data.data(), grads[kHeadB].data.data(), dact.data());

  for (int k = kBlocks - 1; k >= 0; --k) {
    const auto& blk = cache.blocks[k];
    const BlockParams& bp = kBlockParams[k];
    const int in_ch = k == 0 ? c : f;
    std::vector<double> dsum(dact.size());
    for (std::size_t i = 0; i < dsum.size(); ++i) dsum[i] = blk.sum[i] > 0 ? dact[i] : 0.0;

    std::vector<double> h1(blk.pre1.size());
    std::transform(blk.pre1.begin(), blk.pre1.end(), h1.begin(), [](double v) { return v > 0 ? v : 0.0; });
    std::vector<double> dh1(h1.size(), 0.0);
    conv3x3_backward(h1.data(), f, h, wd, P[bp.w2].data.data(), f, dsum.data(), grads[bp.w2].data.data(),
                     grads[bp.b2].data.data(), dh1.data());
    for (std::size_t i = 0; i < dh1.size(); ++i) {
      if (blk.pre1[i] <= 0) dh1[i] = 0.0;
    }
    // The first block's input is the batch-normalised data; its gradient is
    // only needed for the batch-norm affine terms, so it is always computed.
    std::vector<double> dinput(static_cast<std::size_t>(in_ch) * n, 0.0);
    conv3x3_backward(blk.input.data(), in_ch, h, wd, P[bp.w1].data.data(), f, dh1.data(),
                     grads[bp.w1].data.data(), grads[bp.b1].data.data(), dinput.data());
    if (k == 0) {
      conv1x1_backward(blk.input.data(), in_ch, n, P[kB1SkipW].data.data(), f, dsum.data(),
                       grads[kB1SkipW].data.data(), grads[kB1SkipB].data.data(), dinput.data());
    } else {
      for (std::size_t i = 0; i < dinput.size(); ++i) dinput[i] += dsum[i];
    }
    const auto& mask = cache.masks[k];
    if (!mask.empty()) {
      for (std::size_t i = 0; i < dinput.size(); ++i) dinput[i] *= mask[i];
    }
    dact = std::move(dinput);
  }

  for (int ch = 0; ch < c; ++ch) {
    double dg = 0.0, db = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      dg += dact[ch * n + p] * cache.normalized[ch * n + p];
      db += dact[ch * n + p];
    }
    grads[kBnScale].data[ch] = dg;
    grads[kBnShift].data[ch] = db;
  }
  return grads;
}

void update_running_stats(ModelWeights& w, const ForwardCache& cache, double momentum) {
  if (!cache.train) throw StateError("running statistics need a train-mode forward");
  const double n = static_cast<double>(cache.rows) * cache.cols;
  const double unbias = n > 1 ? n / (n - 1) : 1.0;
  for (int ch = 0; ch < w.channels; ++ch) {
    w.running_mean[ch] = (1 - momentum) * w.running_mean[ch] + momentum * cache.batch_mean[ch];
    w.running_var[ch] = (1 - momentum) * w.running_var[ch] + momentum * cache.batch_var[ch] * unbias;
  }
}

AdamState AdamState::for_weights(const ModelWeights& w) {
  return {Parameters::zeros(w.channels), Parameters::zeros(w.channels), 0};
}

void adam_step(ModelWeights& w, AdamState& state, const Parameters& grads, double lr,
               const AdamConfig& cfg) {
  if (grads.arrays.size() != w.params.arrays.size() || state.m.arrays.size() != w.params.arrays.size()) {
    throw DimensionError("gradient/optimizer state does not match the model");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t a = 0; a < w.params.arrays.size(); ++a) {
    auto& p = w.params.arrays[a].data;
    const auto& g = grads.arrays[a].data;
    auto& m = state.m.arrays[a].data;
    auto& v = state.v.arrays[a].data;
    if (g.size() != p.size()) throw DimensionError("gradient shape mismatch for " + w.params.arrays[a].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 0 || iterations_per_epoch <= 0) throw ConfigError("epochs/iterations must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (class_weights) {
    for (double v : *class_weights) {
      if (!(v > 0.0)) throw ConfigError("class weights must be positive");
    }
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

ClassWeights inverse_frequency_weights(std::span<const TrainingItem> dataset) {
  std::array<double, kClasses> counts{};
  double total = 0.0;
  for (const auto& item : dataset) {
    for (auto t : item.targets) {
      counts[t] += 1.0;
      total += 1.0;
    }
  }
  ClassWeights w{};
  double sum = 0.0;
  for (int k = 0; k < kClasses; ++k) {
    w[k] = counts[k] > 0 ? total / (kClasses * counts[k]) : 1.0;
    sum += w[k];
  }
  for (double& v : w) v *= kClasses / sum;
  return w;
}

features::FeatureStack flip(const features::FeatureStack& x, bool horizontal, bool vertical) {
  features::FeatureStack out = x;
  const int ch = x.channels();
  for (int r = 0; r < x.rows; ++r) {
    const int sr = vertical ? x.rows - 1 - r : r;
    for (int c = 0; c < x.cols; ++c) {
      const int sc = horizontal ? x.cols - 1 - c : c;
      std::copy_n(&x.data[(static_cast<std::size_t>(sr) * x.cols + sc) * ch], ch,
                  &out.data[(static_cast<std::size_t>(r) * x.cols + c) * ch]);
    }
  }
  return out;
}

gridmap::ClassGrid flip(const gridmap::ClassGrid& g, bool horizontal, bool vertical) {
  gridmap::ClassGrid out(g.rows(), g.cols());
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      out(r, c) = g(vertical ? g.rows() - 1 - r : r, horizontal ? g.cols() - 1 - c : c);
    }
  }
  return out;
}

ModelWeights train(std::span<const TrainingItem> dataset, const TrainConfig& cfg,
                   const std::function<void(const TrainLogRecord&)>& on_epoch) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  const int channels = dataset.front().features.channels();
  for (const auto& item : dataset) {
    if (item.features.channels() != channels) throw ChannelMismatch("dataset items differ in channel count");
    if (item.targets.rows() != item.features.rows || item.targets.cols() != item.features.cols) {
      throw DimensionError("target grid shape differs from its feature stack");
    }
  }

  ModelWeights w = init(channels, cfg.seed, cfg.dropout);
  AdamState state = AdamState::for_weights(w);
  const ClassWeights cw = cfg.class_weights.value_or(inverse_frequency_weights(dataset));
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

  long iteration = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
      const TrainingItem& item = dataset[pick(rng)];
      const bool fh = cfg.flip_augmentation && (rng() & 1);
      const bool fv = cfg.flip_augmentation && (rng() & 1);
      const std::uint64_t dropout_seed = rng();
      const features::FeatureStack x = (fh || fv) ? flip(item.features, fh, fv) : item.features;
      const gridmap::ClassGrid t = (fh || fv) ? flip(item.targets, fh, fv) : item.targets;

      const ForwardResult fr = forward(w, x, Mode::kTrain, dropout_seed);
      loss_sum += loss_wce(fr.logits, t, cw);
      const Parameters grads = backward(w, fr.cache, t, cw);
      adam_step(w, state, grads, cfg.learning_rate, cfg.adam);
      update_running_stats(w, fr.cache);
      ++iteration;
    }
    if (on_epoch) on_epoch({epoch, iteration, loss_sum / cfg.iterations_per_epoch});
  }
  return w;
}

gridmap::ClassGrid predict_classes(const ModelWeights& w, const features::FeatureStack& x) {
  const Logits logits = forward(w, x, Mode::kInfer).logits;
  gridmap::ClassGrid out(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    for (int c = 0; c < logits.cols; ++c) {
      int best = 0;
      for (int k = 1; k < kClasses; ++k) {
        if (logits.at(r, c, k) > logits.at(r, c, best)) best = k;
      }
      out(r, c) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

gridmap::ImportanceGrid predict_map(const ModelWeights& w, const features::FeatureStack& x) {
  return gridmap::classes_to_importance(predict_classes(w, x));
}

// ---------------------------------------------------------------------------
// PIMW

void save_weights(const ModelWeights& w, std::ostream& out) {
  out.write("PIMW", 4);
  put_u32(out, w.version);
  put_u32(out, static_cast<std::uint32_t>(w.channels));
  put_f32(out, w.dropout);
  std::vector<Array> arrays = w.params.arrays;
  arrays.push_back({"bn.running_mean", {w.channels}, w.running_mean});
  arrays.push_back({"bn.running_var", {w.channels}, w.running_var});
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : a.data) {
      if (!std::isfinite(v)) throw RangeError("non-finite weight in " + a.name);
      put_f32(out, v);
    }
  }
  out.flush();
  if (!out) throw Error("write failed: weights");
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path.string());
  save_weights(w, out);
}

ModelWeights load_weights(std::istream& in, std::optional<int> expected_channels) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PIMW", 4) != 0) throw FormatError("bad magic: not a PIMW file");
  const std::uint32_t version = get_u32(in);
  if (version != kWeightsVersion) throw FormatError("unsupported PIMW version " + std::to_string(version));
  const std::uint32_t channels = get_u32(in);
  if (channels < 1 || channels > 100000) throw FormatError("implausible channel count in weights file");
  if (expected_channels && static_cast<int>(channels) != *expected_channels) {
    throw ChannelMismatch("weights expect " + std::to_string(channels) + " input channels, got " +
                          std::to_string(*expected_channels));
  }
  ModelWeights w;
  w.version = version;
  w.channels = static_cast<int>(channels);
  w.dropout = get_f32(in);
  w.params = Parameters::zeros(w.channels);
  w.running_mean.assign(channels, 0.0);
  w.running_var.assign(channels, 1.0);

  std::map<std::string, std::vector<double>*> slots;
  std::map<std::string, std::vector<int>> shapes;
  for (auto& a : w.params.arrays) {
    slots[a.name] = &a.data;
    shapes[a.name] = a.shape;
  }
  slots["bn.running_mean"] = &w.running_mean;
  shapes["bn.running_mean"] = {w.channels};
  slots["bn.running_var"] = &w.running_var;
  shapes["bn.running_var"] = {w.channels};

  const std::uint32_t count = get_u32(in);
  if (count != slots.size()) throw FormatError("weights file has an unexpected number of arrays");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(in);
    if (len > 256) throw FormatError("array name too long");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("truncated weights file");
    const auto it = slots.find(name);
    if (it == slots.end() || it->second == nullptr) throw FormatError("unexpected array " + name);
    const std::uint32_t ndim = get_u32(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(get_u32(in));
    if (shape != shapes[name]) throw ChannelMismatch("shape mismatch for " + name + " against declared channels");
    for (double& v : *it->second) v = get_f32(in);
    it->second = nullptr;
  }
  return w;
}

ModelWeights load_weights(const std::filesystem::path& path, std::optional<int> expected_channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return load_weights(in, expected_channels);
}

}  // namespace pim::pimm
