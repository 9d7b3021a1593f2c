#include "pim/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pim/analytics.hpp"
#include "pim/encode.hpp"
#include "pim/error.hpp"
#include "pim/features.hpp"
#include "pim/gridmap.hpp"
#include "pim/media.hpp"
#include "pim/metrics.hpp"
#include "pim/pimm.hpp"
#include "pim/qpsolver.hpp"
#include "pim/service.hpp"

namespace pim::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string indexed(const std::string& prefix, std::size_t i, const std::string& ext) {
  std::ostringstream s;
  s << prefix << std::setw(5) << std::setfill('0') << i << ext;
  return s.str();
}

// Runs fn(0..n-1) on up to `jobs` threads. Results must be written by index.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct Size {
  int width = 0;
  int height = 0;
};

Size parse_size(const std::string& s) {
  Size out;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> out.width >> x >> out.height) || (x != 'x' && x != 'X') || out.width <= 0 || out.height <= 0) {
    throw ConfigError("expected WIDTHxHEIGHT, got '" + s + "'");
  }
  return out;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind(prefix, 0) == 0 && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct SolverFlags {
  qpsolver::SolverConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--span", cfg.span, "ΔQP span R")->capture_default_str();
    app->add_option("--clamp", cfg.clamp, "ΔQP clamp C")->capture_default_str();
    app->add_option("--tolerance", cfg.tolerance, "bisection tolerance")->capture_default_str();
  }
};

MacroblockGrid<double> as_real(const MacroblockGrid<std::uint8_t>& g) {
  MacroblockGrid<double> out(g.rows(), g.cols());
  std::copy(g.begin(), g.end(), out.begin());
  return out;
}

void print_solve(std::ostream& out, std::size_t frame, const qpsolver::SolveReport& r) {
  out << "frame " << frame << std::fixed << std::setprecision(6) << " offset " << r.offset
      << " real_ratio " << std::setprecision(9) << r.real_ratio << " rounded_ratio " << std::setprecision(6)
      << r.rounded_ratio << " iterations " << r.iterations << '\n';
}

void print_ratio(std::ostream& out, const std::vector<qpsolver::SolveReport>& reports) {
  double sum = 0.0;
  for (const auto& r : reports) sum += r.rounded_ratio;
  out << "ratio " << std::fixed << std::setprecision(6) << (reports.empty() ? 1.0 : sum / reports.size())
      << '\n';
}

// solve-qp ------------------------------------------------------------------

struct SolveCmd {
  std::vector<std::string> maps;
  std::string out_path, video, video_size, report;
  SolverFlags solver;

  void add(CLI::App& root, int& jobs, std::function<int()>& action) {
    auto* c = root.add_subcommand("solve-qp", "importance maps (PGM, one per frame) -> DQP1 sidecar");
    c->add_option("maps", maps, "PGM maps in frame order")->required();
    c->add_option("-o,--out", out_path, "output sidecar")->required();
    c->add_option("--video", video, "Y4M whose geometry the maps cover");
    c->add_option("--video-size", video_size, "video geometry WIDTHxHEIGHT");
    c->add_option("--report", report, "JSON solve report");
    solver.add(c);
    c->callback([&, this] { action = [&, this] { return run(jobs); }; });
  }

  int run(int jobs) {
    solver.cfg.validate();
    std::vector<media::ImportanceMap> loaded(maps.size());
    for (std::size_t i = 0; i < maps.size(); ++i) loaded[i] = media::load_pgm(maps[i]);
    Size size{loaded.front().width(), loaded.front().height()};
    if (!video.empty()) {
      const auto v = media::load_y4m(video);
      size = {v.width(), v.height()};
    } else if (!video_size.empty()) {
      size = parse_size(video_size);
    }
    std::vector<qpsolver::SolveResult> results(loaded.size());
    parallel_for(loaded.size(), jobs, [&](std::size_t i) {
      results[i] = qpsolver::solve_dqp(gridmap::pool_to_grid(loaded[i], size.width, size.height), solver.cfg);
    });
    media::DqpSidecar sidecar;
    sidecar.rows = static_cast<std::uint32_t>(mb_count(size.height));
    sidecar.cols = static_cast<std::uint32_t>(mb_count(size.width));
    std::vector<qpsolver::SolveReport> reports;
    for (auto& r : results) {
      sidecar.frames.push_back(std::move(r.dqp));
      reports.push_back(r.report);
    }
    media::write_dqp(sidecar, out_path);
    for (std::size_t i = 0; i < reports.size(); ++i) print_solve(std::cout, i, reports[i]);
    print_ratio(std::cout, reports);
    if (!report.empty()) {
      json j = json::array();
      for (const auto& r : reports) {
        j.push_back({{"offset", r.offset}, {"real_ratio", r.real_ratio}, {"rounded_ratio", r.rounded_ratio},
                     {"iterations", r.iterations}});
      }
      std::ofstream(report) << j.dump(1) << '\n';
    }
    return 0;
  }
};

// features ------------------------------------------------------------------

struct FeaturesCmd {
  std::string video, distorted, out_dir, select = "all", saliency, segmentation, embeddings;
  int embedding_channels = features::kDefaultEmbeddingChannels;
  int flow_radius = features::kDefaultFlowRadius;

  void add(CLI::App& root, int& jobs, std::function<int()>& action) {
    auto* c = root.add_subcommand("features", "video -> per-frame FT01 feature stacks");
    c->add_option("--video", video, "source Y4M")->required();
    c->add_option("--distorted", distorted, "encoded Y4M for the quality-metric channels");
    c->add_option("-o,--out-dir", out_dir, "output directory")->required();
    c->add_option("--select", select, "feature families, comma separated")->capture_default_str();
    c->add_option("--saliency", saliency, "directory of NNNNN.ft01 saliency tensors");
    c->add_option("--segmentation", segmentation, "directory of NNNNN.ft01 segmentation tensors");
    c->add_option("--embeddings", embeddings, "directory of NNNNN.ft01 embedding tensors");
    c->add_option("--embedding-channels", embedding_channels)->capture_default_str();
    c->add_option("--flow-radius", flow_radius)->capture_default_str();
    c->callback([&, this] { action = [&, this] { return run(jobs); }; });
  }

  static std::optional<media::FeatureTensor> external(const std::string& dir, std::size_t i) {
    if (dir.empty()) return std::nullopt;
    const fs::path p = fs::path(dir) / indexed("", i, ".ft01");
    if (!fs::exists(p)) return std::nullopt;
    return media::read_tensor(p);
  }

  int run(int jobs) {
    const auto sel = features::FeatureSelection::parse(select);
    const auto v = media::load_y4m(video);
    std::optional<media::VideoSequence> dist;
    if (sel.quality_metrics) {
      if (distorted.empty()) throw NotFound("missing required tensor: quality metrics need --distorted");
      dist = media::load_y4m(distorted);
      if (dist->frames.size() != v.frames.size()) throw DimensionError("distorted video frame count differs");
    }
    fs::create_directories(out_dir);
    std::vector<std::vector<features::ChannelGroup>> layouts(v.frames.size());
    parallel_for(v.frames.size(), jobs, [&](std::size_t i) {
      const auto ff = features::compute_frame_features(v, i, sel, flow_radius);
      features::ExternalFeatures ext{external(saliency, i), external(segmentation, i), external(embeddings, i)};
      std::vector<metrics::MetricGrid> quality;
      if (dist) {
        quality.push_back(metrics::mb_psnr(v.frames[i], dist->frames[i]));
        quality.push_back(metrics::mb_ssim(v.frames[i], dist->frames[i]));
        quality.push_back(metrics::block_vif(v.frames[i], dist->frames[i]));
      }
      const auto stack = features::assemble(ff, ext, quality, sel, embedding_channels);
      media::write_tensor(stack.to_tensor(), fs::path(out_dir) / indexed("features_", i, ".ft01"));
      layouts[i] = stack.layout;
    });
    json groups = json::array();
    int channels = 0;
    for (const auto& g : layouts.front()) {
      groups.push_back({{"name", g.name}, {"count", g.count}});
      channels += g.count;
    }
    json layout{{"version", 1}, {"selection", sel.to_string()}, {"channels", channels},
                {"rows", mb_count(v.height())}, {"cols", mb_count(v.width())}, {"groups", groups}};
    std::ofstream(fs::path(out_dir) / "layout.json") << layout.dump(1) << '\n';
    std::cout << "frames " << v.frames.size() << " channels " << channels << '\n';
    return 0;
  }
};

// metrics -------------------------------------------------------------------

struct MetricsCmd {
  std::string ref, dist, out_dir, select = "psnr,ssim,vif";

  void add(CLI::App& root, int& jobs, std::function<int()>& action) {
    auto* c = root.add_subcommand("metrics", "reference + distorted Y4M -> per-macroblock metric tensors");
    c->add_option("--ref", ref)->required();
    c->add_option("--dist", dist)->required();
    c->add_option("-o,--out-dir", out_dir)->required();
    c->add_option("--select", select, "psnr, ssim, vif")->capture_default_str();
    c->callback([&, this] { action = [&, this] { return run(jobs); }; });
  }

  int run(int jobs) {
    std::vector<metrics::MetricKind> kinds;
    std::stringstream ss(select);
    for (std::string name; std::getline(ss, name, ',');) {
      if (name == "psnr") {
        kinds.push_back(metrics::MetricKind::kPsnr);
      } else if (name == "ssim") {
        kinds.push_back(metrics::MetricKind::kSsim);
      } else if (name == "vif") {
        kinds.push_back(metrics::MetricKind::kVif);
      } else if (!name.empty()) {
        throw ConfigError("unknown metric '" + name + "'");
      }
    }
    const auto a = media::load_y4m(ref);
    const auto b = media::load_y4m(dist);
    if (a.frames.size() != b.frames.size()) throw DimensionError("videos differ in frame count");
    fs::create_directories(out_dir);
    std::vector<std::vector<double>> means(a.frames.size(), std::vector<double>(kinds.size()));
    parallel_for(a.frames.size(), jobs, [&](std::size_t i) {
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        metrics::MetricGrid g = kinds[k] == metrics::MetricKind::kPsnr   ? metrics::mb_psnr(a.frames[i], b.frames[i])
                                : kinds[k] == metrics::MetricKind::kSsim ? metrics::mb_ssim(a.frames[i], b.frames[i])
                                                                          : metrics::block_vif(a.frames[i], b.frames[i]);
        double sum = 0.0;
        for (double x : g.values) sum += x;
        means[i][k] = sum / static_cast<double>(g.values.size());
        media::write_tensor(metrics::to_tensor(g),
                            fs::path(out_dir) / indexed(std::string(metrics::metric_name(kinds[k])) + "_", i, ".ft01"));
      }
    });
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      double sum = 0.0;
      for (const auto& m : means) sum += m[k];
      std::cout << metrics::metric_name(kinds[k]) << " mean " << std::fixed << std::setprecision(6)
                << sum / static_cast<double>(means.size()) << '\n';
    }
    return 0;
  }
};

// train ---------------------------------------------------------------------

gridmap::ClassGrid load_targets(const fs::path& p, int rows, int cols, const std::string& video_size) {
  const auto m = media::load_pgm(p);
  MacroblockGrid<double> g(rows, cols);
  if (m.width() == cols && m.height() == rows) {
    std::copy(m.values().begin(), m.values().end(), g.begin());
  } else {
    if (video_size.empty()) throw DimensionError(p.string() + ": target is not at grid resolution; pass --video-size");
    const auto s = parse_size(video_size);
    g = gridmap::pool_to_grid(m, s.width, s.height);
    if (g.rows() != rows || g.cols() != cols) throw DimensionError(p.string() + ": target grid shape differs");
  }
  return gridmap::quantize_classes(g);
}

struct TrainCmd {
  std::string data_dir, out_path, log_path, class_weights, video_size;
  pimm::TrainConfig cfg;
  bool no_flip = false;

  void add(CLI::App& root, std::function<int()>& action) {
    auto* c = root.add_subcommand("train", "features_NNNNN.ft01 + target_NNNNN.pgm pairs -> PIMW weights");
    c->add_option("--data-dir", data_dir)->required();
    c->add_option("-o,--out", out_path)->required();
    c->add_option("--epochs", cfg.epochs)->capture_default_str();
    c->add_option("--iterations", cfg.iterations_per_epoch, "iterations per epoch")->capture_default_str();
    c->add_option("--lr", cfg.learning_rate)->capture_default_str();
    c->add_option("--dropout", cfg.dropout)->capture_default_str();
    c->add_option("--seed", cfg.seed)->capture_default_str();
    c->add_option("--class-weights", class_weights, "three comma-separated weights");
    c->add_flag("--no-flip", no_flip, "disable flip augmentation");
    c->add_option("--video-size", video_size, "geometry for targets given as dense maps");
    c->add_option("--log", log_path, "line-delimited JSON training log");
    c->callback([&, this] { action = [this] { return run(); }; });
  }

  int run() {
    cfg.flip_augmentation = !no_flip;
    if (!class_weights.empty()) {
      pimm::ClassWeights w{};
      std::stringstream ss(class_weights);
      std::string tok;
      for (int k = 0; k < pimm::kClasses; ++k) {
        if (!std::getline(ss, tok, ',')) throw ConfigError("--class-weights needs three values");
        w[k] = std::stod(tok);
      }
      cfg.class_weights = w;
    }
    cfg.validate();
    std::vector<pimm::TrainingItem> data;
    for (const auto& f : sorted_files(data_dir, "features_", ".ft01")) {
      auto stack = features::FeatureStack::from_tensor(media::read_tensor(f));
      auto stem = f.filename().string().substr(std::string("features_").size());
      stem = stem.substr(0, stem.size() - 5);
      const auto target = fs::path(data_dir) / ("target_" + stem + ".pgm");
      if (!fs::exists(target)) throw NotFound("missing target " + target.string());
      auto classes = load_targets(target, stack.rows, stack.cols, video_size);
      data.push_back({std::move(stack), std::move(classes)});
    }
    if (data.empty()) throw NotFound("no training items in " + data_dir);
    std::ofstream log;
    if (!log_path.empty()) log.open(log_path);
    const auto w = pimm::train(data, cfg, [&](const pimm::TrainLogRecord& r) {
      std::cout << "epoch " << r.epoch << " iteration " << r.iteration << " loss " << std::setprecision(9)
                << r.loss << '\n';
      if (log.is_open()) log << json{{"epoch", r.epoch}, {"iteration", r.iteration}, {"loss", r.loss}}.dump() << '\n';
    });
    pimm::save_weights(w, out_path);
    std::cout << "parameters " << w.params.count() << '\n';
    return 0;
  }
};

// predict -------------------------------------------------------------------

struct PredictCmd {
  std::string weights, video, features_dir, out_dqp, out_maps;
  SolverFlags solver;

  void add(CLI::App& root, int& jobs, std::function<int()>& action) {
    auto* c = root.add_subcommand("predict", "video + feature stacks -> importance grids + DQP1 sidecar");
    c->add_option("--weights", weights)->required();
    c->add_option("--video", video)->required();
    c->add_option("--features-dir", features_dir)->required();
    c->add_option("-o,--out", out_dqp, "output sidecar")->required();
    c->add_option("--maps-dir", out_maps, "write per-frame grid-resolution importance PGMs here");
    solver.add(c);
    c->callback([&, this] { action = [&, this] { return run(jobs); }; });
  }

  int run(int jobs) {
    solver.cfg.validate();
    const auto v = media::load_y4m(video);
    const auto files = sorted_files(features_dir, "features_", ".ft01");
    if (files.size() != v.frames.size()) {
      throw DimensionError("found " + std::to_string(files.size()) + " feature stacks for " +
                           std::to_string(v.frames.size()) + " frames");
    }
    const auto first = media::read_tensor(files.front());
    const auto w = pimm::load_weights(weights, static_cast<int>(first.channels));
    const int rows = mb_count(v.height()), cols = mb_count(v.width());
    if (!out_maps.empty()) fs::create_directories(out_maps);
    std::vector<qpsolver::SolveResult> results(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
      const auto stack = features::FeatureStack::from_tensor(media::read_tensor(files[i]));
      if (stack.rows != rows || stack.cols != cols) throw DimensionError(files[i].string() + ": grid shape differs from video");
      const auto grid = pimm::predict_map(w, stack);
      if (!out_maps.empty()) {
        media::ImportanceMap m(cols, rows, std::vector<std::uint8_t>(grid.begin(), grid.end()));
        media::save_pgm(m, fs::path(out_maps) / indexed("importance_", i, ".pgm"));
      }
      results[i] = qpsolver::solve_dqp(as_real(grid), solver.cfg);
    });
    media::DqpSidecar sidecar;
    sidecar.rows = static_cast<std::uint32_t>(rows);
    sidecar.cols = static_cast<std::uint32_t>(cols);
    std::vector<qpsolver::SolveReport> reports;
    for (auto& r : results) {
      sidecar.frames.push_back(std::move(r.dqp));
      reports.push_back(r.report);
    }
    media::write_dqp(sidecar, out_dqp);
    for (std::size_t i = 0; i < reports.size(); ++i) print_solve(std::cout, i, reports[i]);
    print_ratio(std::cout, reports);
    return 0;
  }
};

// mock-encode ---------------------------------------------------------------

struct EncodeCmd {
  std::string video, dqp, encoder_template, work_dir;
  int qp_base = 26;
  double bitrate = 500.0;
  double bits_per_mb = 0.0;

  void add(CLI::App& root, std::function<int()>& action) {
    auto* c = root.add_subcommand("mock-encode", "simulate (or drive) an encode of a video with a DQP1 sidecar");
    c->add_option("--video", video)->required();
    c->add_option("--dqp", dqp)->required();
    c->add_option("--qp-base", qp_base)->capture_default_str()->check(CLI::Range(encode::kMinQp, encode::kMaxQp));
    c->add_option("--bitrate", bitrate, "target kbps")->capture_default_str();
    c->add_option("--bits-per-mb", bits_per_mb, "override the per-macroblock bit budget");
    c->add_option("--encoder-template", encoder_template, "external encoder command");
    c->add_option("--work-dir", work_dir, "scratch directory for the external encoder");
    c->callback([&, this] { action = [this] { return run(); }; });
  }

  int run() {
    encode::EncodeJob job;
    job.video = media::load_y4m(video);
    job.dqp = media::read_dqp(dqp);
    job.qp_base = qp_base;
    job.target_bitrate_kbps = bitrate;
    const auto rep = bits_per_mb > 0 ? encode::mock_encode(job, bits_per_mb) : encode::mock_encode(job);
    std::cout << std::fixed << std::setprecision(3) << "total_bits " << rep.total_bits << "\nbaseline_bits "
              << rep.baseline_bits << "\nratio " << std::setprecision(6) << rep.ratio << "\nclamp_events "
              << rep.clamp_events << '\n';
    if (!encoder_template.empty()) {
      job.command_template = encoder_template;
      job.work_dir = work_dir.empty() ? fs::temp_directory_path() / "pim-encode" : fs::path(work_dir);
      std::cout << "encoded " << encode::drive_encoder(job).string() << '\n';
    }
    return 0;
  }
};

// analyze -------------------------------------------------------------------

void print_summary(std::ostream& out, const char* label, const analytics::TallySummary& s) {
  out << label << " n " << s.n << std::fixed << std::setprecision(4) << " fraction " << s.fraction
      << " halfwidth " << s.halfwidth << " preference ";
  if (s.preference) {
    out << *s.preference;
  } else {
    out << "unbounded";
  }
  out << '\n';
}

struct AnalyzeCmd {
  std::string tallies;
  bool wilson = false;

  void add(CLI::App& root, std::function<int()>& action) {
    auto* c = root.add_subcommand("analyze", "vote tallies (video_id prefer_pim prefer_base) -> summaries");
    c->add_option("tallies", tallies, "tally file")->required();
    c->add_flag("--wilson", wilson, "Wilson interval instead of Wald");
    c->callback([&, this] { action = [this] { return run(); }; });
  }

  int run() {
    const auto interval = wilson ? analytics::Interval::kWilson : analytics::Interval::kWald;
    const auto rows = analytics::read_tallies(tallies);
    for (const auto& t : rows) print_summary(std::cout, t.video_id.c_str(), analytics::tally_summary(t.votes, interval));
    const auto d = analytics::summarize_dataset(rows, interval);
    std::cout << "videos " << d.videos << " preferred " << d.videos_preferred << " fraction " << std::fixed
              << std::setprecision(4) << d.fraction_preferred << '\n';
    print_summary(std::cout, "pooled", d.pooled);
    return 0;
  }
};

// serve ---------------------------------------------------------------------

struct ServeCmd {
  service::ServiceConfig cfg;
  std::string video_dir, store_dir, host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
  bool seeded = false;
  SolverFlags solver;

  void add(CLI::App& root, std::function<int()>& action) {
    auto* c = root.add_subcommand("serve", "run the annotation HTTP service");
    c->add_option("--video-dir", video_dir, "directory of <video_id>.y4m")->required();
    c->add_option("--store-dir", store_dir, "session store")->required();
    c->add_option("--host", host)->capture_default_str();
    c->add_option("--port", port)->capture_default_str();
    c->add_option("--map-scale", cfg.map_scale)->capture_default_str();
    c->add_option("--qp-base", cfg.qp_base)->capture_default_str();
    c->add_option("--bitrate", cfg.target_bitrate_kbps)->capture_default_str();
    c->add_option("--encoder-template", cfg.encoder_template);
    auto* s = c->add_option("--seed", seed, "seed for comparison shuffles");
    solver.add(c);
    c->callback([&, this, s] {
      seeded = s->count() > 0;
      action = [this] { return run(); };
    });
  }

  int run() {
    cfg.video_dir = video_dir;
    cfg.store_dir = store_dir;
    cfg.solver = solver.cfg;
    if (seeded) cfg.seed = seed;
    service::Service svc(cfg);
    service::HttpServer http(svc);
    const int bound = port == 0 ? http.bind_any(host) : port;
    std::cout << "listening on " << host << ':' << bound << std::endl;
    const bool ok = port == 0 ? http.serve() : http.listen(host, port);
    if (!ok) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    return 0;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  struct Restore {
    std::streambuf* buf;
    ~Restore() { std::cout.rdbuf(buf); }
  } restore{old_out};

  CLI::App app{"perceptual ROI rate-control toolkit", "pim"};
  app.set_config("--config", "", "TOML/INI file supplying any flag; the command line wins");
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("-j,--jobs", jobs, "per-frame worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  std::function<int()> action;
  SolveCmd solve;
  FeaturesCmd feats;
  MetricsCmd mets;
  TrainCmd train;
  PredictCmd predict;
  EncodeCmd enc;
  AnalyzeCmd analyze;
  ServeCmd serve;
  solve.add(app, jobs, action);
  feats.add(app, jobs, action);
  mets.add(app, jobs, action);
  train.add(app, action);
  predict.add(app, jobs, action);
  enc.add(app, action);
  analyze.add(app, action);
  serve.add(app, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    return action ? action() : 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace pim::cli
