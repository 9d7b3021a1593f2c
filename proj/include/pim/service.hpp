#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pim/encode.hpp"
#include "pim/media.hpp"
#include "pim/qpsolver.hpp"

namespace pim::service {

enum class BrushKind { kCoarse, kFine };

struct Brush {
  int width;     // disc diameter in map pixels
  std::uint8_t cap;
};

inline constexpr Brush kCoarseBrush{40, 127};
inline constexpr Brush kFineBrush{20, 255};
inline constexpr int kStrokeIncrement = 26;

const Brush& brush_of(BrushKind kind);

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// One pass of a brush along a path: every pixel inside the union of discs
/// gains kStrokeIncrement once, saturating at the brush cap. Pixels already
/// above the cap are left alone.
media::ImportanceMap apply_stroke(const media::ImportanceMap& map, BrushKind brush,
                                  std::span<const Point> path);

struct Stroke {
  BrushKind brush = BrushKind::kCoarse;
  int first_frame = 0;
  std::optional<int> last_frame;  // inclusive; defaults to the final frame
  std::vector<Point> path;
  std::string id;  // client-chosen; a repeated non-empty id is ignored
};

enum class SessionState { kPainting, kComparing, kAccepted, kRejected };

const char* state_name(SessionState s);

struct Verdict {
  std::string shuffle_key;
  char choice = 'A';
  char pim_side = 'A';
  bool accepted = false;
};

struct Session {
  std::string id;
  std::string annotator;
  std::string video_id;
  SessionState state = SessionState::kPainting;
  int video_width = 0;
  int video_height = 0;
  std::vector<media::ImportanceMap> maps;  // one per frame
  std::vector<Stroke> strokes;
  std::vector<Verdict> verdicts;
  std::optional<std::string> pending_key;
  char pending_pim_side = 'A';
  int previews = 0;
};

struct Coverage {
  double coarse = 0.0;  // fraction of pixels above 0
  double fine = 0.0;    // fraction of pixels above 127
};

Coverage coverage(const media::ImportanceMap& map);

struct ServiceConfig {
  std::filesystem::path video_dir;  // <video_id>.y4m
  std::filesystem::path store_dir;
  double map_scale = 0.6;           // map pixels per video pixel (270x480 for 450x800)
  qpsolver::SolverConfig solver;
  int qp_base = 26;
  double target_bitrate_kbps = 500.0;
  std::string encoder_template;     // empty: mock encoder only
  std::optional<std::uint64_t> seed;  // shuffle keys; random when unset
};

struct PreviewResult {
  media::DqpSidecar dqp;
  std::vector<qpsolver::SolveReport> solves;
  encode::EncodeReport report;
  std::optional<std::filesystem::path> encoded;
};

struct ComparisonTicket {
  std::string shuffle_key;
  char pim_side = 'A';  // where the client plays the PIM encode
};

class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  /// Creates the session for (annotator, video) or returns the existing one.
  Session open_session(const std::string& annotator, const std::string& video_id);
  Session get_session(const std::string& session_id);
  Session add_stroke(const std::string& session_id, const Stroke& stroke);
  PreviewResult preview(const std::string& session_id);
  ComparisonTicket start_comparison(const std::string& session_id);
  Verdict submit_comparison(const std::string& session_id, char choice, const std::string& shuffle_key);

  /// Replaces a working map wholesale (used by tooling and tests).
  Session set_map(const std::string& session_id, int frame, const media::ImportanceMap& map);

  media::ImportanceMap frame_luma(const std::string& video_id, int frame);
  int frame_count(const std::string& video_id);

  static std::string session_id(const std::string& annotator, const std::string& video_id);
  static std::string resume_url(const std::string& annotator, const std::string& video_id);

 private:
  struct Entry {
    std::mutex mutex;
    std::optional<Session> session;
  };

  std::shared_ptr<Entry> entry(const std::string& session_id);
  Session& loaded(Entry& e, const std::string& session_id);
  std::shared_ptr<const media::VideoSequence> video(const std::string& video_id);
  void persist(const Session& s);
  std::optional<Session> restore(const std::string& session_id);
  std::string new_key();

  ServiceConfig cfg_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex video_mutex_;
  std::map<std::string, std::shared_ptr<const media::VideoSequence>> videos_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

/// HTTP front end over a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves until stop(); blocks.
  bool listen(const std::string& host, int port);
  /// Binds to an ephemeral port and returns it; call serve() afterwards.
  int bind_any(const std::string& host);
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pim::service
