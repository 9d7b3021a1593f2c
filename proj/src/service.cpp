#include "pim/service.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "pim/gridmap.hpp"

namespace pim::service {
namespace {

using nlohmann::json;

bool valid_id(const std::string& s) {
  if (s.empty() || s.size() > 128) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

const char* brush_name(BrushKind b) { return b == BrushKind::kCoarse ? "coarse" : "fine"; }

BrushKind parse_brush(const std::string& s) {
  if (s == "coarse") return BrushKind::kCoarse;
  if (s == "fine") return BrushKind::kFine;
  throw FormatError("unknown brush '" + s + "'");
}

SessionState parse_state(const std::string& s) {
  for (auto st : {SessionState::kPainting, SessionState::kComparing, SessionState::kAccepted,
                  SessionState::kRejected}) {
    if (s == state_name(st)) return st;
  }
  throw FormatError("unknown session state '" + s + "'");
}

json session_to_json(const Session& s) {
  json strokes = json::array();
  for (const auto& st : s.strokes) {
    json path = json::array();
    for (const auto& p : st.path) path.push_back({p.x, p.y});
    strokes.push_back({{"brush", brush_name(st.brush)},
                       {"first_frame", st.first_frame},
                       {"last_frame", st.last_frame ? json(*st.last_frame) : json(nullptr)},
                       {"path", path},
                       {"id", st.id}});
  }
  json verdicts = json::array();
  for (const auto& v : s.verdicts) {
    verdicts.push_back({{"shuffle_key", v.shuffle_key},
                        {"choice", std::string(1, v.choice)},
                        {"pim_side", std::string(1, v.pim_side)},
                        {"accepted", v.accepted}});
  }
  json pending = nullptr;
  if (s.pending_key) pending = {{"key", *s.pending_key}, {"pim_side", std::string(1, s.pending_pim_side)}};
  return {{"version", 1},
          {"id", s.id},
          {"annotator", s.annotator},
          {"video_id", s.video_id},
          {"state", state_name(s.state)},
          {"video_width", s.video_width},
          {"video_height", s.video_height},
          {"frames", s.maps.size()},
          {"strokes", strokes},
          {"verdicts", verdicts},
          {"pending", pending},
          {"previews", s.previews}};
}

std::filesystem::path map_file(const std::filesystem::path& dir, std::size_t frame) {
  std::ostringstream name;
  name << "map_" << std::setw(5) << std::setfill('0') << frame << ".pgm";
  return dir / name.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << bytes;
    out.flush();
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

char side_of(char c) {
  if (c == 'A' || c == 'a') return 'A';
  if (c == 'B' || c == 'b') return 'B';
  throw FormatError("comparison choice must be A or B");
}

}  // namespace

const Brush& brush_of(BrushKind kind) { return kind == BrushKind::kCoarse ? kCoarseBrush : kFineBrush; }

const char* state_name(SessionState s) {
  switch (s) {
    case SessionState::kPainting: return "painting";
    case SessionState::kComparing: return "comparing";
    case SessionState::kAccepted: return "accepted";
    case SessionState::kRejected: return "rejected";
  }
  return "?";
}

media::ImportanceMap apply_stroke(const media::ImportanceMap& map, BrushKind kind,
                                  std::span<const Point> path) {
  const Brush& brush = brush_of(kind);
  for (const auto& p : path) {
    if (p.x < 0 || p.y < 0 || p.x >= map.width() || p.y >= map.height()) {
      throw RangeError("stroke point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                       ") outside the map");
    }
  }
  const int radius = brush.width / 2;
  std::vector<bool> covered(map.values().size(), false);
  for (const auto& p : path) {
    for (int y = std::max(0, p.y - radius); y <= std::min(map.height() - 1, p.y + radius); ++y) {
      for (int x = std::max(0, p.x - radius); x <= std::min(map.width() - 1, p.x + radius); ++x) {
        const int dx = x - p.x, dy = y - p.y;
        if (dx * dx + dy * dy <= radius * radius) covered[static_cast<std::size_t>(y) * map.width() + x] = true;
      }
    }
  }
  media::ImportanceMap out = map;
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (!covered[i]) continue;
    const int v = out.values()[i];
    const int raised = std::min<int>(brush.cap, v + kStrokeIncrement);
    out.values()[i] = static_cast<std::uint8_t>(std::max(v, raised));
  }
  return out;
}

Coverage coverage(const media::ImportanceMap& map) {
  const auto& v = map.values();
  const double n = static_cast<double>(v.size());
  const auto coarse = std::count_if(v.begin(), v.end(), [](std::uint8_t x) { return x > 0; });
  const auto fine = std::count_if(v.begin(), v.end(), [](std::uint8_t x) { return x > 127; });
  return {static_cast<double>(coarse) / n, static_cast<double>(fine) / n};
}

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.solver.validate();
  if (!(cfg_.map_scale > 0.0)) throw ConfigError("map scale must be positive");
  if (!cfg_.encoder_template.empty()) encode::validate_template(cfg_.encoder_template);
  std::filesystem::create_directories(cfg_.store_dir);
  rng_.seed(cfg_.seed ? *cfg_.seed : std::random_device{}());
}

Service::~Service() = default;

std::string Service::session_id(const std::string& annotator, const std::string& video_id) {
  if (!valid_id(annotator) || !valid_id(video_id)) {
    throw FormatError("annotator and video ids must match [A-Za-z0-9_-]+");
  }
  return annotator + "." + video_id;
}

std::string Service::resume_url(const std::string& annotator, const std::string& video_id) {
  session_id(annotator, video_id);
  return "/resume/" + annotator + "/" + video_id;
}

std::shared_ptr<const media::VideoSequence> Service::video(const std::string& video_id) {
  if (!valid_id(video_id)) throw NotFound("unknown video '" + video_id + "'");
  std::lock_guard lock(video_mutex_);
  if (auto it = videos_.find(video_id); it != videos_.end()) return it->second;
  const auto path = cfg_.video_dir / (video_id + ".y4m");
  if (!std::filesystem::exists(path)) throw NotFound("unknown video '" + video_id + "'");
  auto v = std::make_shared<const media::VideoSequence>(media::load_y4m(path));
  if (v->frames.empty()) throw FormatError("video '" + video_id + "' has no frames");
  videos_[video_id] = v;
  return v;
}

int Service::frame_count(const std::string& video_id) {
  return static_cast<int>(video(video_id)->frames.size());
}

media::ImportanceMap Service::frame_luma(const std::string& video_id, int frame) {
  auto v = video(video_id);
  if (frame < 0 || frame >= static_cast<int>(v->frames.size())) throw NotFound("frame out of range");
  return media::luma_image(v->frames[frame]);
}

std::shared_ptr<Service::Entry> Service::entry(const std::string& session_id) {
  std::lock_guard lock(registry_mutex_);
  auto& e = sessions_[session_id];
  if (!e) e = std::make_shared<Entry>();
  return e;
}

Session& Service::loaded(Entry& e, const std::string& session_id) {
  if (!e.session) {
    e.session = restore(session_id);
    if (!e.session) throw NotFound("session '" + session_id + "' not found");
  }
  return *e.session;
}

void Service::persist(const Session& s) {
  const auto dir = cfg_.store_dir / s.id;
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < s.maps.size(); ++f) {
    std::ostringstream pgm;
    media::save_pgm(s.maps[f], pgm);
    write_atomic(map_file(dir, f), pgm.str());
  }
  write_atomic(dir / "session.json", session_to_json(s).dump(1));
}

std::optional<Session> Service::restore(const std::string& session_id) {
  const auto dir = cfg_.store_dir / session_id;
  const auto meta = dir / "session.json";
  if (!std::filesystem::exists(meta)) return std::nullopt;
  try {
    std::ifstream in(meta);
    const json j = json::parse(in);
    Session s;
    s.id = j.at("id").get<std::string>();
    if (s.id != session_id) throw FormatError("session id mismatch");
    s.annotator = j.at("annotator").get<std::string>();
    s.video_id = j.at("video_id").get<std::string>();
    s.state = parse_state(j.at("state").get<std::string>());
    s.video_width = j.at("video_width").get<int>();
    s.video_height = j.at("video_height").get<int>();
    s.previews = j.at("previews").get<int>();
    const auto frames = j.at("frames").get<std::size_t>();
    for (std::size_t f = 0; f < frames; ++f) s.maps.push_back(media::load_pgm(map_file(dir, f)));
    for (const auto& st : j.at("strokes")) {
      Stroke stroke;
      stroke.brush = parse_brush(st.at("brush").get<std::string>());
      stroke.first_frame = st.at("first_frame").get<int>();
      if (!st.at("last_frame").is_null()) stroke.last_frame = st.at("last_frame").get<int>();
      for (const auto& p : st.at("path")) stroke.path.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      stroke.id = st.value("id", "");
      s.strokes.push_back(std::move(stroke));
    }
    for (const auto& v : j.at("verdicts")) {
      s.verdicts.push_back({v.at("shuffle_key").get<std::string>(), v.at("choice").get<std::string>().at(0),
                            v.at("pim_side").get<std::string>().at(0), v.at("accepted").get<bool>()});
    }
    if (!j.at("pending").is_null()) {
      s.pending_key = j.at("pending").at("key").get<std::string>();
      s.pending_pim_side = j.at("pending").at("pim_side").get<std::string>().at(0);
    }
    return s;
  } catch (const json::exception& ex) {
    throw FormatError("corrupt store entry '" + session_id + "': " + ex.what());
  } catch (const Error& ex) {
    throw FormatError("corrupt store entry '" + session_id + "': " + ex.what());
  }
}

Session Service::open_session(const std::string& annotator, const std::string& video_id) {
  const std::string id = session_id(annotator, video_id);
  auto v = video(video_id);
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  if (!e->session) e->session = restore(id);
  if (!e->session) {
    Session s;
    s.id = id;
    s.annotator = annotator;
    s.video_id = video_id;
    s.video_width = v->width();
    s.video_height = v->height();
    const int mw = std::max(1, static_cast<int>(gridmap::round_half_away(v->width() * cfg_.map_scale)));
    const int mh = std::max(1, static_cast<int>(gridmap::round_half_away(v->height() * cfg_.map_scale)));
    s.maps.assign(v->frames.size(), media::ImportanceMap(mw, mh, 0));
    persist(s);
    e->session = std::move(s);
  }
  return *e->session;
}

Session Service::get_session(const std::string& session_id) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  return loaded(*e, session_id);
}

Session Service::add_stroke(const std::string& session_id, const Stroke& stroke) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  Session& s = loaded(*e, session_id);
  if (!stroke.id.empty() &&
      std::any_of(s.strokes.begin(), s.strokes.end(), [&](const Stroke& o) { return o.id == stroke.id; })) {
    return s;
  }
  if (s.state == SessionState::kComparing) throw StateError("session is comparing; submit the comparison first");
  const int frames = static_cast<int>(s.maps.size());
  const int last = stroke.last_frame.value_or(frames - 1);
  if (stroke.first_frame < 0 || stroke.first_frame > last || last >= frames) {
    throw RangeError("stroke frame range outside the video");
  }
  std::vector<media::ImportanceMap> updated(s.maps.begin() + stroke.first_frame, s.maps.begin() + last + 1);
  for (auto& m : updated) m = apply_stroke(m, stroke.brush, stroke.path);
  std::copy(updated.begin(), updated.end(), s.maps.begin() + stroke.first_frame);
  s.strokes.push_back(stroke);
  s.state = SessionState::kPainting;
  persist(s);
  return s;
}

Session Service::set_map(const std::string& session_id, int frame, const media::ImportanceMap& map) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  Session& s = loaded(*e, session_id);
  if (frame < 0 || frame >= static_cast<int>(s.maps.size())) throw RangeError("frame out of range");
  if (map.width() != s.maps[frame].width() || map.height() != s.maps[frame].height()) {
    throw DimensionError("replacement map has the wrong dimensions");
  }
  if (s.state == SessionState::kComparing) throw StateError("session is comparing");
  s.maps[frame] = map;
  s.state = SessionState::kPainting;
  persist(s);
  return s;
}

PreviewResult Service::preview(const std::string& session_id) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  Session& s = loaded(*e, session_id);
  if (s.state != SessionState::kPainting) {
    throw StateError(std::string("preview needs a painting session, state is ") + state_name(s.state));
  }
  auto v = video(s.video_id);

  PreviewResult result;
  result.dqp.rows = static_cast<std::uint32_t>(mb_count(s.video_height));
  result.dqp.cols = static_cast<std::uint32_t>(mb_count(s.video_width));
  for (const auto& map : s.maps) {
    const auto pooled = gridmap::pool_to_grid(map, s.video_width, s.video_height);
    auto solved = qpsolver::solve_dqp(pooled, cfg_.solver);
    result.dqp.frames.push_back(std::move(solved.dqp));
    result.solves.push_back(solved.report);
  }

  encode::EncodeJob job;
  job.video = *v;
  job.dqp = result.dqp;
  job.target_bitrate_kbps = cfg_.target_bitrate_kbps;
  job.qp_base = cfg_.qp_base;
  result.report = encode::mock_encode(job);
  if (!cfg_.encoder_template.empty()) {
    job.command_template = cfg_.encoder_template;
    job.work_dir = cfg_.store_dir / s.id / ("encode_" + std::to_string(s.previews));
    result.encoded = encode::drive_encoder(job);
  }

  std::ostringstream name;
  name << "preview_" << std::setw(4) << std::setfill('0') << s.previews << ".dqp";
  media::write_dqp(result.dqp, cfg_.store_dir / s.id / name.str());
  ++s.previews;
  persist(s);
  return result;
}

std::string Service::new_key() {
  std::lock_guard lock(rng_mutex_);
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << rng_() << std::setw(16) << rng_();
  return out.str();
}

ComparisonTicket Service::start_comparison(const std::string& session_id) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  Session& s = loaded(*e, session_id);
  if (s.state != SessionState::kPainting) {
    throw StateError(std::string("comparison needs a painting session, state is ") + state_name(s.state));
  }
  const std::string key = new_key();
  s.pending_key = key;
  {
    std::lock_guard rl(rng_mutex_);
    s.pending_pim_side = (rng_() & 1) ? 'B' : 'A';
  }
  s.state = SessionState::kComparing;
  persist(s);
  return {key, s.pending_pim_side};
}

Verdict Service::submit_comparison(const std::string& session_id, char choice, const std::string& shuffle_key) {
  const char side = side_of(choice);
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  Session& s = loaded(*e, session_id);
  if (s.state != SessionState::kComparing) {
    throw StateError(std::string("no comparison in progress, state is ") + state_name(s.state));
  }
  if (!s.pending_key || *s.pending_key != shuffle_key) throw StateError("unknown shuffle key");
  Verdict v{shuffle_key, side, s.pending_pim_side, side == s.pending_pim_side};
  s.verdicts.push_back(v);
  s.pending_key.reset();
  // A rejected annotation goes straight back to painting.
  s.state = v.accepted ? SessionState::kAccepted : SessionState::kPainting;
  persist(s);
  return v;
}

}  // namespace pim::service
