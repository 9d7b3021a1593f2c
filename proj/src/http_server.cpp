#include <charconv>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "pim/service.hpp"

namespace pim::service {
namespace {

using nlohmann::json;

json session_view(const Session& s) {
  json coverage_list = json::array();
  for (const auto& m : s.maps) {
    const auto c = coverage(m);
    coverage_list.push_back({{"coarse", c.coarse}, {"fine", c.fine}});
  }
  json verdicts = json::array();
  for (const auto& v : s.verdicts) {
    verdicts.push_back({{"choice", std::string(1, v.choice)}, {"accepted", v.accepted}});
  }
  return {{"id", s.id},
          {"annotator", s.annotator},
          {"video_id", s.video_id},
          {"state", state_name(s.state)},
          {"frames", s.maps.size()},
          {"video_width", s.video_width},
          {"video_height", s.video_height},
          {"map_width", s.maps.empty() ? 0 : s.maps.front().width()},
          {"map_height", s.maps.empty() ? 0 : s.maps.front().height()},
          {"strokes", s.strokes.size()},
          {"verdicts", verdicts},
          {"coverage", coverage_list},
          {"resume_url", Service::resume_url(s.annotator, s.video_id)}};
}

json preview_view(const PreviewResult& p) {
  json frames = json::array();
  for (std::size_t f = 0; f < p.dqp.frames.size(); ++f) {
    const auto& g = p.dqp.frames[f];
    json rows = json::array();
    for (int r = 0; r < g.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < g.cols(); ++c) row.push_back(g(r, c));
      rows.push_back(row);
    }
    const auto& rep = p.solves[f];
    frames.push_back({{"offset", rep.offset},
                      {"real_ratio", rep.real_ratio},
                      {"rounded_ratio", rep.rounded_ratio},
                      {"iterations", rep.iterations},
                      {"dqp", rows}});
  }
  return {{"ratio", p.report.ratio},
          {"total_bits", p.report.total_bits},
          {"baseline_bits", p.report.baseline_bits},
          {"clamp_events", p.report.clamp_events},
          {"encoded", p.encoded ? json(p.encoded->string()) : json(nullptr)},
          {"frames", frames}};
}

Stroke parse_stroke(const json& j) {
  Stroke s;
  const auto brush = j.at("brush").get<std::string>();
  if (brush == "coarse") {
    s.brush = BrushKind::kCoarse;
  } else if (brush == "fine") {
    s.brush = BrushKind::kFine;
  } else {
    throw FormatError("unknown brush '" + brush + "'");
  }
  s.first_frame = j.value("first_frame", 0);
  if (j.contains("last_frame") && !j.at("last_frame").is_null()) s.last_frame = j.at("last_frame").get<int>();
  for (const auto& p : j.at("path")) {
    if (p.is_array()) {
      s.path.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    } else {
      s.path.push_back({p.at("x").get<int>(), p.at("y").get<int>()});
    }
  }
  if (s.path.empty()) throw FormatError("stroke path is empty");
  s.id = j.value("stroke_id", "");
  return s;
}

int parse_index(const std::string& text) {
  int v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size() || v < 0) {
    throw FormatError("bad frame index '" + text + "'");
  }
  return v;
}

std::string pgm_bytes(const media::ImportanceMap& m) {
  std::ostringstream out;
  media::save_pgm(m, out);
  return out.str();
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFound& e) {
      send_json(res, {{"error", e.what()}}, 404);
    } catch (const StateError& e) {
      send_json(res, {{"error", e.what()}}, 409);
    } catch (const json::exception& e) {
      send_json(res, {{"error", std::string("bad request body: ") + e.what()}}, 400);
    } catch (const FormatError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const RangeError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const DimensionError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const ConfigError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(Service& s) : service(s) { routes(); }

  void routes() {
    srv.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto body = json::parse(req.body);
               const auto s = service.open_session(body.at("annotator").get<std::string>(),
                                                   body.at("video").get<std::string>());
               send_json(res, session_view(s));
             }));

    srv.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto s = service.get_session(req.matches[1]);
              if (req.has_param("map")) {
                const int n = parse_index(req.get_param_value("map"));
                if (n >= static_cast<int>(s.maps.size())) throw NotFound("frame out of range");
                res.set_content(pgm_bytes(s.maps[n]), "image/x-portable-graymap");
                return;
              }
              send_json(res, session_view(s));
            }));

    srv.Get(R"(/videos/([^/]+)/frame/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto luma = service.frame_luma(req.matches[1], parse_index(req.matches[2]));
              res.set_content(pgm_bytes(luma), "image/x-portable-graymap");
            }));

    srv.Post(R"(/sessions/([^/]+)/strokes)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto s = service.add_stroke(req.matches[1], parse_stroke(json::parse(req.body)));
               send_json(res, session_view(s));
             }));

    srv.Post(R"(/sessions/([^/]+)/preview)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, preview_view(service.preview(req.matches[1])));
             }));

    srv.Post(R"(/sessions/([^/]+)/comparison)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto body = json::parse(req.body);
               const std::string id = req.matches[1];
               if (body.value("action", "") == "start") {
                 const auto ticket = service.start_comparison(id);
                 const bool pim_a = ticket.pim_side == 'A';
                 send_json(res, {{"shuffle_key", ticket.shuffle_key},
                                 {"state", "comparing"},
                                 {"sides", {{"A", pim_a ? "pim" : "baseline"}, {"B", pim_a ? "baseline" : "pim"}}}});
                 return;
               }
               const auto choice = body.at("choice").get<std::string>();
               if (choice.size() != 1) throw FormatError("comparison choice must be A or B");
               const auto v = service.submit_comparison(id, choice[0], body.at("shuffle_key").get<std::string>());
               const auto s = service.get_session(id);
               send_json(res, {{"accepted", v.accepted}, {"state", state_name(s.state)}});
             }));

    srv.Get(R"(/resume/([^/]+)/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto s = service.get_session(Service::session_id(req.matches[1], req.matches[2]));
              send_json(res, session_view(s));
            }));
  }

  Service& service;
  httplib::Server srv;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->srv.listen(host, port); }
int HttpServer::bind_any(const std::string& host) { return impl_->srv.bind_to_any_port(host); }
bool HttpServer::serve() { return impl_->srv.listen_after_bind(); }
void HttpServer::stop() { impl_->srv.stop(); }
void HttpServer::wait_until_ready() const { impl_->srv.wait_until_ready(); }

}  // namespace pim::service
