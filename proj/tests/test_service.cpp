#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "pim/error.hpp"
#include "pim/service.hpp"
#include "support.hpp"

using namespace pim;
using namespace pim::service;
using media::ImportanceMap;

namespace {

void write_video(const std::filesystem::path& dir, const std::string& id, int w, int h, int frames) {
  std::mt19937_64 rng(5);
  media::VideoSequence v;
  for (int i = 0; i < frames; ++i) v.frames.push_back(pimtest::textured_frame(w, h, rng, 0.3 * i));
  media::save_y4m(v, dir / (id + ".y4m"));
}

struct Fixture {
  pimtest::TempDir dir{"service"};
  ServiceConfig cfg;

  Fixture() {
    std::filesystem::create_directories(dir / "videos");
    write_video(dir / "videos", "clip", 64, 32, 3);
    write_video(dir / "videos", "wide", 80, 48, 2);
    cfg.video_dir = dir / "videos";
    cfg.store_dir = dir / "store";
    cfg.map_scale = 0.5;
    cfg.seed = 17;
  }
};

int covered_pixels(const ImportanceMap& m) {
  return static_cast<int>(std::count_if(m.values().begin(), m.values().end(), [](auto v) { return v > 0; }));
}

}  // namespace

TEST_CASE("stroke saturation rules") {
  ImportanceMap m(100, 100, 0);
  const std::vector<Point> dab{{50, 50}};
  auto coarse = m;
  for (int i = 0; i < 20; ++i) coarse = apply_stroke(coarse, BrushKind::kCoarse, dab);
  CHECK(coarse(50, 50) == 127);
  auto fine = m;
  for (int i = 0; i < 10; ++i) fine = apply_stroke(fine, BrushKind::kFine, dab);
  CHECK(fine(50, 50) == 255);

  ImportanceMap at120(100, 100, 120);
  CHECK(apply_stroke(at120, BrushKind::kCoarse, dab)(50, 50) == 127);
  ImportanceMap at200(100, 100, 200);
  CHECK(apply_stroke(at200, BrushKind::kCoarse, dab)(50, 50) == 200);
  CHECK(apply_stroke(at200, BrushKind::kFine, dab)(50, 50) == 226);

  CHECK_THROWS_AS(apply_stroke(m, BrushKind::kFine, std::vector<Point>{{100, 3}}), RangeError);
  CHECK_THROWS_AS(apply_stroke(m, BrushKind::kFine, std::vector<Point>{{3, -1}}), RangeError);
}

TEST_CASE("brush footprint is a hard disc and strokes count once per pixel") {
  ImportanceMap m(100, 100, 0);
  const auto one = apply_stroke(m, BrushKind::kCoarse, std::vector<Point>{{50, 50}});
  CHECK(one(70, 50) == 26);
  CHECK(one(71, 50) == 0);
  CHECK(one(64, 64) == 26);  // 14^2 + 14^2 = 392 <= 400
  CHECK(one(65, 65) == 0);
  int disc = 0;
  for (int dy = -20; dy <= 20; ++dy) {
    for (int dx = -20; dx <= 20; ++dx) disc += dx * dx + dy * dy <= 400;
  }
  CHECK(covered_pixels(one) == disc);

  const auto line = apply_stroke(m, BrushKind::kFine, std::vector<Point>{{40, 50}, {42, 50}, {44, 50}});
  for (auto v : line.values()) CHECK((v == 0 || v == 26));
  CHECK(line(42, 50) == 26);
}

TEST_CASE("property: strokes are monotone and idempotent at saturation") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> px(0, 59), val(0, 255);
  for (int trial = 0; trial < 100; ++trial) {
    ImportanceMap m(60, 40, 0);
    for (auto& v : m.values()) v = static_cast<std::uint8_t>(val(rng));
    std::vector<Point> path;
    for (int i = 0; i < 1 + trial % 5; ++i) path.push_back({px(rng), px(rng) % 40});
    const auto kind = trial % 2 ? BrushKind::kFine : BrushKind::kCoarse;
    const auto out = apply_stroke(m, kind, path);
    for (std::size_t i = 0; i < m.values().size(); ++i) {
      CHECK(out.values()[i] >= m.values()[i]);
      CHECK(out.values()[i] <= std::max<int>(m.values()[i], brush_of(kind).cap));
    }
    auto sat = out;
    for (int i = 0; i < 12; ++i) sat = apply_stroke(sat, kind, path);
    CHECK(apply_stroke(sat, kind, path) == sat);
  }
}

TEST_CASE("coverage matches a direct count") {
  std::mt19937_64 rng(2);
  ImportanceMap m(37, 23, 0);
  for (auto& v : m.values()) v = static_cast<std::uint8_t>(rng() % 4 == 0 ? 0 : rng() % 256);
  long above0 = 0, above127 = 0;
  for (int y = 0; y < 23; ++y) {
    for (int x = 0; x < 37; ++x) {
      above0 += m(x, y) > 0;
      above127 += m(x, y) > 127;
    }
  }
  const auto c = coverage(m);
  CHECK(c.coarse == doctest::Approx(above0 / (37.0 * 23)));
  CHECK(c.fine == doctest::Approx(above127 / (37.0 * 23)));
}

TEST_CASE("session ids and resume urls") {
  CHECK(Service::session_id("ann_1", "clip-A") == "ann_1.clip-A");
  CHECK(Service::resume_url("ann_1", "clip-A") == "/resume/ann_1/clip-A");
  CHECK_THROWS_AS(Service::session_id("a.b", "clip"), FormatError);
  CHECK_THROWS_AS(Service::session_id("", "clip"), FormatError);
  CHECK_THROWS_AS(Service::resume_url("a", "../x"), FormatError);
}

TEST_CASE("opening sessions") {
  Fixture fx;
  Service svc(fx.cfg);
  const auto s = svc.open_session("ann", "wide");
  CHECK(s.id == "ann.wide");
  CHECK(s.state == SessionState::kPainting);
  REQUIRE(s.maps.size() == 2);
  CHECK(s.maps[0].width() == 40);
  CHECK(s.maps[0].height() == 24);
  CHECK(covered_pixels(s.maps[0]) == 0);
  CHECK(svc.frame_count("wide") == 2);
  CHECK(svc.frame_luma("wide", 1).width() == 80);
  CHECK_THROWS_AS(svc.frame_luma("wide", 2), NotFound);
  CHECK_THROWS_AS(svc.open_session("ann", "missing"), NotFound);
  CHECK_THROWS_AS(svc.get_session("ann.missing"), NotFound);

  fx.cfg.map_scale = 0.6;
  Service svc6(fx.cfg);
  const auto s6 = svc6.open_session("other", "wide");
  CHECK(s6.maps[0].width() == 48);
  CHECK(s6.maps[0].height() == 29);  // 28.8 rounds up
}

TEST_CASE("strokes over frame ranges") {
  Fixture fx;
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");
  Stroke st{BrushKind::kFine, 1, std::nullopt, {{5, 5}}};
  auto s = svc.add_stroke("ann.clip", st);
  CHECK(s.maps[0](5, 5) == 0);
  CHECK(s.maps[1](5, 5) == 26);
  CHECK(s.maps[2](5, 5) == 26);
  st = {BrushKind::kCoarse, 0, 0, {{20, 10}}};
  s = svc.add_stroke("ann.clip", st);
  CHECK(s.maps[0](20, 10) == 26);
  CHECK(s.maps[1](20, 10) == 0);
  CHECK(s.strokes.size() == 2);

  CHECK_THROWS_AS(svc.add_stroke("ann.clip", {BrushKind::kFine, 2, 1, {{1, 1}}}), RangeError);
  CHECK_THROWS_AS(svc.add_stroke("ann.clip", {BrushKind::kFine, 0, 3, {{1, 1}}}), RangeError);
  CHECK_THROWS_AS(svc.add_stroke("ann.clip", {BrushKind::kFine, 0, 0, {{32, 1}}}), RangeError);
  CHECK(svc.get_session("ann.clip").strokes.size() == 2);
}

TEST_CASE("replayed stroke ids are applied once") {
  Fixture fx;
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");
  Stroke st{BrushKind::kFine, 0, std::nullopt, {{5, 5}}, "s-1"};
  svc.add_stroke("ann.clip", st);
  auto s = svc.add_stroke("ann.clip", st);
  CHECK(s.strokes.size() == 1);
  CHECK(s.maps[0](5, 5) == 26);
  st.id.clear();
  svc.add_stroke("ann.clip", st);
  s = Service(fx.cfg).add_stroke("ann.clip", {BrushKind::kFine, 0, std::nullopt, {{5, 5}}, "s-1"});
  CHECK(s.strokes.size() == 2);
  CHECK(s.maps[0](5, 5) == 52);
}

TEST_CASE("previews") {
  Fixture fx;
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");

  auto p = svc.preview("ann.clip");
  REQUIRE(p.dqp.frames.size() == 3);
  CHECK(p.dqp.rows == 2);
  CHECK(p.dqp.cols == 4);
  for (const auto& g : p.dqp.frames) {
    for (int v : g) CHECK(v == 0);
  }
  CHECK(p.report.ratio == doctest::Approx(1.0));
  CHECK(std::filesystem::exists(fx.cfg.store_dir / "ann.clip" / "preview_0000.dqp"));

  // Left half important, right half not.
  ImportanceMap half(32, 16, 0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) half(x, y) = 255;
  }
  for (int f = 0; f < 3; ++f) svc.set_map("ann.clip", f, half);
  p = svc.preview("ann.clip");
  for (const auto& g : p.dqp.frames) {
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 4; ++c) CHECK(g(r, c) == (c < 2 ? -3 : 10));
    }
  }
  CHECK(p.solves[0].offset == doctest::Approx(7.2202).epsilon(1e-4));
  CHECK(p.report.ratio == doctest::Approx(1.0496).epsilon(1e-4));
  CHECK(svc.get_session("ann.clip").previews == 2);

  const auto again = svc.preview("ann.clip");
  CHECK(again.dqp == p.dqp);
  CHECK_FALSE(again.encoded.has_value());
  CHECK_THROWS_AS(svc.preview("nobody.clip"), NotFound);
  CHECK_THROWS_AS(svc.set_map("ann.clip", 0, ImportanceMap(31, 16, 0)), DimensionError);
}

TEST_CASE("previews through an external encoder") {
  Fixture fx;
  fx.cfg.encoder_template = std::string("sh ") + encode::shell_quote(std::string(PIM_STUB_DIR) + "/copy_encoder.sh") +
                            " {input} {dqp} {output}";
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");
  const auto p = svc.preview("ann.clip");
  REQUIRE(p.encoded.has_value());
  CHECK(std::filesystem::file_size(*p.encoded) > 0);

  fx.cfg.encoder_template = "enc {input} {output}";
  CHECK_THROWS_AS(Service{fx.cfg}, ConfigError);
}

TEST_CASE("comparison gate") {
  Fixture fx;
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");
  const std::string id = "ann.clip";

  SUBCASE("choosing the PIM side accepts") {
    const auto t = svc.start_comparison(id);
    CHECK(t.shuffle_key.size() == 32);
    CHECK(svc.get_session(id).state == SessionState::kComparing);
    CHECK_THROWS_AS(svc.add_stroke(id, {BrushKind::kFine, 0, std::nullopt, {{1, 1}}}), StateError);
    CHECK_THROWS_AS(svc.preview(id), StateError);
    CHECK_THROWS_AS(svc.start_comparison(id), StateError);
    CHECK_THROWS_AS(svc.submit_comparison(id, 'A', "deadbeef"), StateError);
    const auto v = svc.submit_comparison(id, t.pim_side, t.shuffle_key);
    CHECK(v.accepted);
    CHECK(svc.get_session(id).state == SessionState::kAccepted);
    CHECK_THROWS_AS(svc.submit_comparison(id, t.pim_side, t.shuffle_key), StateError);
    CHECK_THROWS_AS(svc.preview(id), StateError);
    // Further painting reopens the session.
    CHECK(svc.add_stroke(id, {BrushKind::kFine, 0, std::nullopt, {{1, 1}}}).state == SessionState::kPainting);
  }
  SUBCASE("choosing the baseline side rejects and returns to painting") {
    const auto t = svc.start_comparison(id);
    const char other = t.pim_side == 'A' ? 'B' : 'A';
    const auto v = svc.submit_comparison(id, other, t.shuffle_key);
    CHECK_FALSE(v.accepted);
    const auto s = svc.get_session(id);
    CHECK(s.state == SessionState::kPainting);
    REQUIRE(s.verdicts.size() == 1);
    CHECK_FALSE(s.verdicts[0].accepted);
    CHECK_THROWS_AS(svc.submit_comparison(id, other, t.shuffle_key), StateError);
  }
  SUBCASE("bad choice") {
    const auto t = svc.start_comparison(id);
    CHECK_THROWS_AS(svc.submit_comparison(id, 'C', t.shuffle_key), FormatError);
  }
}

TEST_CASE("shuffle assignment uses both sides") {
  Fixture fx;
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");
  int a = 0;
  std::set<std::string> keys;
  for (int i = 0; i < 40; ++i) {
    const auto t = svc.start_comparison("ann.clip");
    keys.insert(t.shuffle_key);
    a += t.pim_side == 'A';
    svc.submit_comparison("ann.clip", t.pim_side == 'A' ? 'B' : 'A', t.shuffle_key);
  }
  CHECK(keys.size() == 40);
  CHECK(a > 5);
  CHECK(a < 35);
}

TEST_CASE("persistence across restarts") {
  Fixture fx;
  std::string key;
  char pim_side = 'A';
  {
    Service svc(fx.cfg);
    svc.open_session("ann", "clip");
    svc.open_session("bob", "clip");
    svc.add_stroke("ann.clip", {BrushKind::kCoarse, 0, std::nullopt, {{10, 8}, {12, 8}}});
    svc.add_stroke("ann.clip", {BrushKind::kFine, 2, 2, {{3, 3}}});
    svc.preview("ann.clip");
    const auto t = svc.start_comparison("ann.clip");
    key = t.shuffle_key;
    pim_side = t.pim_side;
  }
  Service svc(fx.cfg);
  auto s = svc.get_session("ann.clip");
  CHECK(s.state == SessionState::kComparing);
  CHECK(s.strokes.size() == 2);
  CHECK(s.strokes[1].last_frame == 2);
  CHECK(s.previews == 1);
  CHECK(s.maps[0](10, 8) == 26);
  CHECK(s.maps[2](3, 3) == 52);  // coarse pass plus fine pass
  CHECK(s.maps[1](3, 3) == 26);
  CHECK(covered_pixels(svc.get_session("bob.clip").maps[0]) == 0);
  CHECK(svc.open_session("ann", "clip").maps == s.maps);

  CHECK(svc.submit_comparison("ann.clip", pim_side, key).accepted);
  Service again(fx.cfg);
  s = again.get_session("ann.clip");
  CHECK(s.state == SessionState::kAccepted);
  REQUIRE(s.verdicts.size() == 1);
  CHECK(s.verdicts[0].choice == s.verdicts[0].pim_side);
  CHECK(s.verdicts[0].accepted);
}

TEST_CASE("corrupt store entries are reported") {
  Fixture fx;
  {
    Service svc(fx.cfg);
    svc.open_session("ann", "clip");
  }
  std::ofstream(fx.cfg.store_dir / "ann.clip" / "session.json") << "{\"id\": \"ann.clip\", \"state\": ";
  Service svc(fx.cfg);
  CHECK_THROWS_AS(svc.get_session("ann.clip"), FormatError);
}

TEST_CASE("concurrent strokes on one session are serialized") {
  Fixture fx;
  Service svc(fx.cfg);
  svc.open_session("ann", "clip");
  svc.open_session("bob", "clip");
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&, t] {
      const std::string id = t % 2 ? "bob.clip" : "ann.clip";
      for (int i = 0; i < 5; ++i) svc.add_stroke(id, {BrushKind::kFine, 0, 0, {{t * 7, 2}}});
    });
  }
  for (auto& th : pool) th.join();
  CHECK(svc.get_session("ann.clip").strokes.size() == 10);
  CHECK(svc.get_session("bob.clip").strokes.size() == 10);
  CHECK(svc.get_session("ann.clip").maps[0](0, 2) == 130);
  CHECK(Service(fx.cfg).get_session("bob.clip").strokes.size() == 10);
}
