#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "pim/encode.hpp"
#include "pim/error.hpp"
#include "pim/qpsolver.hpp"
#include "support.hpp"

using namespace pim;
using namespace pim::encode;

namespace {

const std::string kStubs = PIM_STUB_DIR;

EncodeJob small_job(int frames, int fill) {
  std::mt19937_64 rng(1);
  EncodeJob job;
  for (int i = 0; i < frames; ++i) job.video.frames.push_back(pimtest::random_frame(48, 32, rng));
  job.dqp.rows = 2;
  job.dqp.cols = 3;
  job.dqp.frames.assign(frames, media::DeltaQpGrid(2, 3, fill));
  return job;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("effective qp") {
  media::DeltaQpGrid g(1, 3);
  g.cells() = {-3, 10, 0};
  auto e = effective_qp(26, g);
  CHECK(e.qp.cells() == std::vector<int>{23, 36, 26});
  CHECK(e.clamp_events == 0);
  e = effective_qp(48, g);
  CHECK(e.qp(0, 1) == 51);
  CHECK(e.clamp_events == 1);
  e = effective_qp(2, g);
  CHECK(e.qp(0, 0) == 0);
  CHECK_THROWS_AS(effective_qp(52, g), RangeError);
  CHECK_THROWS_AS(effective_qp(-1, g), RangeError);
}

TEST_CASE("property: effective qp stays in range and matches the scalar rule") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(-10, 10), b(0, 51);
  for (int trial = 0; trial < 200; ++trial) {
    media::DeltaQpGrid g(29, 50);
    for (auto& v : g) v = d(rng);
    const int base = b(rng);
    const auto e = effective_qp(base, g);
    int clamps = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int raw = base + g.cells()[i];
      clamps += raw < 0 || raw > 51;
      CHECK(e.qp.cells()[i] == std::clamp(raw, 0, 51));
    }
    CHECK(e.clamp_events == clamps);
  }
}

TEST_CASE("mock encode rate model") {
  auto job = small_job(3, 0);
  auto r = mock_encode(job, 100.0);
  CHECK(r.total_bits == doctest::Approx(3 * 6 * 100.0));
  CHECK(r.ratio == 1.0);
  CHECK(r.frame_bits.size() == 3);
  CHECK(r.effective_qp.size() == 3);

  job = small_job(2, -3);
  CHECK(mock_encode(job, 50.0).ratio == doctest::Approx(2.0).epsilon(1e-15));
  job = small_job(2, 3);
  CHECK(mock_encode(job, 50.0).ratio == doctest::Approx(0.5).epsilon(1e-15));

  job.target_bitrate_kbps = 150;
  job.video.fps = 25;
  CHECK(default_bits_per_mb(job) == doctest::Approx(150000.0 / 25 / 6));

  job.dqp.frames.pop_back();
  CHECK_THROWS_AS(mock_encode(job, 1.0), DimensionError);
  job = small_job(1, 0);
  job.dqp.cols = 4;
  CHECK_THROWS_AS(mock_encode(job, 1.0), DimensionError);
  job = small_job(1, 0);
  CHECK_THROWS_AS(mock_encode(job, 0.0), ConfigError);
}

TEST_CASE("property: solver output through the rate model stays within 6 percent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 255);
  EncodeJob job;
  job.video.frames.push_back(media::Frame(800, 450, media::ChromaFormat::k420));
  job.dqp.rows = 29;
  job.dqp.cols = 50;
  for (int trial = 0; trial < 50; ++trial) {
    MacroblockGrid<double> imp(29, 50);
    for (auto& v : imp) v = u(rng);
    job.dqp.frames = {qpsolver::solve_dqp(imp).dqp};
    const double ratio = mock_encode(job, 123.0).ratio;
    CHECK(std::abs(ratio - 1.0) <= 0.06);
  }
}

TEST_CASE("template validation and quoting") {
  CHECK_THROWS_AS(validate_template("enc {input} {output}"), ConfigError);
  CHECK_THROWS_AS(validate_template("enc {dqp} {output}"), ConfigError);
  CHECK_THROWS_AS(validate_template("enc {input} {dqp}"), ConfigError);
  CHECK_NOTHROW(validate_template("enc {input} {dqp} {output}"));
  CHECK(shell_quote("a b") == "'a b'");
  CHECK(shell_quote("it's") == "'it'\\''s'");
}

TEST_CASE("driving an external encoder") {
  pimtest::TempDir dir("encode");
  auto job = small_job(2, -1);
  job.work_dir = dir / "work dir";
  job.target_bitrate_kbps = 750;

  SUBCASE("stub copies its inputs") {
    job.command_template = "sh " + shell_quote(kStubs + "/copy_encoder.sh") + " {input} {dqp} {output} {bitrate}";
    const auto out = drive_encoder(job);
    REQUIRE(std::filesystem::exists(out));
    std::ostringstream y4m, dqp;
    media::save_y4m(job.video, y4m);
    media::write_dqp(job.dqp, dqp);
    CHECK(slurp(out) == y4m.str() + dqp.str());
    CHECK(slurp(out.string() + ".bitrate") == "750\n");
  }
  SUBCASE("non-zero exit carries stderr") {
    job.command_template = "sh " + shell_quote(kStubs + "/failing_encoder.sh") + " {input} {dqp} {output}";
    try {
      drive_encoder(job);
      FAIL("expected ProcessError");
    } catch (const ProcessError& e) {
      CHECK(e.exit_code() == 1);
      CHECK(e.stderr_text().find("encoder exploded") != std::string::npos);
    }
  }
  SUBCASE("missing output") {
    job.command_template = "sh " + shell_quote(kStubs + "/silent_encoder.sh") + " {input} {dqp} {output}";
    CHECK_THROWS_AS(drive_encoder(job), ProcessError);
  }
  SUBCASE("bad template") {
    job.command_template = "true {input} {output}";
    CHECK_THROWS_AS(drive_encoder(job), ConfigError);
  }
}
