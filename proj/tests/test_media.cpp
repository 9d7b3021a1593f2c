#include <doctest.h>

#include <random>
#include <sstream>

#include "pim/error.hpp"
#include "pim/media.hpp"
#include "support.hpp"

using namespace pim;
using namespace pim::media;

namespace {

std::string y4m_bytes(const std::string& header, std::size_t payload, std::size_t frames = 1) {
  std::string s = header + "\n";
  for (std::size_t f = 0; f < frames; ++f) {
    s += "FRAME\n";
    for (std::size_t i = 0; i < payload; ++i) s += static_cast<char>((i * 7 + f) & 0xff);
  }
  return s;
}

}  // namespace

TEST_CASE("y4m: minimal 16x16 C420 frame") {
  std::istringstream in(y4m_bytes("YUV4MPEG2 W16 H16 F25:1", 384));
  const auto v = load_y4m(in);
  CHECK(v.frames.size() == 1);
  CHECK(v.width() == 16);
  CHECK(v.height() == 16);
  CHECK(v.fps == doctest::Approx(25.0));
  CHECK(v.frames[0].u().size() == 64);
}

TEST_CASE("y4m: header errors") {
  std::istringstream empty("");
  CHECK_THROWS_WITH_AS(load_y4m(empty), doctest::Contains("malformed header"), FormatError);
  std::istringstream trunc(y4m_bytes("YUV4MPEG2 W16 H16 F25:1", 100));
  CHECK_THROWS_WITH_AS(load_y4m(trunc), doctest::Contains("truncated frame payload"), FormatError);
  std::istringstream mono(y4m_bytes("YUV4MPEG2 W16 H16 F25:1 Cmono", 256));
  CHECK_THROWS_WITH_AS(load_y4m(mono), doctest::Contains("unsupported color space"), FormatError);
  std::istringstream nof(y4m_bytes("YUV4MPEG2 W16 H16", 384));
  CHECK_THROWS_AS(load_y4m(nof), FormatError);
}

TEST_CASE("y4m: 800x450 two frames, odd chroma rounding and 444") {
  const std::size_t per = 800 * 450 * 3 / 2;
  std::istringstream in(y4m_bytes("YUV4MPEG2 W800 H450 F30000:1001 Ip A1:1 C420jpeg", per, 2));
  const auto v = load_y4m(in);
  CHECK(v.frames.size() == 2);
  CHECK(v.width() == 800);
  CHECK(v.height() == 450);
  CHECK(v.frames[0].payload_size() == per);
  CHECK(v.fps == doctest::Approx(29.97).epsilon(1e-3));

  std::mt19937_64 rng(3);
  VideoSequence odd{{pimtest::random_frame(17, 9, rng), pimtest::random_frame(17, 9, rng)}, 24, 24, 1};
  CHECK(odd.frames[0].chroma_width() == 9);
  CHECK(odd.frames[0].chroma_height() == 5);
  std::stringstream buf;
  save_y4m(odd, buf);
  CHECK(load_y4m(buf).frames == odd.frames);

  VideoSequence full{{pimtest::random_frame(8, 8, rng, ChromaFormat::k444)}, 50, 50, 1};
  std::stringstream b2;
  save_y4m(full, b2);
  const auto back = load_y4m(b2);
  CHECK(back.frames == full.frames);
  CHECK(back.frames[0].format() == ChromaFormat::k444);
}

TEST_CASE("pgm: parse, roundtrip, errors") {
  std::istringstream in(std::string("P5 2 2 255\n") + std::string("\x00\x80\xff\x40", 4));
  const auto m = load_pgm(in);
  CHECK(m.width() == 2);
  CHECK(m.values() == std::vector<std::uint8_t>{0, 128, 255, 64});

  std::mt19937_64 rng(11);
  ImportanceMap big(480, 270);
  for (auto& v : big.values()) v = static_cast<std::uint8_t>(rng());
  std::stringstream buf;
  save_pgm(big, buf);
  const std::string bytes = buf.str();
  const auto back = load_pgm(buf);
  CHECK(back == big);
  std::stringstream again;
  save_pgm(back, again);
  CHECK(again.str() == bytes);

  std::istringstream deep("P5 2 2 65535\n12345678");
  CHECK_THROWS_WITH_AS(load_pgm(deep), doctest::Contains("maxval != 255"), FormatError);
  std::istringstream ascii("P2 2 2 255\n0 0 0 0");
  CHECK_THROWS_AS(load_pgm(ascii), FormatError);
  std::istringstream shorty("P5 2 2 255\n\x01\x02");
  CHECK_THROWS_WITH_AS(load_pgm(shorty), doctest::Contains("payload size mismatch"), FormatError);
  std::istringstream commented("P5\n# comment\n2 1\n255\nab");
  CHECK(load_pgm(commented).values() == std::vector<std::uint8_t>{'a', 'b'});
}

TEST_CASE("dqp: size, roundtrip, range and framing errors") {
  DqpSidecar s{29, 50, {DeltaQpGrid(29, 50, 0)}};
  std::stringstream buf;
  write_dqp(s, buf);
  CHECK(buf.str().size() == 16 + 1450);
  CHECK(read_dqp(buf) == s);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(-10, 10);
  DqpSidecar r{7, 9, {}};
  for (int f = 0; f < 4; ++f) {
    DeltaQpGrid g(7, 9);
    for (auto& v : g) v = d(rng);
    r.frames.push_back(g);
  }
  std::stringstream b2;
  write_dqp(r, b2);
  CHECK(read_dqp(b2) == r);

  DqpSidecar bad{1, 1, {DeltaQpGrid(1, 1, 12)}};
  std::stringstream b3;
  CHECK_THROWS_WITH_AS(write_dqp(bad, b3), doctest::Contains("out of range"), RangeError);

  std::istringstream magic(std::string("DQP2") + std::string(12, '\0'));
  CHECK_THROWS_WITH_AS(read_dqp(magic), doctest::Contains("bad magic"), FormatError);
  std::string cut = buf.str();
  cut.pop_back();
  std::istringstream shorty(cut);
  CHECK_THROWS_WITH_AS(read_dqp(shorty), doctest::Contains("bad length"), FormatError);
}

TEST_CASE("ft01: roundtrip and finiteness") {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> d;
  FeatureTensor t(29, 50, 61);
  for (auto& v : t.data) v = d(rng);
  std::stringstream buf;
  write_tensor(t, buf);
  CHECK(buf.str().size() == 16 + 29 * 50 * 61 * 4);
  CHECK(buf.str().substr(0, 4) == "FT01");
  CHECK(read_tensor(buf) == t);

  FeatureTensor nan(1, 1, 1);
  nan.data[0] = std::numeric_limits<float>::quiet_NaN();
  std::stringstream b2;
  CHECK_THROWS_AS(write_tensor(nan, b2), RangeError);
}

TEST_CASE("property: format roundtrips on arbitrary legal payloads") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 70), h = 1 + static_cast<int>(rng() % 50);
    ImportanceMap m(w, h);
    for (auto& v : m.values()) v = static_cast<std::uint8_t>(rng());
    std::stringstream pgm;
    save_pgm(m, pgm);
    CHECK(load_pgm(pgm) == m);

    VideoSequence v{{pimtest::random_frame(w, h, rng)}, 25, 25, 1};
    std::stringstream y4m;
    save_y4m(v, y4m);
    CHECK(load_y4m(y4m).frames == v.frames);

    DqpSidecar s{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w), {DeltaQpGrid(h, w)}};
    for (auto& x : s.frames[0]) x = static_cast<int>(rng() % 21) - 10;
    std::stringstream dqp;
    write_dqp(s, dqp);
    CHECK(read_dqp(dqp) == s);
  }
}
