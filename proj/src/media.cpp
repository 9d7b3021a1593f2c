#include "pim/media.hpp"

#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace pim::media {
namespace {

constexpr std::size_t kMaxHeaderLine = 4096;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path.string());
  return out;
}

void finish_write(std::ostream& out, const std::string& what) {
  out.flush();
  if (!out) throw Error("write failed: " + what);
}

// Reads up to and excluding '\n'. Returns false on EOF before any byte.
bool read_line(std::istream& in, std::string& line) {
  line.clear();
  char ch;
  while (in.get(ch)) {
    if (ch == '\n') return true;
    if (line.size() >= kMaxHeaderLine) throw FormatError("malformed header: line too long");
    line.push_back(ch);
  }
  if (line.empty()) return false;
  throw FormatError("malformed header: missing newline");
}

int parse_positive(std::string_view text, const char* what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value <= 0) {
    throw FormatError(std::string("malformed header: bad ") + what);
  }
  return value;
}

bool read_exact(std::istream& in, void* dst, std::size_t n) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                  static_cast<char>((v >> 16) & 0xff),
                                  static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct Header16 {
  std::array<char, 4> magic;
  std::uint32_t a, b, c;
};

Header16 read_header16(std::istream& in, std::string_view magic) {
  std::array<unsigned char, 16> raw{};
  if (!read_exact(in, raw.data(), raw.size())) throw FormatError("bad length: short header");
  Header16 h{};
  std::memcpy(h.magic.data(), raw.data(), 4);
  if (std::string_view(h.magic.data(), 4) != magic) {
    throw FormatError("bad magic: expected " + std::string(magic));
  }
  h.a = get_u32(raw.data() + 4);
  h.b = get_u32(raw.data() + 8);
  h.c = get_u32(raw.data() + 12);
  return h;
}

void expect_eof(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("bad length: trailing bytes");
}

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(ch));
    if (token.size() > 32) throw FormatError("malformed PGM header");
  }
  if (token.empty()) throw FormatError("malformed PGM header: unexpected end of stream");
  return token;
}

}  // namespace

Frame::Frame(int width, int height, ChromaFormat format)
    : width_(width), height_(height), format_(format) {
  if (width <= 0 || height <= 0) throw DimensionError("frame dimensions must be positive");
  y_.assign(static_cast<std::size_t>(width) * height, 0);
  const std::size_t chroma = static_cast<std::size_t>(chroma_width()) * chroma_height();
  u_.assign(chroma, 128);
  v_.assign(chroma, 128);
}

Frame::Frame(int width, int height, ChromaFormat format, std::vector<std::uint8_t> y,
             std::vector<std::uint8_t> u, std::vector<std::uint8_t> v)
    : width_(width), height_(height), format_(format), y_(std::move(y)), u_(std::move(u)),
      v_(std::move(v)) {
  if (width <= 0 || height <= 0) throw DimensionError("frame dimensions must be positive");
  const std::size_t chroma = static_cast<std::size_t>(chroma_width()) * chroma_height();
  if (y_.size() != static_cast<std::size_t>(width) * height || u_.size() != chroma ||
      v_.size() != chroma) {
    throw DimensionError("plane sizes inconsistent with frame geometry");
  }
}

int Frame::chroma_width() const noexcept {
  return format_ == ChromaFormat::k420 ? (width_ + 1) / 2 : width_;
}

int Frame::chroma_height() const noexcept {
  return format_ == ChromaFormat::k420 ? (height_ + 1) / 2 : height_;
}

std::size_t Frame::payload_size() const noexcept { return y_.size() + u_.size() + v_.size(); }

ImportanceMap::ImportanceMap(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw DimensionError("map dimensions must be positive");
  values_.assign(static_cast<std::size_t>(width) * height, fill);
}

ImportanceMap::ImportanceMap(int width, int height, std::vector<std::uint8_t> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width <= 0 || height <= 0) throw DimensionError("map dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("map payload size mismatch");
  }
}

// ---------------------------------------------------------------------------
// Y4M

VideoSequence load_y4m(std::istream& in) {
  std::string header;
  if (!read_line(in, header)) throw FormatError("malformed header: empty stream");
  std::istringstream tokens(header);
  std::string tok;
  tokens >> tok;
  if (tok != "YUV4MPEG2") throw FormatError("malformed header: missing YUV4MPEG2 signature");

  int width = 0, height = 0, fps_num = 0, fps_den = 0;
  ChromaFormat format = ChromaFormat::k420;
  while (tokens >> tok) {
    const std::string_view rest = std::string_view(tok).substr(1);
    switch (tok[0]) {
      case 'W': width = parse_positive(rest, "width"); break;
      case 'H': height = parse_positive(rest, "height"); break;
      case 'F': {
        const auto colon = rest.find(':');
        if (colon == std::string_view::npos) throw FormatError("malformed header: bad frame rate");
        fps_num = parse_positive(rest.substr(0, colon), "frame rate");
        fps_den = parse_positive(rest.substr(colon + 1), "frame rate");
        break;
      }
      case 'C':
        if (rest == "420" || rest == "420jpeg" || rest == "420paldv" || rest == "420mpeg2") {
          format = ChromaFormat::k420;
        } else if (rest == "444") {
          format = ChromaFormat::k444;
        } else {
          throw FormatError("unsupported color space: " + std::string(rest));
        }
        break;
      default: break;  // I, A, X tags carry nothing we use
    }
  }
  if (width == 0 || height == 0 || fps_num == 0) {
    throw FormatError("malformed header: W, H and F tags are required");
  }

  VideoSequence video;
  video.fps_num = fps_num;
  video.fps_den = fps_den;
  video.fps = static_cast<double>(fps_num) / fps_den;

  std::string frame_line;
  while (read_line(in, frame_line)) {
    if (frame_line.rfind("FRAME", 0) != 0) throw FormatError("malformed frame marker");
    Frame frame(width, height, format);
    if (!read_exact(in, frame.y().data(), frame.y().size()) ||
        !read_exact(in, frame.u().data(), frame.u().size()) ||
        !read_exact(in, frame.v().data(), frame.v().size())) {
      throw FormatError("truncated frame payload");
    }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

VideoSequence load_y4m(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_y4m(in);
}

void save_y4m(const VideoSequence& video, std::ostream& out) {
  if (video.frames.empty()) throw DimensionError("cannot write an empty video");
  const Frame& first = video.frames.front();
  out << "YUV4MPEG2 W" << first.width() << " H" << first.height() << " F" << video.fps_num << ':'
      << video.fps_den << " Ip A1:1 C" << (first.format() == ChromaFormat::k420 ? "420jpeg" : "444")
      << '\n';
  for (const Frame& f : video.frames) {
    if (!f.same_geometry(first)) throw DimensionError("frames differ in geometry");
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(f.y().data()), static_cast<std::streamsize>(f.y().size()));
    out.write(reinterpret_cast<const char*>(f.u().data()), static_cast<std::streamsize>(f.u().size()));
    out.write(reinterpret_cast<const char*>(f.v().data()), static_cast<std::streamsize>(f.v().size()));
  }
  finish_write(out, "y4m");
}

void save_y4m(const VideoSequence& video, const std::filesystem::path& path) {
  auto out = open_out(path);
  save_y4m(video, out);
}

// ---------------------------------------------------------------------------
// PGM

ImportanceMap load_pgm(std::istream& in) {
  std::array<char, 2> magic{};
  if (!read_exact(in, magic.data(), 2) || magic[0] != 'P' || magic[1] != '5') {
    throw FormatError("not a binary PGM: expected P5 magic");
  }
  auto to_int = [](const std::string& t) {
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || v <= 0) {
      throw FormatError("malformed PGM header");
    }
    return v;
  };
  const int width = to_int(pgm_token(in));
  const int height = to_int(pgm_token(in));
  const int maxval = to_int(pgm_token(in));
  if (maxval != 255) throw FormatError("maxval != 255 (got " + std::to_string(maxval) + ")");
  std::vector<std::uint8_t> values(static_cast<std::size_t>(width) * height);
  if (!read_exact(in, values.data(), values.size())) throw FormatError("PGM payload size mismatch");
  expect_eof(in);
  return ImportanceMap(width, height, std::move(values));
}

ImportanceMap load_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_pgm(in);
}

void save_pgm(const ImportanceMap& map, std::ostream& out) {
  out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(map.values().data()),
            static_cast<std::streamsize>(map.values().size()));
  finish_write(out, "pgm");
}

void save_pgm(const ImportanceMap& map, const std::filesystem::path& path) {
  auto out = open_out(path);
  save_pgm(map, out);
}

// ---------------------------------------------------------------------------
// FT01

FeatureTensor read_tensor(std::istream& in) {
  const Header16 h = read_header16(in, "FT01");
  const std::size_t count = static_cast<std::size_t>(h.a) * h.b * h.c;
  if (count > (std::size_t{1} << 31)) throw FormatError("bad length: tensor too large");
  FeatureTensor t(h.a, h.b, h.c);
  std::vector<unsigned char> raw(count * 4);
  if (!read_exact(in, raw.data(), raw.size())) throw FormatError("bad length: truncated tensor payload");
  expect_eof(in);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
    if (!std::isfinite(v)) throw FormatError("non-finite value in tensor");
    t.data[i] = v;
  }
  return t;
}

FeatureTensor read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor(in);
}

void write_tensor(const FeatureTensor& t, std::ostream& out) {
  if (t.data.size() != static_cast<std::size_t>(t.rows) * t.cols * t.channels) {
    throw DimensionError("tensor payload does not match rows*cols*channels");
  }
  out.write("FT01", 4);
  put_u32(out, t.rows);
  put_u32(out, t.cols);
  put_u32(out, t.channels);
  for (float v : t.data) {
    if (!std::isfinite(v)) throw RangeError("non-finite value in tensor");
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  finish_write(out, "tensor");
}

void write_tensor(const FeatureTensor& t, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_tensor(t, out);
}

// ---------------------------------------------------------------------------
// DQP1

DqpSidecar read_dqp(std::istream& in) {
  const Header16 h = read_header16(in, "DQP1");
  const std::size_t per_frame = static_cast<std::size_t>(h.b) * h.c;
  if (per_frame * h.a > (std::size_t{1} << 31)) throw FormatError("bad length: sidecar too large");
  DqpSidecar s;
  s.rows = h.b;
  s.cols = h.c;
  std::vector<char> raw(per_frame);
  for (std::uint32_t f = 0; f < h.a; ++f) {
    if (!read_exact(in, raw.data(), raw.size())) throw FormatError("bad length: truncated sidecar");
    DeltaQpGrid grid(static_cast<int>(h.b), static_cast<int>(h.c));
    for (std::size_t i = 0; i < per_frame; ++i) {
      const int v = static_cast<std::int8_t>(raw[i]);
      if (v < -kMaxAbsDeltaQp || v > kMaxAbsDeltaQp) throw FormatError("ΔQP value out of range");
      grid.cells()[i] = v;
    }
    s.frames.push_back(std::move(grid));
  }
  expect_eof(in);
  return s;
}

DqpSidecar read_dqp(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_dqp(in);
}

void write_dqp(const DqpSidecar& s, std::ostream& out) {
  for (const auto& grid : s.frames) {
    if (grid.rows() != static_cast<int>(s.rows) || grid.cols() != static_cast<int>(s.cols)) {
      throw DimensionError("sidecar frame grid does not match header dimensions");
    }
    for (int v : grid) {
      if (v < -kMaxAbsDeltaQp || v > kMaxAbsDeltaQp) {
        throw RangeError("ΔQP value " + std::to_string(v) + " out of range [-10, 10]");
      }
    }
  }
  out.write("DQP1", 4);
  put_u32(out, static_cast<std::uint32_t>(s.frames.size()));
  put_u32(out, s.rows);
  put_u32(out, s.cols);
  for (const auto& grid : s.frames) {
    for (int v : grid) out.put(static_cast<char>(static_cast<std::int8_t>(v)));
  }
  finish_write(out, "dqp");
}

void write_dqp(const DqpSidecar& s, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_dqp(s, out);
}

ImportanceMap luma_image(const Frame& frame) {
  return ImportanceMap(frame.width(), frame.height(), frame.y());
}

}  // namespace pim::media
