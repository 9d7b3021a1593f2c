#include "pim/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "pim/error.hpp"

namespace pim::analytics {

std::optional<double> preference(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) throw RangeError("preference fraction outside [0, 1]");
  if (p == 0.0 || p == 1.0) return std::nullopt;
  return p / (1.0 - p);
}

TallySummary tally_summary(const VoteTally& t, Interval interval) {
  if (t.prefer_a < 0 || t.prefer_b < 0) throw RangeError("vote counts must be non-negative");
  if (t.total() < 1) throw RangeError("tally has no votes");
  TallySummary s;
  s.n = t.total();
  const double n = static_cast<double>(s.n);
  s.fraction = static_cast<double>(t.prefer_a) / n;
  const double p = s.fraction;
  if (interval == Interval::kWald) {
    s.center = p;
    s.halfwidth = kZ95 * std::sqrt(p * (1.0 - p) / n);
  } else {
    const double z2 = kZ95 * kZ95;
    const double denom = 1.0 + z2 / n;
    s.center = (p + z2 / (2 * n)) / denom;
    s.halfwidth = kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom;
  }
  // a / b equals p / (1 - p) but avoids rounding p first.
  if (t.prefer_a > 0 && t.prefer_b > 0) {
    s.preference = static_cast<double>(t.prefer_a) / static_cast<double>(t.prefer_b);
  }
  return s;
}

std::vector<VideoTally> read_tallies(std::istream& in) {
  std::vector<VideoTally> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    VideoTally v;
    if (!(fields >> v.video_id)) continue;
    std::string a, b, extra;
    if (!(fields >> a >> b) || (fields >> extra)) {
      throw FormatError("tally line " + std::to_string(lineno) + ": expected video_id prefer_pim prefer_base");
    }
    auto parse = [&](const std::string& s) {
      long value = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
      if (ec != std::errc{} || p != s.data() + s.size() || value < 0) {
        throw FormatError("tally line " + std::to_string(lineno) + ": bad count '" + s + "'");
      }
      return value;
    };
    v.votes = {parse(a), parse(b)};
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<VideoTally> read_tallies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_tallies(in);
}

DatasetSummary summarize_dataset(const std::vector<VideoTally>& tallies, Interval interval) {
  if (tallies.empty()) throw RangeError("no tallies");
  DatasetSummary d;
  VoteTally pooled;
  for (const auto& t : tallies) {
    ++d.videos;
    if (t.votes.prefer_a > t.votes.prefer_b) ++d.videos_preferred;
    pooled.prefer_a += t.votes.prefer_a;
    pooled.prefer_b += t.votes.prefer_b;
  }
  d.fraction_preferred = static_cast<double>(d.videos_preferred) / static_cast<double>(d.videos);
  d.pooled = tally_summary(pooled, interval);
  return d;
}

}  // namespace pim::analytics
