#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pim::analytics {

/// p / (1 - p). Empty when p is exactly 0 or 1 (unbounded preference);
/// throws RangeError when p lies outside [0, 1].
std::optional<double> preference(double p);

struct VoteTally {
  long prefer_a = 0;
  long prefer_b = 0;

  long total() const { return prefer_a + prefer_b; }
};

enum class Interval { kWald, kWilson };

inline constexpr double kZ95 = 1.96;

struct TallySummary {
  long n = 0;
  double fraction = 0.0;
  double center = 0.0;     // equals fraction for Wald
  double halfwidth = 0.0;  // 95% interval
  std::optional<double> preference;
};

TallySummary tally_summary(const VoteTally& t, Interval interval = Interval::kWald);

struct VideoTally {
  std::string video_id;
  VoteTally votes;  // a = PIM-encoded, b = baseline
};

/// Reads "video_id prefer_pim prefer_base" records; blank lines and '#'
/// comments are skipped, commas count as separators.
std::vector<VideoTally> read_tallies(std::istream& in);
std::vector<VideoTally> read_tallies(const std::filesystem::path& path);

struct DatasetSummary {
  long videos = 0;
  long videos_preferred = 0;       // strictly more votes for the PIM side
  double fraction_preferred = 0.0;  // videos_preferred / videos
  TallySummary pooled;             // all votes pooled
};

DatasetSummary summarize_dataset(const std::vector<VideoTally>& tallies,
                                 Interval interval = Interval::kWald);

}  // namespace pim::analytics
