#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pim/media.hpp"

namespace pim::encode {

inline constexpr int kMinQp = 0;
inline constexpr int kMaxQp = 51;

struct EncodeJob {
  media::VideoSequence video;
  media::DqpSidecar dqp;
  double target_bitrate_kbps = 500.0;
  int qp_base = 26;              // mock path only
  std::string command_template;  // placeholders {input} {dqp} {output} {bitrate}
  std::filesystem::path work_dir;
};

struct EffectiveQp {
  MacroblockGrid<int> qp;
  int clamp_events = 0;
};

struct EncodeReport {
  std::vector<double> frame_bits;
  double total_bits = 0.0;
  double baseline_bits = 0.0;
  double ratio = 1.0;  // achieved / target
  std::vector<MacroblockGrid<int>> effective_qp;
  int clamp_events = 0;
};

/// QP[MB] = qp_base + ΔQP[MB], clamped to [0, 51].
EffectiveQp effective_qp(int qp_base, const media::DeltaQpGrid& dqp);

/// Per-macroblock bit budget implied by a target bitrate.
double default_bits_per_mb(const EncodeJob& job);

/// Deterministic rate model: bits[MB] = base * 2^(-ΔQP[MB]/3).
EncodeReport mock_encode(const EncodeJob& job, double base_bits_per_mb);
EncodeReport mock_encode(const EncodeJob& job);

/// Checks that a command template carries every required placeholder.
void validate_template(const std::string& command_template);

/// Writes the inputs into job.work_dir, runs the external encoder through
/// /bin/sh and returns the output path. Fails on non-zero exit or when the
/// encoder produced no output file.
std::filesystem::path drive_encoder(const EncodeJob& job);

/// Single-quotes a string for /bin/sh.
std::string shell_quote(const std::string& s);

}  // namespace pim::encode
