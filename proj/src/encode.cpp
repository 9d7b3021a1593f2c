#include "pim/encode.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <sstream>

#include "pim/qpsolver.hpp"

namespace pim::encode {
namespace {

void check_job_geometry(const EncodeJob& job) {
  if (job.video.frames.empty()) throw DimensionError("video has no frames");
  const int rows = mb_count(job.video.height()), cols = mb_count(job.video.width());
  if (static_cast<int>(job.dqp.rows) != rows || static_cast<int>(job.dqp.cols) != cols) {
    throw DimensionError("ΔQP grid " + std::to_string(job.dqp.rows) + "x" + std::to_string(job.dqp.cols) +
                         " does not match the video's " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " macroblocks");
  }
  if (job.dqp.frames.size() != job.video.frames.size()) {
    throw DimensionError("sidecar frame count differs from the video");
  }
  for (const auto& g : job.dqp.frames) {
    if (g.rows() != rows || g.cols() != cols) throw DimensionError("sidecar frame grid has wrong shape");
  }
}

std::string replace_all(std::string s, const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = s.find(key, pos)) != std::string::npos) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
  return s;
}

struct ProcessOutcome {
  int exit_code;
  std::string stderr_text;
};

ProcessOutcome run_shell(const std::string& command) {
  int pipe_fd[2];
  if (pipe(pipe_fd) != 0) throw Error(std::string("pipe failed: ") + std::strerror(errno));
  const pid_t pid = fork();
  if (pid < 0) {
    close(pipe_fd[0]);
    close(pipe_fd[1]);
    throw Error(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(pipe_fd[1], STDERR_FILENO);
    const int devnull = open("/dev/null", O_WRONLY);
    if (devnull >= 0) dup2(devnull, STDOUT_FILENO);
    close(pipe_fd[0]);
    close(pipe_fd[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(pipe_fd[1]);
  std::string err;
  std::array<char, 4096> buf;
  ssize_t got;
  while ((got = read(pipe_fd[0], buf.data(), buf.size())) != 0) {
    if (got < 0) {
      if (errno == EINTR) continue;
      break;
    }
    err.append(buf.data(), static_cast<std::size_t>(got));
  }
  close(pipe_fd[0]);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw Error(std::string("waitpid failed: ") + std::strerror(errno));
  }
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return {code, err};
}

}  // namespace

EffectiveQp effective_qp(int qp_base, const media::DeltaQpGrid& dqp) {
  if (qp_base < kMinQp || qp_base > kMaxQp) throw RangeError("qp_base must be in [0, 51]");
  EffectiveQp out{MacroblockGrid<int>(dqp.rows(), dqp.cols()), 0};
  for (std::size_t i = 0; i < dqp.size(); ++i) {
    const int raw = qp_base + dqp.cells()[i];
    const int clamped = std::clamp(raw, kMinQp, kMaxQp);
    if (clamped != raw) ++out.clamp_events;
    out.qp.cells()[i] = clamped;
  }
  return out;
}

double default_bits_per_mb(const EncodeJob& job) {
  if (job.video.frames.empty()) throw DimensionError("video has no frames");
  if (!(job.target_bitrate_kbps > 0.0)) throw ConfigError("target bitrate must be positive");
  const double mbs = static_cast<double>(mb_count(job.video.width())) * mb_count(job.video.height());
  return job.target_bitrate_kbps * 1000.0 / (job.video.fps * mbs);
}

EncodeReport mock_encode(const EncodeJob& job, double base_bits_per_mb) {
  check_job_geometry(job);
  if (!(base_bits_per_mb > 0.0)) throw ConfigError("base bits per macroblock must be positive");
  EncodeReport report;
  for (const auto& grid : job.dqp.frames) {
    double bits = 0.0;
    for (int v : grid) bits += base_bits_per_mb * qpsolver::rate_weight(v);
    report.frame_bits.push_back(bits);
    report.total_bits += bits;
    report.baseline_bits += base_bits_per_mb * static_cast<double>(grid.size());
    auto eq = effective_qp(job.qp_base, grid);
    report.clamp_events += eq.clamp_events;
    report.effective_qp.push_back(std::move(eq.qp));
  }
  report.ratio = report.total_bits / report.baseline_bits;
  return report;
}

EncodeReport mock_encode(const EncodeJob& job) { return mock_encode(job, default_bits_per_mb(job)); }

void validate_template(const std::string& command_template) {
  for (const char* key : {"{input}", "{dqp}", "{output}"}) {
    if (command_template.find(key) == std::string::npos) {
      throw ConfigError(std::string("encoder command template lacks ") + key);
    }
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') {
      out += "'\\''";
    } else {
      out += ch;
    }
  }
  return out + "'";
}

std::filesystem::path drive_encoder(const EncodeJob& job) {
  validate_template(job.command_template);
  check_job_geometry(job);
  if (job.work_dir.empty()) throw ConfigError("encoder job needs a work directory");
  std::filesystem::create_directories(job.work_dir);
  const auto input = job.work_dir / "input.y4m";
  const auto sidecar = job.work_dir / "deltaqp.dqp";
  const auto output = job.work_dir / "output.bin";
  std::filesystem::remove(output);
  media::save_y4m(job.video, input);
  media::write_dqp(job.dqp, sidecar);

  std::ostringstream bitrate;
  bitrate << job.target_bitrate_kbps;
  std::string cmd = job.command_template;
  cmd = replace_all(cmd, "{input}", shell_quote(input.string()));
  cmd = replace_all(cmd, "{dqp}", shell_quote(sidecar.string()));
  cmd = replace_all(cmd, "{output}", shell_quote(output.string()));
  cmd = replace_all(cmd, "{bitrate}", bitrate.str());

  const ProcessOutcome outcome = run_shell(cmd);
  if (outcome.exit_code != 0) {
    throw ProcessError("encoder exited with status " + std::to_string(outcome.exit_code) + ": " +
                           outcome.stderr_text,
                       outcome.exit_code, outcome.stderr_text);
  }
  if (!std::filesystem::exists(output)) {
    throw ProcessError("encoder produced no output file", 0, outcome.stderr_text);
  }
  return output;
}

}  // namespace pim::encode
