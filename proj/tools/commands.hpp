#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

namespace cpn::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitInternal = 4,
};

struct DetectArgs {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::size_t workers = 1;
  bool bypass_objectness = false;
};

struct SynthArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct EvalArgs {
  std::filesystem::path dets;
  std::filesystem::path gt;
  std::filesystem::path report;
  std::optional<std::filesystem::path> proposals;  // defaults to the detections
};

// Each command reports progress on `out`, diagnostics on `err`, and returns
// an exit code. Exceptions are mapped to codes here, never propagated.
int cmd_detect(const DetectArgs& args, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

/// Text report path next to the JSON report: same stem, ".txt".
std::filesystem::path text_report_path(const std::filesystem::path& report);

/// Full command line: parses arguments and dispatches.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpn::cli
