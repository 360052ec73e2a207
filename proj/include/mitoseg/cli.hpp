#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mitoseg/labeling.hpp"
#include "mitoseg/seedmap.hpp"

namespace mitoseg::cli {

/// Exit codes: 0 success, 1 internal error, 2 usage or validation error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

struct PipelineConfig {
  SeedParams seed;
  Connectivity connectivity = Connectivity::Six;
  std::uint64_t min_size = 0;
  double iou_threshold = 0.75;
  SizeBins bins;
  Dims chunk{64, 256, 256};  // clamped to the volume at use
  unsigned workers = 1;

  void validate() const;
};

/// Reads a JSON config. Recognised keys: t1, t2, connectivity, min_size, iou,
/// bins ([small_max, med_max]), chunk ([d, h, w]), workers. Missing keys keep
/// the values already in `base`.
PipelineConfig load_pipeline_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. JSON reports go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mitoseg::cli
