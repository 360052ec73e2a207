#pragma once

#include <cstdint>

#include "mitoseg/volume.hpp"

namespace mitoseg {

/// Thresholds for seed synthesis. A voxel is a seed when the semantic-mask
/// probability is strictly above `t1` and the boundary probability strictly
/// below `t2`; ties are not seeds.
struct SeedParams {
  double t1 = 0.9;
  double t2 = 0.8;

  /// Throws invalid-argument unless both thresholds lie in [0, 1].
  void validate() const;
};

using SeedMap = Volume<std::uint8_t>;

/// Binary seed map from a semantic-mask and an instance-boundary probability
/// volume. Slices are processed on up to `workers` threads (0 = all cores).
///
/// Throws invalid-argument on a dims mismatch and a domain error if either
/// input holds values outside [0, 1].
SeedMap make_seed_map(const Volume<float>& mask, const Volume<float>& boundary, const SeedParams& params = {},
                      unsigned workers = 1);

}  // namespace mitoseg
