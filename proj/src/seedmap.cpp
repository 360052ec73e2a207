#include "mitoseg/seedmap.hpp"

#include "mitoseg/parallel.hpp"

namespace mitoseg {

void SeedParams::validate() const {
  if (!(t1 >= 0.0 && t1 <= 1.0) || !(t2 >= 0.0 && t2 <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "seed thresholds must lie in [0, 1] (t1=" + std::to_string(t1) +
                                         ", t2=" + std::to_string(t2) + ")");
  }
}

SeedMap make_seed_map(const Volume<float>& mask, const Volume<float>& boundary, const SeedParams& params,
                      unsigned workers) {
  params.validate();
  if (!(mask.dims() == boundary.dims())) {
    fail(ErrorKind::InvalidArgument, "dimension mismatch: mask " + to_string(mask.dims()) + " vs boundary " +
                                         to_string(boundary.dims()));
  }
  validate_probability(mask, "semantic mask");
  validate_probability(boundary, "instance boundary");

  SeedMap seeds(mask.dims());
  // Thresholds are compared at voxel precision so a voxel stored as exactly the
  // threshold is never a seed.
  const auto t1 = static_cast<float>(params.t1);
  const auto t2 = static_cast<float>(params.t2);
  parallel_for(static_cast<std::size_t>(mask.dims().d), workers, [&](std::size_t z) {
    const auto m = mask.slice(static_cast<std::int64_t>(z));
    const auto b = boundary.slice(static_cast<std::int64_t>(z));
    auto out = seeds.slice(static_cast<std::int64_t>(z));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<std::uint8_t>((m[i] > t1) & (b[i] < t2));
    }
  });
  return seeds;
}

}  // namespace mitoseg
