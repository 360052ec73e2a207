#pragma once

// Connected-component labeling of seed maps into instance label volumes.
//
// Labels are dense: 0 is background and instances are numbered 1..K in order
// of their first voxel in (z, y, x) raster order. The numbering depends only
// on the partition, so results are byte-identical across chunk grids and
// worker counts.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mitoseg/seedmap.hpp"
#include "mitoseg/volume.hpp"

namespace mitoseg {

enum class Connectivity : int { Six = 6, TwentySix = 26 };

/// Throws invalid-argument for anything other than 6 or 26.
Connectivity connectivity_from_int(int n);

/// Disjoint sets with union by rank and path halving.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n = 0);

  std::size_t size() const noexcept { return parent_.size(); }
  std::size_t add();
  std::size_t find(std::size_t x) noexcept;
  /// Returns the root of the merged set.
  std::size_t unite(std::size_t a, std::size_t b) noexcept;
  bool same(std::size_t a, std::size_t b) noexcept { return find(a) == find(b); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

template <class Label = std::uint32_t>
using LabelVolume = Volume<Label>;

/// Labels the value-1 voxels of `seed`. Components with fewer than `min_size`
/// voxels are dropped to background before numbering.
///
/// Throws a domain error if `seed` holds values other than 0 and 1, and
/// invalid-argument if the volume has more voxels than `Label` can number.
template <class Label = std::uint32_t>
LabelVolume<Label> label_components(const SeedMap& seed, Connectivity conn = Connectivity::Six,
                                    std::uint64_t min_size = 0);

/// Chunk-parallel labeling. Each chunk is labeled independently, equivalences
/// across chunk faces are merged in one serial union-find pass, and a final
/// parallel pass writes the renumbered labels. The output is bit-identical to
/// `label_components` for every grid.
///
/// The grid needs a halo of at least 1 along every axis that has more than one
/// chunk; otherwise invalid-argument is thrown.
template <class Label = std::uint32_t>
LabelVolume<Label> label_components_chunked(const SeedMap& seed, const ChunkGrid& grid,
                                            Connectivity conn = Connectivity::Six, std::uint64_t min_size = 0,
                                            unsigned workers = 1);

// ---------------------------------------------------------------------------
// Instance tables

enum class SizeCategory { Small, Medium, Large };

const char* to_string(SizeCategory c);

/// Voxel-count bins: small < small_max <= medium < med_max <= large.
struct SizeBins {
  std::uint64_t small_max = 5000;
  std::uint64_t med_max = 15000;

  void validate() const;

  SizeCategory classify(std::uint64_t voxels) const noexcept {
    if (voxels < small_max) return SizeCategory::Small;
    if (voxels < med_max) return SizeCategory::Medium;
    return SizeCategory::Large;
  }
};

struct InstanceRow {
  std::uint64_t label = 0;
  std::uint64_t voxels = 0;
  SizeCategory category = SizeCategory::Small;
  double score = 0.0;
};

struct InstanceTable {
  std::vector<InstanceRow> rows;  // ascending label

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  /// Row for `label`, or nullptr when the label does not occur.
  const InstanceRow* find(std::uint64_t label) const noexcept;
};

/// One row per nonzero label present in `labels`. The score is the mean of
/// `score_source` over the instance when given, otherwise the voxel count.
/// Label ids need not be contiguous.
///
/// Throws invalid-argument if `score_source` has different dims.
template <class Label>
InstanceTable instance_table(const LabelVolume<Label>& labels, const Volume<float>* score_source = nullptr,
                             const SizeBins& bins = {});

}  // namespace mitoseg
