#include "mitoseg/labeling.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "mitoseg/parallel.hpp"

namespace mitoseg {

Connectivity connectivity_from_int(int n) {
  if (n == 6) return Connectivity::Six;
  if (n == 26) return Connectivity::TwentySix;
  fail(ErrorKind::InvalidArgument, "connectivity must be 6 or 26, got " + std::to_string(n));
}

UnionFind::UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

std::size_t UnionFind::add() {
  parent_.push_back(parent_.size());
  rank_.push_back(0);
  return parent_.size() - 1;
}

std::size_t UnionFind::find(std::size_t x) noexcept {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

std::size_t UnionFind::unite(std::size_t a, std::size_t b) noexcept {
  a = find(a);
  b = find(b);
  if (a == b) return a;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return a;
}

namespace {

struct Offset {
  int dz, dy, dx;
};

// Neighbors that precede a voxel in raster order.
std::vector<Offset> backward_offsets(Connectivity conn) {
  if (conn == Connectivity::Six) return {{-1, 0, 0}, {0, -1, 0}, {0, 0, -1}};
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz < 0 || dy < 0 || (dy == 0 && dx < 0)) out.push_back({dz, dy, dx});
      }
    }
  }
  return out;  // 13 offsets
}

struct ChunkLabels {
  std::uint64_t count = 0;
  std::vector<std::uint64_t> voxels;  // by local label, [0] unused
  std::vector<std::uint64_t> first;   // global linear index of the first voxel
};

// Two-pass labeling confined to `core`. Local labels 1..count are written to
// `out` in first-occurrence order.
template <class Label>
ChunkLabels label_chunk(const SeedMap& seed, Volume<Label>& out, const Box& core, const std::vector<Offset>& back) {
  const Dims& dims = seed.dims();
  const std::int64_t z0 = core.origin.d, z1 = core.origin.d + core.extent.d;
  const std::int64_t y0 = core.origin.h, y1 = core.origin.h + core.extent.h;
  const std::int64_t x0 = core.origin.w, x1 = core.origin.w + core.extent.w;

  std::vector<std::ptrdiff_t> lin;
  lin.reserve(back.size());
  for (const auto& o : back) lin.push_back((static_cast<std::ptrdiff_t>(o.dz) * dims.h + o.dy) * dims.w + o.dx);

  // Equivalence array: eq[l] <= l, and every set is rooted at its smallest label.
  std::vector<Label> eq{0};
  auto find = [&eq](Label l) {
    while (eq[l] != l) {
      eq[l] = eq[eq[l]];
      l = eq[l];
    }
    return l;
  };

  const std::uint8_t* s = seed.data().data();
  Label* o = out.data().data();

  for (std::int64_t z = z0; z < z1; ++z) {
    for (std::int64_t y = y0; y < y1; ++y) {
      const std::size_t row = seed.index(z, y, 0);
      for (std::int64_t x = x0; x < x1; ++x) {
        const std::size_t i = row + static_cast<std::size_t>(x);
        if (!s[i]) {
          o[i] = 0;
          continue;
        }
        Label cur = 0;
        for (std::size_t k = 0; k < back.size(); ++k) {
          const auto& off = back[k];
          const std::int64_t nz = z + off.dz, ny = y + off.dy, nx = x + off.dx;
          if (nz < z0 || ny < y0 || ny >= y1 || nx < x0 || nx >= x1) continue;
          const Label n = o[static_cast<std::ptrdiff_t>(i) + lin[k]];
          if (!n || n == cur) continue;
          if (!cur) {
            cur = n;
          } else {
            const Label a = find(cur), b = find(n);
            if (a < b) eq[b] = a;
            else if (b < a) eq[a] = b;
            cur = std::min(a, b);
          }
        }
        if (!cur) {
          cur = static_cast<Label>(eq.size());
          eq.push_back(cur);
        }
        o[i] = cur;
      }
    }
  }

  // Flatten: roots are visited in creation order, which is first-occurrence order.
  std::vector<Label> remap(eq.size(), 0);
  Label next = 0;
  for (std::size_t l = 1; l < eq.size(); ++l) {
    remap[l] = eq[l] == static_cast<Label>(l) ? ++next : remap[find(static_cast<Label>(l))];
  }

  ChunkLabels result;
  result.count = next;
  result.voxels.assign(next + 1, 0);
  result.first.assign(next + 1, 0);
  for (std::int64_t z = z0; z < z1; ++z) {
    for (std::int64_t y = y0; y < y1; ++y) {
      const std::size_t row = seed.index(z, y, 0);
      for (std::int64_t x = x0; x < x1; ++x) {
        const std::size_t i = row + static_cast<std::size_t>(x);
        if (!o[i]) continue;
        const Label id = remap[o[i]];
        o[i] = id;
        if (result.voxels[id]++ == 0) result.first[id] = i;
      }
    }
  }
  return result;
}

using Pair = std::pair<std::uint64_t, std::uint64_t>;

// Equivalences between voxels of `chunk` and raster-preceding neighbors that
// live in other chunks. Neighbors are read through the halo view.
template <class Label>
std::vector<Pair> boundary_pairs(const VolumeView<std::uint8_t>& seed_view, const Volume<Label>& out,
                                 const Chunk& chunk, const ChunkGrid& grid, Connectivity conn,
                                 const std::vector<Offset>& back, const std::vector<std::uint64_t>& offsets) {
  const Dims& dims = grid.volume_dims();
  const Box& core = chunk.core;
  const std::int64_t z0 = core.origin.d, z1 = core.origin.d + core.extent.d;
  const std::int64_t y0 = core.origin.h, y1 = core.origin.h + core.extent.h;
  const std::int64_t x0 = core.origin.w, x1 = core.origin.w + core.extent.w;
  const bool reaches_forward = conn == Connectivity::TwentySix;  // +1 steps in y and x

  std::vector<Pair> pairs;
  const std::uint64_t base = offsets[chunk.index];

  auto visit = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    if (!seed_view.at(z, y, x)) return;
    const std::uint64_t a = base + out.at(z, y, x);
    for (const auto& off : back) {
      const std::int64_t nz = z + off.dz, ny = y + off.dy, nx = x + off.dx;
      if (nz < 0 || ny < 0 || ny >= dims.h || nx < 0 || nx >= dims.w) continue;
      if (core.contains(nz, ny, nx)) continue;
      if (!seed_view.contains(nz, ny, nx)) {
        fail(ErrorKind::InvalidArgument, "chunk halo does not cover the connectivity stencil");
      }
      if (!seed_view.at(nz, ny, nx)) continue;
      const std::uint64_t b = offsets[grid.chunk_index_of(nz, ny, nx)] + out.at(nz, ny, nx);
      if (pairs.empty() || pairs.back() != Pair{a, b}) pairs.emplace_back(a, b);
    }
  };

  for (std::int64_t z = z0; z < z1; ++z) {
    for (std::int64_t y = y0; y < y1; ++y) {
      const bool full_row = (z == z0 && z0 > 0) || (y == y0 && y0 > 0) || (reaches_forward && y == y1 - 1 && y1 < dims.h);
      if (full_row) {
        for (std::int64_t x = x0; x < x1; ++x) visit(z, y, x);
      } else {
        if (x0 > 0) visit(z, y, x0);
        if (reaches_forward && x1 < dims.w && !(x0 > 0 && x1 - 1 == x0)) visit(z, y, x1 - 1);
      }
    }
  }
  return pairs;
}

}  // namespace

template <class Label>
LabelVolume<Label> label_components_chunked(const SeedMap& seed, const ChunkGrid& grid, Connectivity conn,
                                            std::uint64_t min_size, unsigned workers) {
  validate_binary(seed, "seed map");
  const Dims& dims = seed.dims();
  if (!(grid.volume_dims() == dims)) {
    fail(ErrorKind::InvalidArgument, "chunk grid built for " + to_string(grid.volume_dims()) + " but seed is " +
                                         to_string(dims));
  }
  const Dims& counts = grid.counts();
  const Dims& halo = grid.halo();
  if ((counts.d > 1 && halo.d < 1) || (counts.h > 1 && halo.h < 1) || (counts.w > 1 && halo.w < 1)) {
    fail(ErrorKind::InvalidArgument, "multi-chunk labeling needs a halo of at least 1 along split axes, got " +
                                         to_string(halo));
  }
  if (dims.voxels() >= static_cast<std::size_t>(std::numeric_limits<Label>::max())) {
    fail(ErrorKind::InvalidArgument, "volume " + to_string(dims) + " has too many voxels for the label type");
  }

  const auto back = backward_offsets(conn);
  LabelVolume<Label> out(dims);
  const auto views = iter_chunks(seed, grid);

  // Pass 1: independent per-chunk labeling into disjoint core regions.
  std::vector<ChunkLabels> local(grid.size());
  parallel_for(grid.size(), workers,
               [&](std::size_t c) { local[c] = label_chunk(seed, out, grid.chunks()[c].core, back); });

  std::vector<std::uint64_t> offsets(grid.size() + 1, 0);
  for (std::size_t c = 0; c < grid.size(); ++c) offsets[c + 1] = offsets[c] + local[c].count;
  const std::uint64_t total = offsets.back();

  // Cross-chunk equivalences, gathered in parallel, merged serially.
  std::vector<std::vector<Pair>> pairs(grid.size());
  if (grid.size() > 1) {
    parallel_for(grid.size(), workers, [&](std::size_t c) {
      pairs[c] = boundary_pairs(views[c].view, out, views[c].chunk, grid, conn, back, offsets);
    });
  }

  UnionFind uf(total + 1);
  for (const auto& list : pairs) {
    for (const auto& [a, b] : list) uf.unite(a, b);
  }
  pairs.clear();

  constexpr std::uint64_t kNone = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> root_voxels(total + 1, 0);
  std::vector<std::uint64_t> root_first(total + 1, kNone);
  std::vector<std::uint64_t> root_of(total + 1, 0);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (std::uint64_t l = 1; l <= local[c].count; ++l) {
      const std::uint64_t g = offsets[c] + l;
      const std::uint64_t r = uf.find(g);
      root_of[g] = r;
      root_voxels[r] += local[c].voxels[l];
      root_first[r] = std::min(root_first[r], local[c].first[l]);
    }
  }

  std::vector<std::pair<std::uint64_t, std::uint64_t>> survivors;  // (first index, root)
  for (std::uint64_t g = 1; g <= total; ++g) {
    if (root_of[g] == g && root_voxels[g] > 0 && root_voxels[g] >= min_size) survivors.emplace_back(root_first[g], g);
  }
  std::sort(survivors.begin(), survivors.end());

  std::vector<Label> final_of_root(total + 1, 0);
  for (std::size_t k = 0; k < survivors.size(); ++k) final_of_root[survivors[k].second] = static_cast<Label>(k + 1);
  std::vector<Label> remap(total + 1, 0);
  for (std::uint64_t g = 1; g <= total; ++g) remap[g] = final_of_root[root_of[g]];

  // Pass 2: rewrite provisional ids in place, again per chunk.
  parallel_for(grid.size(), workers, [&](std::size_t c) {
    const Box& core = grid.chunks()[c].core;
    const std::uint64_t base = offsets[c];
    for (std::int64_t z = core.origin.d; z < core.origin.d + core.extent.d; ++z) {
      for (std::int64_t y = core.origin.h; y < core.origin.h + core.extent.h; ++y) {
        Label* row = &out.at(z, y, core.origin.w);
        for (std::int64_t x = 0; x < core.extent.w; ++x) {
          if (row[x]) row[x] = remap[base + row[x]];
        }
      }
    }
  });
  return out;
}

template <class Label>
LabelVolume<Label> label_components(const SeedMap& seed, Connectivity conn, std::uint64_t min_size) {
  return label_components_chunked<Label>(seed, ChunkGrid::whole(seed.dims()), conn, min_size, 1);
}

template LabelVolume<std::uint32_t> label_components(const SeedMap&, Connectivity, std::uint64_t);
template LabelVolume<std::uint64_t> label_components(const SeedMap&, Connectivity, std::uint64_t);
template LabelVolume<std::uint32_t> label_components_chunked(const SeedMap&, const ChunkGrid&, Connectivity,
                                                             std::uint64_t, unsigned);
template LabelVolume<std::uint64_t> label_components_chunked(const SeedMap&, const ChunkGrid&, Connectivity,
                                                             std::uint64_t, unsigned);

// ---------------------------------------------------------------------------

const char* to_string(SizeCategory c) {
  switch (c) {
    case SizeCategory::Small: return "small";
    case SizeCategory::Medium: return "med";
    case SizeCategory::Large: return "large";
  }
  return "?";
}

void SizeBins::validate() const {
  if (!(small_max > 0 && small_max < med_max)) {
    fail(ErrorKind::InvalidArgument, "size bins need 0 < small_max < med_max (got " + std::to_string(small_max) +
                                         ", " + std::to_string(med_max) + ")");
  }
}

const InstanceRow* InstanceTable::find(std::uint64_t label) const noexcept {
  auto it = std::lower_bound(rows.begin(), rows.end(), label,
                             [](const InstanceRow& r, std::uint64_t l) { return r.label < l; });
  return it != rows.end() && it->label == label ? &*it : nullptr;
}

template <class Label>
InstanceTable instance_table(const LabelVolume<Label>& labels, const Volume<float>* score_source,
                             const SizeBins& bins) {
  bins.validate();
  if (score_source && !(score_source->dims() == labels.dims())) {
    fail(ErrorKind::InvalidArgument, "score source " + to_string(score_source->dims()) + " does not match labels " +
                                         to_string(labels.dims()));
  }

  struct Acc {
    std::uint64_t voxels = 0;
    double sum = 0.0;
  };
  const auto data = labels.data();
  const std::uint64_t max_label = data.empty() ? 0 : static_cast<std::uint64_t>(*std::max_element(data.begin(), data.end()));

  std::vector<std::pair<std::uint64_t, Acc>> accs;
  if (max_label <= 2 * static_cast<std::uint64_t>(data.size()) + 1) {
    std::vector<Acc> dense(max_label + 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i]) continue;
      auto& a = dense[data[i]];
      ++a.voxels;
      if (score_source) a.sum += (*score_source)[i];
    }
    for (std::uint64_t l = 1; l <= max_label; ++l) {
      if (dense[l].voxels) accs.emplace_back(l, dense[l]);
    }
  } else {
    std::map<std::uint64_t, Acc> sparse;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i]) continue;
      auto& a = sparse[data[i]];
      ++a.voxels;
      if (score_source) a.sum += (*score_source)[i];
    }
    accs.assign(sparse.begin(), sparse.end());
  }

  InstanceTable table;
  table.rows.reserve(accs.size());
  for (const auto& [label, a] : accs) {
    const double score = score_source ? a.sum / static_cast<double>(a.voxels) : static_cast<double>(a.voxels);
    table.rows.push_back({label, a.voxels, bins.classify(a.voxels), score});
  }
  return table;
}

template InstanceTable instance_table(const LabelVolume<std::uint8_t>&, const Volume<float>*, const SizeBins&);
template InstanceTable instance_table(const LabelVolume<std::uint16_t>&, const Volume<float>*, const SizeBins&);
template InstanceTable instance_table(const LabelVolume<std::uint32_t>&, const Volume<float>*, const SizeBins&);
template InstanceTable instance_table(const LabelVolume<std::uint64_t>&, const Volume<float>*, const SizeBins&);

}  // namespace mitoseg
