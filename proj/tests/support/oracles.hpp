#pragma once

// Brute-force reference implementations used only by tests. Each one is
// written directly from the definition and shares no code with the library
// paths it checks.

#include <cmath>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <utility>
#include <vector>

#include "mitoseg/volume.hpp"

namespace mitoseg::testing {

/// Per-voxel seed rule: mask > t1 and boundary < t2, compared as float.
inline Volume<std::uint8_t> seed_map_oracle(const Volume<float>& mask, const Volume<float>& boundary, double t1,
                                            double t2) {
  Volume<std::uint8_t> out(mask.dims());
  const Dims& d = mask.dims();
  for (std::int64_t z = 0; z < d.d; ++z)
    for (std::int64_t y = 0; y < d.h; ++y)
      for (std::int64_t x = 0; x < d.w; ++x) {
        const bool seed = mask.at(z, y, x) > static_cast<float>(t1) && boundary.at(z, y, x) < static_cast<float>(t2);
        out.at(z, y, x) = seed ? 1 : 0;
      }
  return out;
}

/// Flood fill from every unvisited foreground voxel in raster order, so labels
/// come out in first-occurrence order. Components below min_size are dropped
/// and the survivors renumbered in the same order.
inline Volume<std::uint32_t> flood_fill_oracle(const Volume<std::uint8_t>& seed, int connectivity,
                                               std::uint64_t min_size = 0) {
  const Dims& d = seed.dims();
  std::vector<std::array<int, 3>> stencil;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan != 1) continue;
        stencil.push_back({dz, dy, dx});
      }

  Volume<std::uint32_t> raw(d);
  std::vector<std::uint64_t> sizes{0};
  std::vector<std::array<std::int64_t, 3>> stack;
  std::uint32_t next = 0;
  for (std::int64_t z = 0; z < d.d; ++z)
    for (std::int64_t y = 0; y < d.h; ++y)
      for (std::int64_t x = 0; x < d.w; ++x) {
        if (!seed.at(z, y, x) || raw.at(z, y, x)) continue;
        ++next;
        sizes.push_back(0);
        raw.at(z, y, x) = next;
        stack.push_back({z, y, x});
        while (!stack.empty()) {
          const auto [cz, cy, cx] = stack.back();
          stack.pop_back();
          ++sizes[next];
          for (const auto& s : stencil) {
            const std::int64_t nz = cz + s[0], ny = cy + s[1], nx = cx + s[2];
            if (nz < 0 || ny < 0 || nx < 0 || nz >= d.d || ny >= d.h || nx >= d.w) continue;
            if (!seed.at(nz, ny, nx) || raw.at(nz, ny, nx)) continue;
            raw.at(nz, ny, nx) = next;
            stack.push_back({nz, ny, nx});
          }
        }
      }

  std::vector<std::uint32_t> renumber(sizes.size(), 0);
  std::uint32_t k = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    if (sizes[l] >= min_size) renumber[l] = ++k;
  }
  for (auto& v : raw.data()) v = renumber[v];
  return raw;
}

/// True when two label volumes induce the same partition of the foreground.
template <class A, class B>
bool same_partition(const Volume<A>& a, const Volume<B>& b) {
  if (!(a.dims() == b.dims())) return false;
  std::map<A, B> fwd;
  std::map<B, A> bwd;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    auto [it, fresh] = fwd.emplace(a[i], b[i]);
    if (!fresh && it->second != b[i]) return false;
    auto [jt, fresh2] = bwd.emplace(b[i], a[i]);
    if (!fresh2 && jt->second != a[i]) return false;
  }
  return true;
}

/// label -> voxel count, by one pass over every voxel.
template <class T>
std::map<std::uint64_t, std::uint64_t> histogram_oracle(const Volume<T>& labels) {
  std::map<std::uint64_t, std::uint64_t> h;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) ++h[labels[i]];
  }
  return h;
}

/// (pred, gt) -> intersection by checking every voxel against every label pair
/// that occurs.
inline std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> overlap_oracle(
    const Volume<std::uint32_t>& pred, const Volume<std::uint32_t>& gt) {
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> out;
  const auto hp = histogram_oracle(pred);
  const auto hg = histogram_oracle(gt);
  for (const auto& [p, np] : hp) {
    for (const auto& [g, ng] : hg) {
      std::uint64_t n = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == p && gt[i] == g;
      if (n) out[{p, g}] = n;
    }
  }
  return out;
}

}  // namespace mitoseg::testing
