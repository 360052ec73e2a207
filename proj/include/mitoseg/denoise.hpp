#pragma once

// Kernel-based slice restoration.
//
// A damaged slice z is re-synthesised from its neighbours z-1 and z+1, each
// filtered by its own per-pixel k x k kernel:
//
//   out(y, x) = sum_{u,v} prev(y+u, x+v) k1(y,x,u,v) + sum_{u,v} next(y+u, x+v) k2(y,x,u,v)
//
// with offsets u, v in [-k/2, k/2] and zero padding outside the frame. Only
// pixels flagged in the slice's noise mask are replaced.

#include <cstdint>
#include <filesystem>
#include <map>

#include "mitoseg/volume.hpp"

namespace mitoseg {

/// Per-pixel kernels stored channel-major as an f32 volume of dims
/// (2*k*k, H, W): channel (s*k + u)*k + v holds tap (u, v) of stack s (0 = prev,
/// 1 = next) for every pixel.
class KernelField {
 public:
  /// Throws invalid-argument for even or non-positive k and a size-mismatch
  /// error if `taps` is not (2*k*k, H, W).
  KernelField(int k, Volume<float> taps);

  /// Uniform zero-initialised field of the given frame size.
  static KernelField zeros(int k, std::int64_t h, std::int64_t w);

  int k() const noexcept { return k_; }
  std::int64_t height() const noexcept { return taps_.dims().h; }
  std::int64_t width() const noexcept { return taps_.dims().w; }
  const Volume<float>& taps() const noexcept { return taps_; }

  /// stack 0 filters the previous slice, stack 1 the next. u, v in [0, k).
  float& tap(int stack, int u, int v, std::int64_t y, std::int64_t x) noexcept {
    return taps_.at((stack * k_ + u) * k_ + v, y, x);
  }
  float tap(int stack, int u, int v, std::int64_t y, std::int64_t x) const noexcept {
    return taps_.at((stack * k_ + u) * k_ + v, y, x);
  }

  /// Throws a domain error unless every pixel's taps sum to 1 within `tol`.
  void validate_normalized(double tol = 1e-4) const;

 private:
  int k_;
  Volume<float> taps_;
};

/// Sidecar is `<path>.json` holding {"k": ..., "slice_index": ...}.
struct KernelFile {
  std::int64_t slice_index = 0;
  KernelField field;
};
KernelFile load_kernel_file(const std::filesystem::path& path);
void save_kernel_file(const std::filesystem::path& path, const KernelField& field, std::int64_t slice_index);

/// Restores one frame. `prev` and `next` are single-slice volumes (1, H, W).
///
/// Throws invalid-argument on any dims mismatch and a domain error for
/// non-normalized kernels.
Volume<float> apply_kernels(const Volume<float>& prev, const Volume<float>& next, const KernelField& kf);

/// Replaces masked pixels of each listed slice with the kernel synthesis from
/// the input volume's neighbours. All reads come from `volume`, never from
/// slices restored in the same call. Masks are (1, H, W) u8 in {0, 1}.
///
/// Integer volumes are rounded to nearest and clamped to the type range.
///
/// Throws missing-neighbor for a masked slice at z = 0 or z = D-1 and
/// invalid-argument for a mask without a kernel field or mismatched dims.
template <class T>
Volume<T> restore_slices(const Volume<T>& volume, const std::map<std::int64_t, Volume<std::uint8_t>>& masks,
                         const std::map<std::int64_t, KernelField>& kernels, unsigned workers = 1);

}  // namespace mitoseg
