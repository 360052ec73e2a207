#pragma once

// Dense 3D volumes, the EMV1 file format, and chunk-grid iteration.
//
// Layout is x-fastest: index = (z * H + y) * W + x, so each z-slice is a
// contiguous run of H * W voxels.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mitoseg/error.hpp"

namespace mitoseg {

struct Dims {
  std::int64_t d = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::size_t voxels() const noexcept {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& dims);

enum class DType : std::uint8_t { U8 = 0, U16 = 1, U32 = 2, U64 = 3, F32 = 4 };

const char* to_string(DType dtype);

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return DType::U8;
  else if constexpr (std::is_same_v<T, std::uint16_t>) return DType::U16;
  else if constexpr (std::is_same_v<T, std::uint32_t>) return DType::U32;
  else if constexpr (std::is_same_v<T, std::uint64_t>) return DType::U64;
  else if constexpr (std::is_same_v<T, float>) return DType::F32;
  else static_assert(sizeof(T) == 0, "unsupported voxel type");
}

/// Physical voxel spacing in nanometres. Metadata only; not persisted in EMV1.
struct VoxelSize {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
};

template <class T>
class Volume {
 public:
  using value_type = T;
  static constexpr DType dtype = dtype_of<T>();

  Volume() = default;

  explicit Volume(Dims dims, T fill = T{}) : dims_(dims) {
    check_dims(dims);
    data_.assign(dims.voxels(), fill);
  }

  Volume(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims);
    if (data_.size() != dims.voxels()) {
      fail(ErrorKind::SizeMismatch, "data length " + std::to_string(data_.size()) + " does not match dims " +
                                        to_string(dims));
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_.h) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims_.w) +
           static_cast<std::size_t>(x);
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::int64_t z, std::int64_t y, std::int64_t x) noexcept { return data_[index(z, y, x)]; }
  const T& at(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept { return data_[index(z, y, x)]; }

  /// Contiguous view of one z-slice.
  std::span<const T> slice(std::int64_t z) const noexcept {
    const auto n = static_cast<std::size_t>(dims_.h * dims_.w);
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(z) * n, n);
  }
  std::span<T> slice(std::int64_t z) noexcept {
    const auto n = static_cast<std::size_t>(dims_.h * dims_.w);
    return std::span<T>(data_).subspan(static_cast<std::size_t>(z) * n, n);
  }

  const std::optional<VoxelSize>& voxel_size() const noexcept { return voxel_size_; }
  void set_voxel_size(std::optional<VoxelSize> vs) { voxel_size_ = vs; }

  friend bool operator==(const Volume& a, const Volume& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

 private:
  static void check_dims(const Dims& dims) {
    if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) {
      fail(ErrorKind::InvalidArgument, "volume dims must be positive, got " + to_string(dims));
    }
  }

  Dims dims_;
  std::vector<T> data_;
  std::optional<VoxelSize> voxel_size_;
};

using AnyVolume = std::variant<Volume<std::uint8_t>, Volume<std::uint16_t>, Volume<std::uint32_t>,
                               Volume<std::uint64_t>, Volume<float>>;

DType dtype_of(const AnyVolume& v);
Dims dims_of(const AnyVolume& v);

// EMV1: "EMV1" | dtype code (u8) | D, H, W as little-endian u64 | raw LE payload.
inline constexpr std::size_t kEmv1HeaderBytes = 29;

AnyVolume load_volume(const std::filesystem::path& path);

/// Loads and requires the stored dtype to be T.
template <class T>
Volume<T> load_volume_as(const std::filesystem::path& path) {
  auto any = load_volume(path);
  if (auto* v = std::get_if<Volume<T>>(&any)) return std::move(*v);
  fail(ErrorKind::UnsupportedDtype, path.string() + ": expected dtype " + to_string(dtype_of<T>()) + ", file has " +
                                        to_string(dtype_of(any)));
}

template <class T>
void save_volume(const std::filesystem::path& path, const Volume<T>& v);

void save_volume(const std::filesystem::path& path, const AnyVolume& v);

/// Throws a domain error unless every voxel is a finite value in [0, 1].
void validate_probability(const Volume<float>& v, const std::string& what);

/// Throws a domain error unless every voxel is 0 or 1.
template <class T>
void validate_binary(const Volume<T>& v, const std::string& what) {
  for (const T value : v.data()) {
    if (!(value == T{0} || value == T{1})) {
      fail(ErrorKind::Domain, what + " must be binary (values 0 or 1)");
    }
  }
}

// ---------------------------------------------------------------------------
// Chunk grids

/// Axis-aligned box in voxel coordinates.
struct Box {
  Dims origin;
  Dims extent;

  bool contains(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return z >= origin.d && z < origin.d + extent.d && y >= origin.h && y < origin.h + extent.h && x >= origin.w &&
           x < origin.w + extent.w;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Chunk {
  std::size_t index = 0;
  Box core;       // disjoint tiling region
  Box with_halo;  // core grown by the halo, clamped to the volume
};

class ChunkGrid {
 public:
  /// Throws invalid-argument for a zero (or negative) chunk dimension, a chunk
  /// larger than the volume along any axis, or a negative halo.
  ChunkGrid(Dims volume, Dims chunk, Dims halo = {0, 0, 0});

  /// A single chunk covering the whole volume.
  static ChunkGrid whole(Dims volume) { return ChunkGrid(volume, volume); }

  const Dims& volume_dims() const noexcept { return volume_; }
  const Dims& chunk_dims() const noexcept { return chunk_; }
  const Dims& halo() const noexcept { return halo_; }
  /// Number of chunks along each axis.
  const Dims& counts() const noexcept { return counts_; }
  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
  std::size_t size() const noexcept { return chunks_.size(); }

  std::size_t chunk_index_of(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return static_cast<std::size_t>(((z / chunk_.d) * counts_.h + y / chunk_.h) * counts_.w + x / chunk_.w);
  }

 private:
  Dims volume_;
  Dims chunk_;
  Dims halo_;
  Dims counts_;
  std::vector<Chunk> chunks_;
};

/// Read-only window onto a volume. Coordinates passed to `at` are global.
template <class T>
class VolumeView {
 public:
  VolumeView(const Volume<T>& volume, Box box) : volume_(&volume), box_(box) {}

  const Box& box() const noexcept { return box_; }
  bool contains(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept { return box_.contains(z, y, x); }
  const T& at(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept { return volume_->at(z, y, x); }
  const Volume<T>& volume() const noexcept { return *volume_; }

 private:
  const Volume<T>* volume_;
  Box box_;
};

template <class T>
struct ChunkView {
  Chunk chunk;
  VolumeView<T> view;  // spans chunk.with_halo
};

/// Every voxel belongs to exactly one chunk core. Throws invalid-argument if
/// the grid was built for different volume dims.
template <class T>
std::vector<ChunkView<T>> iter_chunks(const Volume<T>& v, const ChunkGrid& g) {
  if (!(v.dims() == g.volume_dims())) {
    fail(ErrorKind::InvalidArgument, "chunk grid built for " + to_string(g.volume_dims()) + " but volume is " +
                                         to_string(v.dims()));
  }
  std::vector<ChunkView<T>> out;
  out.reserve(g.size());
  for (const auto& c : g.chunks()) out.push_back({c, VolumeView<T>(v, c.with_halo)});
  return out;
}

}  // namespace mitoseg
