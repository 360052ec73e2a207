#include "mitoseg/volume.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mitoseg {

std::string to_string(const Dims& dims) {
  return "(" + std::to_string(dims.d) + ", " + std::to_string(dims.h) + ", " + std::to_string(dims.w) + ")";
}

const char* to_string(DType dtype) {
  switch (dtype) {
    case DType::U8: return "u8";
    case DType::U16: return "u16";
    case DType::U32: return "u32";
    case DType::U64: return "u64";
    case DType::F32: return "f32";
  }
  return "?";
}

DType dtype_of(const AnyVolume& v) {
  return std::visit([](const auto& vol) { return std::decay_t<decltype(vol)>::dtype; }, v);
}

Dims dims_of(const AnyVolume& v) {
  return std::visit([](const auto& vol) { return vol.dims(); }, v);
}

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'V', '1'};

template <class T>
void swap_bytes_inplace(std::span<T> values) {
  if constexpr (sizeof(T) > 1) {
    for (auto& v : values) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      std::reverse(p, p + sizeof(T));
    }
  }
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    p[i] = static_cast<unsigned char>(v & 0xff);
    v >>= 8;
  }
}

template <class T>
AnyVolume read_payload(std::ifstream& in, const std::filesystem::path& path, Dims dims, std::uint64_t payload_bytes) {
  const std::uint64_t expected = static_cast<std::uint64_t>(dims.voxels()) * sizeof(T);
  if (payload_bytes != expected) {
    fail(ErrorKind::SizeMismatch, path.string() + ": payload has " + std::to_string(payload_bytes) +
                                      " bytes, header " + to_string(dims) + " requires " + std::to_string(expected));
  }
  std::vector<T> data(dims.voxels());
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  if (!in) fail(ErrorKind::Io, path.string() + ": short read");
  if constexpr (std::endian::native == std::endian::big) swap_bytes_inplace(std::span<T>(data));
  return Volume<T>(dims, std::move(data));
}

}  // namespace

AnyVolume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());

  in.seekg(0, std::ios::end);
  const auto file_bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);

  if (file_bytes < kEmv1HeaderBytes) {
    // Too short to hold even the header: distinguish a wrong file from a cut one.
    std::array<char, 4> head{};
    in.read(head.data(), static_cast<std::streamsize>(std::min<std::uint64_t>(file_bytes, 4)));
    if (file_bytes < 4 || head != kMagic) fail(ErrorKind::Format, path.string() + ": missing EMV1 magic");
    fail(ErrorKind::SizeMismatch, path.string() + ": truncated header");
  }

  std::array<unsigned char, kEmv1HeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (std::memcmp(header.data(), kMagic.data(), kMagic.size()) != 0) {
    fail(ErrorKind::Format, path.string() + ": missing EMV1 magic");
  }

  const std::uint8_t code = header[4];
  const std::uint64_t d = read_u64_le(&header[5]);
  const std::uint64_t h = read_u64_le(&header[13]);
  const std::uint64_t w = read_u64_le(&header[21]);
  constexpr std::uint64_t kMaxAxis = std::uint64_t{1} << 31;
  if (d == 0 || h == 0 || w == 0 || d > kMaxAxis || h > kMaxAxis || w > kMaxAxis) {
    fail(ErrorKind::Format, path.string() + ": invalid dims in header");
  }
  const Dims dims{static_cast<std::int64_t>(d), static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)};
  const std::uint64_t payload = file_bytes - kEmv1HeaderBytes;

  switch (code) {
    case 0: return read_payload<std::uint8_t>(in, path, dims, payload);
    case 1: return read_payload<std::uint16_t>(in, path, dims, payload);
    case 2: return read_payload<std::uint32_t>(in, path, dims, payload);
    case 3: return read_payload<std::uint64_t>(in, path, dims, payload);
    case 4: return read_payload<float>(in, path, dims, payload);
    default:
      fail(ErrorKind::UnsupportedDtype, path.string() + ": unknown dtype code " + std::to_string(code));
  }
}

template <class T>
void save_volume(const std::filesystem::path& path, const Volume<T>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");

  std::array<unsigned char, kEmv1HeaderBytes> header{};
  std::memcpy(header.data(), kMagic.data(), kMagic.size());
  header[4] = static_cast<unsigned char>(Volume<T>::dtype);
  write_u64_le(&header[5], static_cast<std::uint64_t>(v.dims().d));
  write_u64_le(&header[13], static_cast<std::uint64_t>(v.dims().h));
  write_u64_le(&header[21], static_cast<std::uint64_t>(v.dims().w));
  out.write(reinterpret_cast<const char*>(header.data()), header.size());

  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    std::vector<T> copy(v.data().begin(), v.data().end());
    swap_bytes_inplace(std::span<T>(copy));
    out.write(reinterpret_cast<const char*>(copy.data()), static_cast<std::streamsize>(copy.size() * sizeof(T)));
  } else {
    out.write(reinterpret_cast<const char*>(v.data().data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

template void save_volume(const std::filesystem::path&, const Volume<std::uint8_t>&);
template void save_volume(const std::filesystem::path&, const Volume<std::uint16_t>&);
template void save_volume(const std::filesystem::path&, const Volume<std::uint32_t>&);
template void save_volume(const std::filesystem::path&, const Volume<std::uint64_t>&);
template void save_volume(const std::filesystem::path&, const Volume<float>&);

void save_volume(const std::filesystem::path& path, const AnyVolume& v) {
  std::visit([&](const auto& vol) { save_volume(path, vol); }, v);
}

void validate_probability(const Volume<float>& v, const std::string& what) {
  for (const float p : v.data()) {
    // Written so NaN fails too.
    if (!(p >= 0.0f && p <= 1.0f)) fail(ErrorKind::Domain, what + " must hold probabilities in [0, 1]");
  }
}

// ---------------------------------------------------------------------------

ChunkGrid::ChunkGrid(Dims volume, Dims chunk, Dims halo) : volume_(volume), chunk_(chunk), halo_(halo) {
  if (chunk.d <= 0 || chunk.h <= 0 || chunk.w <= 0) {
    fail(ErrorKind::InvalidArgument, "chunk dims must be positive, got " + to_string(chunk));
  }
  if (chunk.d > volume.d || chunk.h > volume.h || chunk.w > volume.w) {
    fail(ErrorKind::InvalidArgument, "chunk dims " + to_string(chunk) + " exceed volume dims " + to_string(volume));
  }
  if (halo.d < 0 || halo.h < 0 || halo.w < 0) {
    fail(ErrorKind::InvalidArgument, "halo must be non-negative, got " + to_string(halo));
  }

  auto ceil_div = [](std::int64_t a, std::int64_t b) { return (a + b - 1) / b; };
  counts_ = {ceil_div(volume.d, chunk.d), ceil_div(volume.h, chunk.h), ceil_div(volume.w, chunk.w)};
  chunks_.reserve(counts_.voxels());

  auto grow = [](std::int64_t lo, std::int64_t extent, std::int64_t h, std::int64_t limit) {
    const std::int64_t a = std::max<std::int64_t>(0, lo - h);
    const std::int64_t b = std::min<std::int64_t>(limit, lo + extent + h);
    return std::pair{a, b - a};
  };

  for (std::int64_t cz = 0; cz < counts_.d; ++cz) {
    for (std::int64_t cy = 0; cy < counts_.h; ++cy) {
      for (std::int64_t cx = 0; cx < counts_.w; ++cx) {
        Chunk c;
        c.index = chunks_.size();
        c.core.origin = {cz * chunk.d, cy * chunk.h, cx * chunk.w};
        c.core.extent = {std::min(chunk.d, volume.d - c.core.origin.d), std::min(chunk.h, volume.h - c.core.origin.h),
                         std::min(chunk.w, volume.w - c.core.origin.w)};
        const auto [z0, dz] = grow(c.core.origin.d, c.core.extent.d, halo.d, volume.d);
        const auto [y0, dy] = grow(c.core.origin.h, c.core.extent.h, halo.h, volume.h);
        const auto [x0, dx] = grow(c.core.origin.w, c.core.extent.w, halo.w, volume.w);
        c.with_halo = {{z0, y0, x0}, {dz, dy, dx}};
        chunks_.push_back(c);
      }
    }
  }
}

}  // namespace mitoseg
