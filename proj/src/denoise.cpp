#include "mitoseg/denoise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include <json.hpp>

#include "mitoseg/parallel.hpp"

namespace mitoseg {

KernelField::KernelField(int k, Volume<float> taps) : k_(k), taps_(std::move(taps)) {
  if (k < 1 || k % 2 == 0) fail(ErrorKind::InvalidArgument, "kernel size must be odd and positive, got " + std::to_string(k));
  if (taps_.dims().d != 2 * static_cast<std::int64_t>(k) * k) {
    fail(ErrorKind::SizeMismatch, "kernel field needs 2*k*k = " + std::to_string(2 * k * k) + " channels, got " +
                                      std::to_string(taps_.dims().d));
  }
}

KernelField KernelField::zeros(int k, std::int64_t h, std::int64_t w) {
  return KernelField(k, Volume<float>(Dims{2 * static_cast<std::int64_t>(k) * k, h, w}));
}

void KernelField::validate_normalized(double tol) const {
  const auto plane = static_cast<std::size_t>(height() * width());
  std::vector<double> sums(plane, 0.0);
  for (std::int64_t c = 0; c < taps_.dims().d; ++c) {
    const auto s = taps_.slice(c);
    for (std::size_t i = 0; i < plane; ++i) sums[i] += s[i];
  }
  for (const double s : sums) {
    if (!(std::abs(s - 1.0) <= tol)) fail(ErrorKind::Domain, "kernel taps must sum to 1 per pixel");
  }
}

KernelFile load_kernel_file(const std::filesystem::path& path) {
  auto taps = load_volume_as<float>(path);
  const auto sidecar = std::filesystem::path(path.string() + ".json");
  std::ifstream in(sidecar);
  if (!in) fail(ErrorKind::Io, "cannot open kernel sidecar " + sidecar.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    return {doc.at("slice_index").get<std::int64_t>(), KernelField(doc.at("k").get<int>(), std::move(taps))};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, sidecar.string() + ": " + e.what());
  }
}

void save_kernel_file(const std::filesystem::path& path, const KernelField& field, std::int64_t slice_index) {
  save_volume(path, field.taps());
  std::ofstream out(path.string() + ".json");
  out << nlohmann::json{{"k", field.k()}, {"slice_index", slice_index}}.dump() << '\n';
  if (!out) fail(ErrorKind::Io, "cannot write kernel sidecar for " + path.string());
}

namespace {

void check_frame(const Volume<float>& f, const KernelField& kf, const char* what) {
  if (f.dims().d != 1 || f.dims().h != kf.height() || f.dims().w != kf.width()) {
    fail(ErrorKind::InvalidArgument, std::string(what) + " frame " + to_string(f.dims()) + " does not match kernel field (" +
                                         std::to_string(kf.height()) + ", " + std::to_string(kf.width()) + ")");
  }
}

// Filters both frames with the field; no validation.
Volume<float> synthesize(std::span<const float> prev, std::span<const float> next, const KernelField& kf) {
  const std::int64_t h = kf.height(), w = kf.width();
  const int k = kf.k(), r = k / 2;
  Volume<float> out(Dims{1, h, w});
  const std::array<std::span<const float>, 2> frames{prev, next};
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int s = 0; s < 2; ++s) {
        for (int u = 0; u < k; ++u) {
          const std::int64_t yy = y + u - r;
          if (yy < 0 || yy >= h) continue;
          for (int v = 0; v < k; ++v) {
            const std::int64_t xx = x + v - r;
            if (xx < 0 || xx >= w) continue;
            acc += static_cast<double>(frames[static_cast<std::size_t>(s)][static_cast<std::size_t>(yy * w + xx)]) *
                   kf.tap(s, u, v, y, x);
          }
        }
      }
      out.at(0, y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

template <class T>
T from_float(float v) {
  if constexpr (std::is_floating_point_v<T>) {
    return static_cast<T>(v);
  } else {
    const double lo = static_cast<double>(std::numeric_limits<T>::min());
    const double hi = static_cast<double>(std::numeric_limits<T>::max());
    return static_cast<T>(std::clamp(std::nearbyint(static_cast<double>(v)), lo, hi));
  }
}

}  // namespace

Volume<float> apply_kernels(const Volume<float>& prev, const Volume<float>& next, const KernelField& kf) {
  check_frame(prev, kf, "previous");
  check_frame(next, kf, "next");
  kf.validate_normalized();
  return synthesize(prev.data(), next.data(), kf);
}

template <class T>
Volume<T> restore_slices(const Volume<T>& volume, const std::map<std::int64_t, Volume<std::uint8_t>>& masks,
                         const std::map<std::int64_t, KernelField>& kernels, unsigned workers) {
  const Dims& dims = volume.dims();
  std::vector<std::int64_t> slices;
  for (const auto& [z, mask] : masks) {
    if (z < 0 || z >= dims.d) {
      fail(ErrorKind::InvalidArgument, "noise mask slice " + std::to_string(z) + " outside volume depth " +
                                           std::to_string(dims.d));
    }
    if (z == 0 || z == dims.d - 1) {
      fail(ErrorKind::MissingNeighbor, "slice " + std::to_string(z) + " has no neighbour on one side");
    }
    if (mask.dims().d != 1 || mask.dims().h != dims.h || mask.dims().w != dims.w) {
      fail(ErrorKind::InvalidArgument, "noise mask for slice " + std::to_string(z) + " has dims " +
                                           to_string(mask.dims()));
    }
    validate_binary(mask, "noise mask");
    const auto kit = kernels.find(z);
    if (kit == kernels.end()) fail(ErrorKind::InvalidArgument, "no kernel field for slice " + std::to_string(z));
    if (kit->second.height() != dims.h || kit->second.width() != dims.w) {
      fail(ErrorKind::InvalidArgument, "kernel field for slice " + std::to_string(z) + " does not match frame size");
    }
    kit->second.validate_normalized();
    slices.push_back(z);
  }

  Volume<T> out = volume;
  parallel_for(slices.size(), workers, [&](std::size_t i) {
    const std::int64_t z = slices[i];
    const auto& mask = masks.at(z);
    auto to_float = [&](std::int64_t zz) {
      const auto s = volume.slice(zz);
      return std::vector<float>(s.begin(), s.end());
    };
    const auto prev = to_float(z - 1);
    const auto next = to_float(z + 1);
    const auto restored = synthesize(prev, next, kernels.at(z));
    auto dst = out.slice(z);
    const auto m = mask.data();
    const auto r = restored.data();
    for (std::size_t j = 0; j < dst.size(); ++j) {
      if (m[j]) dst[j] = from_float<T>(r[j]);
    }
  });
  return out;
}

template Volume<std::uint8_t> restore_slices(const Volume<std::uint8_t>&, const std::map<std::int64_t, Volume<std::uint8_t>>&,
                                             const std::map<std::int64_t, KernelField>&, unsigned);
template Volume<std::uint16_t> restore_slices(const Volume<std::uint16_t>&,
                                              const std::map<std::int64_t, Volume<std::uint8_t>>&,
                                              const std::map<std::int64_t, KernelField>&, unsigned);
template Volume<float> restore_slices(const Volume<float>&, const std::map<std::int64_t, Volume<std::uint8_t>>&,
                                      const std::map<std::int64_t, KernelField>&, unsigned);

}  // namespace mitoseg
