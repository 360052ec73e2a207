#pragma once

// Forward-only reference of the anisotropic residual U-Net family.
//
// Topology for a config with L levels and widths c[0..L-1]:
//
//   embed       1x5x5 conv, in_channels -> c[0], ELU
//   encoder i   (i > 0) 1x3x3 conv, stride (1,2,2), c[i-1] -> c[i], ELU
//               ACB(c[i])
//   decoder     for i = L-2 .. 0:
//                 1x1x1 conv c[i+1] -> c[i] (linear), upsample (1,2,2),
//                 add encoder feature i, ACB(c[i])
//               1x1x1 head conv c[0] -> k, sigmoid
//
// One decoder path (k = 2) yields mask and boundary as its two channels; two
// decoder paths (k = 1 each) yield them separately. Depth is never resampled.
//
// ACB(c): y0 = elu(conv1x3x3(x)); out = elu(y0 + conv3x3x3(elu(conv3x3x3(y0)))).
//
// Closed-form parameter count (conv(k, a, b) = a*b*k + b):
//   embed                         25*in*c0 + c0
//   per ACB(c)                    63*c^2 + 3*c
//   per downsample i              9*c[i-1]*c[i] + c[i]
//   per decoder path              sum_{i<L-1} (c[i+1]*c[i] + c[i] + 63*c[i]^2 + 3*c[i]) + k*c0 + k

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mitoseg/error.hpp"

namespace mitoseg::nets {

class Tensor5 {
 public:
  Tensor5() = default;
  Tensor5(std::array<std::int64_t, 5> dims, float fill = 0.0f);
  Tensor5(std::array<std::int64_t, 5> dims, std::vector<float> data);

  const std::array<std::int64_t, 5>& dims() const noexcept { return dims_; }
  std::int64_t n() const noexcept { return dims_[0]; }
  std::int64_t c() const noexcept { return dims_[1]; }
  std::int64_t d() const noexcept { return dims_[2]; }
  std::int64_t h() const noexcept { return dims_[3]; }
  std::int64_t w() const noexcept { return dims_[4]; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t spatial() const noexcept { return static_cast<std::size_t>(d() * h() * w()); }

  std::size_t index(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return static_cast<std::size_t>((((n * dims_[1] + c) * dims_[2] + z) * dims_[3] + y) * dims_[4] + x);
  }
  float& at(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) noexcept {
    return data_[index(n, c, z, y, x)];
  }
  float at(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return data_[index(n, c, z, y, x)];
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> channel(std::int64_t n, std::int64_t c) const noexcept {
    return std::span<const float>(data_).subspan(index(n, c, 0, 0, 0), spatial());
  }
  std::span<float> channel(std::int64_t n, std::int64_t c) noexcept {
    return std::span<float>(data_).subspan(index(n, c, 0, 0, 0), spatial());
  }

  friend bool operator==(const Tensor5&, const Tensor5&) = default;

 private:
  std::array<std::int64_t, 5> dims_{};
  std::vector<float> data_;
};

struct ConvSpec {
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};

  /// Throws invalid-argument unless the kernel is one of 1x3x3, 3x3x3,
  /// 1x5x5, 1x1x1 and strides are positive.
  void validate() const;
  std::array<int, 3> padding() const noexcept { return {(kernel[0] - 1) / 2, (kernel[1] - 1) / 2, (kernel[2] - 1) / 2}; }
};

inline constexpr ConvSpec kConv1x3x3{{1, 3, 3}, {1, 1, 1}};
inline constexpr ConvSpec kConv3x3x3{{3, 3, 3}, {1, 1, 1}};
inline constexpr ConvSpec kConv1x5x5{{1, 5, 5}, {1, 1, 1}};
inline constexpr ConvSpec kConv1x1x1{{1, 1, 1}, {1, 1, 1}};
inline constexpr ConvSpec kDown1x3x3{{1, 3, 3}, {1, 2, 2}};

/// Weights laid out (c_out, c_in, kd, kh, kw), plus one bias per output channel.
struct ConvLayer {
  ConvSpec spec;
  int c_in = 0;
  int c_out = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  ConvLayer() = default;
  ConvLayer(ConvSpec spec, int c_in, int c_out);

  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
  float& weight(int co, int ci, int kz, int ky, int kx) noexcept {
    return weights[static_cast<std::size_t>(
        (((co * c_in + ci) * spec.kernel[0] + kz) * spec.kernel[1] + ky) * spec.kernel[2] + kx)];
  }
};

/// Zero-padded cross-correlation. Output spatial dims are ceil(in / stride).
/// Throws invalid-argument when x.c() != layer.c_in.
Tensor5 conv3d(const Tensor5& x, const ConvLayer& layer, unsigned workers = 1);

Tensor5 elu(Tensor5 x);
Tensor5 sigmoid(Tensor5 x);
Tensor5 add(Tensor5 a, const Tensor5& b);

/// Doubles H and W, keeps D. Half-pixel (align-corners false) sampling with
/// edge clamping, so constants stay constant.
Tensor5 trilinear_upsample(const Tensor5& x);

struct AcbParams {
  ConvLayer lateral;  // 1x3x3
  ConvLayer conv_a;   // 3x3x3
  ConvLayer conv_b;   // 3x3x3
};

Tensor5 acb_forward(const Tensor5& x, const AcbParams& p, unsigned workers = 1);

struct NetConfig {
  int in_channels = 1;
  int levels = 4;
  std::vector<int> channels{16, 32, 64, 128};
  int decoders = 1;  // 1: single path (rat variant), 2: separate paths (human variant)
  std::uint64_t seed = 0;

  void validate() const;
};

/// Named conv layers. ACBs are stored as three entries "<prefix>.lateral",
/// "<prefix>.conv_a", "<prefix>.conv_b".
class ParamStore {
 public:
  std::map<std::string, ConvLayer>& layers() noexcept { return layers_; }
  const std::map<std::string, ConvLayer>& layers() const noexcept { return layers_; }

  const ConvLayer& layer(const std::string& name) const;
  ConvLayer& layer(const std::string& name);
  AcbParams acb(const std::string& prefix) const;

  /// Enumerates every stored weight and bias.
  std::size_t parameter_count() const noexcept;

 private:
  std::map<std::string, ConvLayer> layers_;
};

/// Uniform init in [-b, b], b = 1 / sqrt(fan_in), from cfg.seed.
ParamStore init_params(const NetConfig& cfg);

/// The closed form documented at the top of this header.
std::size_t parameter_count_formula(const NetConfig& cfg);

struct NetOutput {
  Tensor5 mask;      // (N, 1, D, H, W)
  Tensor5 boundary;  // (N, 1, D, H, W)
};

/// Throws invalid-argument if H or W is not divisible by 2^(levels-1), or the
/// input channel count does not match the config.
NetOutput resunet_forward(const Tensor5& x, const NetConfig& cfg, const ParamStore& params, unsigned workers = 1);

/// Writes one EMV1 f32 file per weight and bias tensor plus manifest.json.
void save_params(const std::filesystem::path& dir, const NetConfig& cfg, const ParamStore& params);

struct LoadedNet {
  NetConfig config;
  ParamStore params;
};
LoadedNet load_params(const std::filesystem::path& dir);

}  // namespace mitoseg::nets
