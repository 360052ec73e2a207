#include "mitoseg/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "mitoseg/parallel.hpp"
#include "mitoseg/volume.hpp"

namespace mitoseg::nets {

namespace {

std::size_t product(const std::array<std::int64_t, 5>& dims) {
  std::size_t n = 1;
  for (const auto v : dims) {
    if (v < 1) fail(ErrorKind::InvalidArgument, "tensor dims must be >= 1");
    n *= static_cast<std::size_t>(v);
  }
  return n;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

Tensor5::Tensor5(std::array<std::int64_t, 5> dims, float fill) : dims_(dims), data_(product(dims), fill) {}

Tensor5::Tensor5(std::array<std::int64_t, 5> dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != product(dims)) fail(ErrorKind::SizeMismatch, "tensor data length does not match dims");
}

void ConvSpec::validate() const {
  static constexpr std::array<std::array<int, 3>, 4> kAllowed{{{1, 3, 3}, {3, 3, 3}, {1, 5, 5}, {1, 1, 1}}};
  if (std::find(kAllowed.begin(), kAllowed.end(), kernel) == kAllowed.end()) {
    fail(ErrorKind::InvalidArgument, "unsupported kernel " + std::to_string(kernel[0]) + "x" +
                                         std::to_string(kernel[1]) + "x" + std::to_string(kernel[2]));
  }
  if (stride[0] < 1 || stride[1] < 1 || stride[2] < 1) fail(ErrorKind::InvalidArgument, "strides must be positive");
}

ConvLayer::ConvLayer(ConvSpec spec_, int c_in_, int c_out_) : spec(spec_), c_in(c_in_), c_out(c_out_) {
  spec.validate();
  if (c_in < 1 || c_out < 1) fail(ErrorKind::InvalidArgument, "conv channel counts must be positive");
  weights.assign(static_cast<std::size_t>(c_out) * c_in * spec.kernel[0] * spec.kernel[1] * spec.kernel[2], 0.0f);
  bias.assign(static_cast<std::size_t>(c_out), 0.0f);
}

Tensor5 conv3d(const Tensor5& x, const ConvLayer& layer, unsigned workers) {
  layer.spec.validate();
  if (x.c() != layer.c_in) {
    fail(ErrorKind::InvalidArgument, "conv expects " + std::to_string(layer.c_in) + " input channels, got " +
                                         std::to_string(x.c()));
  }
  const auto [kd, kh, kw] = layer.spec.kernel;
  const auto [sd, sh, sw] = layer.spec.stride;
  const auto [pd, ph, pw] = layer.spec.padding();
  const std::int64_t od = ceil_div(x.d(), sd), oh = ceil_div(x.h(), sh), ow = ceil_div(x.w(), sw);
  Tensor5 out({x.n(), layer.c_out, od, oh, ow});

  const auto jobs = static_cast<std::size_t>(x.n() * layer.c_out);
  parallel_for(jobs, workers, [&](std::size_t job) {
    const std::int64_t n = static_cast<std::int64_t>(job) / layer.c_out;
    const int co = static_cast<int>(static_cast<std::int64_t>(job) % layer.c_out);
    auto dst = out.channel(n, co);
    std::fill(dst.begin(), dst.end(), layer.bias[static_cast<std::size_t>(co)]);

    for (int ci = 0; ci < layer.c_in; ++ci) {
      const auto src = x.channel(n, ci);
      for (int a = 0; a < kd; ++a) {
        for (int b = 0; b < kh; ++b) {
          for (int c = 0; c < kw; ++c) {
            const float wv = layer.weights[static_cast<std::size_t>((((co * layer.c_in + ci) * kd + a) * kh + b) * kw + c)];
            if (wv == 0.0f) continue;
            // Output x range whose input column x*sw + c - pw lies inside [0, W).
            const std::int64_t ox_lo = std::max<std::int64_t>(0, ceil_div(pw - c, sw));
            const std::int64_t ox_hi = std::min<std::int64_t>(ow, ceil_div(x.w() + pw - c, sw));
            if (ox_lo >= ox_hi) continue;
            for (std::int64_t oz = 0; oz < od; ++oz) {
              const std::int64_t iz = oz * sd + a - pd;
              if (iz < 0 || iz >= x.d()) continue;
              for (std::int64_t oy = 0; oy < oh; ++oy) {
                const std::int64_t iy = oy * sh + b - ph;
                if (iy < 0 || iy >= x.h()) continue;
                float* o = &dst[static_cast<std::size_t>((oz * oh + oy) * ow)];
                const float* s = &src[static_cast<std::size_t>((iz * x.h() + iy) * x.w())];
                if (sw == 1) {
                  const float* sp = s + (c - pw);
                  for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) o[ox] += wv * sp[ox];
                } else {
                  for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) o[ox] += wv * s[ox * sw + c - pw];
                }
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor5 elu(Tensor5 x) {
  for (auto& v : x.data()) v = v > 0.0f ? v : std::expm1(v);
  return x;
}

Tensor5 sigmoid(Tensor5 x) {
  for (auto& v : x.data()) v = 1.0f / (1.0f + std::exp(-v));
  return x;
}

Tensor5 add(Tensor5 a, const Tensor5& b) {
  if (a.dims() != b.dims()) fail(ErrorKind::InvalidArgument, "add: tensor dims differ");
  auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
  return a;
}

Tensor5 trilinear_upsample(const Tensor5& x) {
  const std::int64_t h = x.h(), w = x.w();
  Tensor5 out({x.n(), x.c(), x.d(), 2 * h, 2 * w});

  struct Tap {
    std::int64_t lo, hi;
    float frac;
  };
  // Source coordinate (o + 0.5) / 2 - 0.5, clamped at the low edge.
  auto taps = [](std::int64_t in, std::int64_t outn) {
    std::vector<Tap> t(static_cast<std::size_t>(outn));
    for (std::int64_t o = 0; o < outn; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * 0.5 - 0.5);
      const auto lo = static_cast<std::int64_t>(src);
      t[static_cast<std::size_t>(o)] = {lo, std::min(lo + 1, in - 1), static_cast<float>(src - static_cast<double>(lo))};
    }
    return t;
  };
  const auto ty = taps(h, 2 * h);
  const auto tx = taps(w, 2 * w);

  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      for (std::int64_t z = 0; z < x.d(); ++z) {
        for (std::int64_t oy = 0; oy < 2 * h; ++oy) {
          const auto& a = ty[static_cast<std::size_t>(oy)];
          for (std::int64_t ox = 0; ox < 2 * w; ++ox) {
            const auto& b = tx[static_cast<std::size_t>(ox)];
            const float top = x.at(n, c, z, a.lo, b.lo) + b.frac * (x.at(n, c, z, a.lo, b.hi) - x.at(n, c, z, a.lo, b.lo));
            const float bot = x.at(n, c, z, a.hi, b.lo) + b.frac * (x.at(n, c, z, a.hi, b.hi) - x.at(n, c, z, a.hi, b.lo));
            out.at(n, c, z, oy, ox) = top + a.frac * (bot - top);
          }
        }
      }
    }
  }
  return out;
}

Tensor5 acb_forward(const Tensor5& x, const AcbParams& p, unsigned workers) {
  Tensor5 y0 = elu(conv3d(x, p.lateral, workers));
  Tensor5 r = conv3d(elu(conv3d(y0, p.conv_a, workers)), p.conv_b, workers);
  return elu(add(std::move(y0), r));
}

// ---------------------------------------------------------------------------

void NetConfig::validate() const {
  if (in_channels < 1) fail(ErrorKind::InvalidArgument, "in_channels must be >= 1");
  if (levels < 1) fail(ErrorKind::InvalidArgument, "levels must be >= 1");
  if (channels.size() != static_cast<std::size_t>(levels)) {
    fail(ErrorKind::InvalidArgument, "channels must list one width per level");
  }
  for (const int c : channels) {
    if (c < 1) fail(ErrorKind::InvalidArgument, "channel widths must be >= 1");
  }
  if (decoders != 1 && decoders != 2) fail(ErrorKind::InvalidArgument, "decoders must be 1 or 2");
}

const ConvLayer& ParamStore::layer(const std::string& name) const {
  auto it = layers_.find(name);
  if (it == layers_.end()) fail(ErrorKind::InvalidArgument, "missing layer '" + name + "'");
  return it->second;
}

ConvLayer& ParamStore::layer(const std::string& name) {
  auto it = layers_.find(name);
  if (it == layers_.end()) fail(ErrorKind::InvalidArgument, "missing layer '" + name + "'");
  return it->second;
}

AcbParams ParamStore::acb(const std::string& prefix) const {
  return {layer(prefix + ".lateral"), layer(prefix + ".conv_a"), layer(prefix + ".conv_b")};
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, l] : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

namespace {

std::string enc_name(int i) { return "enc" + std::to_string(i); }
std::string dec_name(int p, int i) { return "dec" + std::to_string(p) + "." + std::to_string(i); }
std::string head_name(int p) { return "dec" + std::to_string(p) + ".head"; }

int head_channels(const NetConfig& cfg) { return cfg.decoders == 1 ? 2 : 1; }

// Layer shapes in creation order; init draws from the RNG in this order.
std::vector<std::pair<std::string, ConvLayer>> layout(const NetConfig& cfg) {
  std::vector<std::pair<std::string, ConvLayer>> out;
  const auto& c = cfg.channels;
  auto push_acb = [&](const std::string& prefix, int ch) {
    out.emplace_back(prefix + ".lateral", ConvLayer(kConv1x3x3, ch, ch));
    out.emplace_back(prefix + ".conv_a", ConvLayer(kConv3x3x3, ch, ch));
    out.emplace_back(prefix + ".conv_b", ConvLayer(kConv3x3x3, ch, ch));
  };
  out.emplace_back("embed", ConvLayer(kConv1x5x5, cfg.in_channels, c[0]));
  for (int i = 0; i < cfg.levels; ++i) {
    if (i > 0) out.emplace_back(enc_name(i) + ".down", ConvLayer(kDown1x3x3, c[i - 1], c[i]));
    push_acb(enc_name(i) + ".acb", c[i]);
  }
  for (int p = 0; p < cfg.decoders; ++p) {
    for (int i = cfg.levels - 2; i >= 0; --i) {
      out.emplace_back(dec_name(p, i) + ".proj", ConvLayer(kConv1x1x1, c[i + 1], c[i]));
      push_acb(dec_name(p, i) + ".acb", c[i]);
    }
    out.emplace_back(head_name(p), ConvLayer(kConv1x1x1, c[0], head_channels(cfg)));
  }
  return out;
}

Tensor5 decode(const std::vector<Tensor5>& enc, const NetConfig& cfg, const ParamStore& params, int path,
               unsigned workers) {
  Tensor5 f = enc.back();
  for (int i = cfg.levels - 2; i >= 0; --i) {
    // Projecting before upsampling is equivalent for a pointwise conv and 4x cheaper.
    f = trilinear_upsample(conv3d(f, params.layer(dec_name(path, i) + ".proj"), workers));
    f = acb_forward(add(std::move(f), enc[static_cast<std::size_t>(i)]), params.acb(dec_name(path, i) + ".acb"),
                    workers);
  }
  return sigmoid(conv3d(f, params.layer(head_name(path)), workers));
}

Tensor5 take_channel(const Tensor5& t, std::int64_t c) {
  Tensor5 out({t.n(), 1, t.d(), t.h(), t.w()});
  for (std::int64_t n = 0; n < t.n(); ++n) {
    const auto src = t.channel(n, c);
    std::copy(src.begin(), src.end(), out.channel(n, 0).begin());
  }
  return out;
}

}  // namespace

ParamStore init_params(const NetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ParamStore store;
  for (auto& [name, l] : layout(cfg)) {
    const double fan_in = static_cast<double>(l.c_in) * l.spec.kernel[0] * l.spec.kernel[1] * l.spec.kernel[2];
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : l.weights) v = static_cast<float>(dist(rng));
    for (auto& v : l.bias) v = static_cast<float>(dist(rng));
    store.layers().emplace(name, std::move(l));
  }
  return store;
}

std::size_t parameter_count_formula(const NetConfig& cfg) {
  cfg.validate();
  const auto& c = cfg.channels;
  auto acb = [](std::size_t ch) { return 63 * ch * ch + 3 * ch; };
  const auto c0 = static_cast<std::size_t>(c[0]);
  std::size_t total = 25 * static_cast<std::size_t>(cfg.in_channels) * c0 + c0;
  for (int i = 0; i < cfg.levels; ++i) {
    const auto ci = static_cast<std::size_t>(c[i]);
    total += acb(ci);
    if (i > 0) total += 9 * static_cast<std::size_t>(c[i - 1]) * ci + ci;
  }
  std::size_t path = 0;
  for (int i = 0; i + 1 < cfg.levels; ++i) {
    const auto ci = static_cast<std::size_t>(c[i]);
    path += static_cast<std::size_t>(c[i + 1]) * ci + ci + acb(ci);
  }
  const auto k = static_cast<std::size_t>(head_channels(cfg));
  path += k * c0 + k;
  return total + static_cast<std::size_t>(cfg.decoders) * path;
}

NetOutput resunet_forward(const Tensor5& x, const NetConfig& cfg, const ParamStore& params, unsigned workers) {
  cfg.validate();
  if (x.c() != cfg.in_channels) {
    fail(ErrorKind::InvalidArgument, "network expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                                         std::to_string(x.c()));
  }
  const std::int64_t factor = std::int64_t{1} << (cfg.levels - 1);
  if (x.h() % factor != 0 || x.w() % factor != 0) {
    fail(ErrorKind::InvalidArgument, "H and W must be divisible by " + std::to_string(factor) + " for " +
                                         std::to_string(cfg.levels) + " levels");
  }

  std::vector<Tensor5> enc;
  enc.reserve(static_cast<std::size_t>(cfg.levels));
  Tensor5 f = elu(conv3d(x, params.layer("embed"), workers));
  for (int i = 0; i < cfg.levels; ++i) {
    if (i > 0) f = elu(conv3d(f, params.layer(enc_name(i) + ".down"), workers));
    f = acb_forward(f, params.acb(enc_name(i) + ".acb"), workers);
    enc.push_back(f);
  }

  if (cfg.decoders == 1) {
    const Tensor5 head = decode(enc, cfg, params, 0, workers);
    return {take_channel(head, 0), take_channel(head, 1)};
  }
  return {decode(enc, cfg, params, 0, workers), decode(enc, cfg, params, 1, workers)};
}

// ---------------------------------------------------------------------------

void save_params(const std::filesystem::path& dir, const NetConfig& cfg, const ParamStore& params) {
  using nlohmann::json;
  cfg.validate();
  std::filesystem::create_directories(dir);
  json layers = json::array();
  for (const auto& [name, l] : params.layers()) {
    const std::string wfile = name + ".weight.emv";
    const std::string bfile = name + ".bias.emv";
    const Dims wdims{static_cast<std::int64_t>(l.c_out) * l.c_in * l.spec.kernel[0], l.spec.kernel[1], l.spec.kernel[2]};
    save_volume(dir / wfile, Volume<float>(wdims, l.weights));
    save_volume(dir / bfile, Volume<float>(Dims{1, 1, l.c_out}, l.bias));
    layers.push_back({{"name", name},
                      {"weight", wfile},
                      {"bias", bfile},
                      {"c_in", l.c_in},
                      {"c_out", l.c_out},
                      {"kernel", l.spec.kernel},
                      {"stride", l.spec.stride}});
  }
  json manifest{{"config",
                 {{"in_channels", cfg.in_channels},
                  {"levels", cfg.levels},
                  {"channels", cfg.channels},
                  {"decoders", cfg.decoders},
                  {"seed", cfg.seed}}},
                {"layers", std::move(layers)}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
}

LoadedNet load_params(const std::filesystem::path& dir) {
  using nlohmann::json;
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorKind::Io, "cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
    LoadedNet net;
    const auto& c = manifest.at("config");
    net.config.in_channels = c.at("in_channels").get<int>();
    net.config.levels = c.at("levels").get<int>();
    net.config.channels = c.at("channels").get<std::vector<int>>();
    net.config.decoders = c.at("decoders").get<int>();
    net.config.seed = c.at("seed").get<std::uint64_t>();
    net.config.validate();

    for (const auto& entry : manifest.at("layers")) {
      ConvSpec spec{entry.at("kernel").get<std::array<int, 3>>(), entry.at("stride").get<std::array<int, 3>>()};
      ConvLayer l(spec, entry.at("c_in").get<int>(), entry.at("c_out").get<int>());
      auto w = load_volume_as<float>(dir / entry.at("weight").get<std::string>());
      auto b = load_volume_as<float>(dir / entry.at("bias").get<std::string>());
      if (w.size() != l.weights.size() || b.size() != l.bias.size()) {
        fail(ErrorKind::SizeMismatch, "tensor files for layer '" + entry.at("name").get<std::string>() +
                                          "' do not match its shape");
      }
      std::copy(w.data().begin(), w.data().end(), l.weights.begin());
      std::copy(b.data().begin(), b.data().end(), l.bias.begin());
      net.params.layers().emplace(entry.at("name").get<std::string>(), std::move(l));
    }
    return net;
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "bad parameter manifest: " + std::string(e.what()));
  }
}

}  // namespace mitoseg::nets
