#include "mitoseg/loss.hpp"

#include <cmath>

namespace mitoseg {

namespace {

void check_inputs(const Volume<float>& x, const Volume<float>& y) {
  if (!(x.dims() == y.dims())) {
    fail(ErrorKind::InvalidArgument, "dimension mismatch: prediction " + to_string(x.dims()) + " vs target " +
                                         to_string(y.dims()));
  }
  for (const float v : x.data()) {
    if (std::isnan(v)) fail(ErrorKind::Domain, "prediction contains NaN");
    if (v < 0.0f || v > 1.0f) fail(ErrorKind::Domain, "prediction must hold probabilities in [0, 1]");
  }
}

struct Clamped {
  double value;
  bool clamped;
};

Clamped clamp_prob(float v) {
  const double x = v;
  if (x < kProbEps) return {kProbEps, true};
  if (x > 1.0 - kProbEps) return {1.0 - kProbEps, true};
  return {x, false};
}

double bce(double x, float y) { return y != 0.0f ? -std::log(x) : -std::log1p(-x); }

}  // namespace

double foreground_ratio(const Volume<float>& y) {
  validate_binary(y, "target");
  std::uint64_t ones = 0;
  for (const float v : y.data()) ones += v != 0.0f;
  return static_cast<double>(ones) / static_cast<double>(y.size());
}

WeightMap weight_map(const Volume<float>& y) {
  WeightMap out;
  out.wf = foreground_ratio(y);
  if (out.wf == 0.0 || out.wf == 1.0) {
    fail(ErrorKind::DegenerateTarget, out.wf == 0.0 ? "target has no foreground voxels" : "target has no background voxels");
  }
  if (out.wf > 0.5) {
    out.foreground_weight = 1.0;
    out.background_weight = out.wf / (1.0 - out.wf);
  } else {
    out.foreground_weight = (1.0 - out.wf) / out.wf;
    out.background_weight = 1.0;
  }
  const auto yd = y.data();
  out.w.resize(yd.size());
  for (std::size_t i = 0; i < yd.size(); ++i) out.w[i] = yd[i] != 0.0f ? out.foreground_weight : out.background_weight;
  return out;
}

WbceResult wbce(const Volume<float>& x, const Volume<float>& y) {
  check_inputs(x, y);
  const WeightMap wm = weight_map(y);

  WbceResult out;
  out.gradient = Volume<float>(x.dims());
  const auto xd = x.data();
  const auto yd = y.data();
  auto gd = out.gradient.data();
  const double n = static_cast<double>(x.size());

  double sum = 0.0;
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double w = wm.w[i];
    const auto [xc, clamped] = clamp_prob(xd[i]);
    sum += w * bce(xc, yd[i]);
    gd[i] = clamped ? 0.0f : static_cast<float>(w * (xc - yd[i]) / (xc * (1.0 - xc)) / n);
  }
  out.loss = sum / n;
  return out;
}

double mean_bce(const Volume<float>& x, const Volume<float>& y) {
  check_inputs(x, y);
  validate_binary(y, "target");
  double sum = 0.0;
  const auto xd = x.data();
  const auto yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) sum += bce(clamp_prob(xd[i]).value, yd[i]);
  return sum / static_cast<double>(x.size());
}

double total_loss(const Volume<float>& xm, const Volume<float>& ym, const Volume<float>& xb, const Volume<float>& yb) {
  return wbce(xm, ym).loss + wbce(xb, yb).loss;
}

}  // namespace mitoseg
