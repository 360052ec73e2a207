#pragma once

// Class-balanced binary cross entropy.
//
// The foreground ratio wf of a binary target sets two per-voxel weights so
// that the total weight on foreground equals the total on background:
//
//   wf >  0.5:  w = y + wf / (1 - wf) * (1 - y)
//   wf <= 0.5:  w = (1 - wf) / wf * y + (1 - y)
//
// and the loss is the weighted mean of the elementwise BCE. All sums are in
// double precision.

#include <vector>

#include "mitoseg/volume.hpp"

namespace mitoseg {

/// Predictions are clamped to [kProbEps, 1 - kProbEps] before taking logs.
inline constexpr double kProbEps = 1e-7;

/// Fraction of voxels equal to 1. Throws a domain error for non-binary input.
double foreground_ratio(const Volume<float>& y);

struct WeightMap {
  std::vector<double> w;  // per voxel, in the target's layout
  double wf = 0.0;
  double foreground_weight = 1.0;
  double background_weight = 1.0;
};

/// Throws degenerate-target if the target is all background or all foreground.
WeightMap weight_map(const Volume<float>& y);

struct WbceResult {
  double loss = 0.0;
  /// d loss / d x, zero where x was clamped.
  Volume<float> gradient;
};

/// Throws invalid-argument on a dims mismatch, a domain error for NaN or
/// out-of-range predictions or a non-binary target, and degenerate-target as
/// `weight_map`.
WbceResult wbce(const Volume<float>& x, const Volume<float>& y);

/// Plain (unweighted) mean BCE with the same clamping.
double mean_bce(const Volume<float>& x, const Volume<float>& y);

/// Sum of the mask and boundary WBCE terms.
double total_loss(const Volume<float>& xm, const Volume<float>& ym, const Volume<float>& xb, const Volume<float>& yb);

}  // namespace mitoseg
