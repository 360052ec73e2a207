#pragma once

// Instance evaluation (IoU matching, size-binned average precision) and
// semantic overlap scores.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mitoseg/labeling.hpp"
#include "mitoseg/volume.hpp"

namespace mitoseg {

struct OverlapTable {
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> intersections;  // (pred, gt) -> voxels
  std::map<std::uint64_t, std::uint64_t> pred_totals;
  std::map<std::uint64_t, std::uint64_t> gt_totals;
};

/// Counts every co-occurring nonzero (pred, gt) label pair in one pass.
/// Slices are accumulated on up to `workers` threads and merged by summation.
///
/// Throws invalid-argument on a dims mismatch.
template <class Label>
OverlapTable overlap_table(const LabelVolume<Label>& pred, const LabelVolume<Label>& gt, unsigned workers = 1);

struct MatchedPair {
  std::uint64_t pred = 0;
  std::uint64_t gt = 0;
  double iou = 0.0;
};

/// IoU = inter / (|p| + |g| - inter).
double iou(std::uint64_t inter, std::uint64_t pred_voxels, std::uint64_t gt_voxels) noexcept;

/// All (pred, gt) pairs with IoU >= threshold, sorted by pred label. Above 0.5
/// each label can appear in at most one pair.
///
/// Throws unsupported-threshold unless 0.5 < threshold <= 1.
std::vector<MatchedPair> match_instances(const OverlapTable& table, double iou_threshold);

struct BinStats {
  double ap = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

enum class Bin { Small = 0, Medium = 1, Large = 2, All = 3 };

struct MatchReport {
  double iou_threshold = 0.75;
  std::vector<MatchedPair> pairs;
  std::vector<std::uint64_t> tp;  // matched pred labels
  std::vector<std::uint64_t> fp;  // unmatched pred labels
  std::vector<std::uint64_t> fn;  // unmatched gt labels
  std::array<BinStats, 4> bins{};

  const BinStats& bin(Bin b) const { return bins[static_cast<std::size_t>(b)]; }
};

/// Average precision per size bin.
///
/// Predictions are ranked by descending score. Predictions with equal scores
/// form a single rank step, so the result does not depend on label ids. AP is
/// the area under the monotone precision envelope over all recall steps.
///
/// A matched prediction falls in the bin of its ground-truth instance; an
/// unmatched prediction or ground-truth instance falls in the bin of its own
/// size. With no ground truth in a bin, AP is 1 if the bin also has no
/// predictions and 0 otherwise.
///
/// Throws invalid-argument if a paired label is missing from either table.
MatchReport ap_at_threshold(const InstanceTable& pred_table, const InstanceTable& gt_table,
                            const std::vector<MatchedPair>& pairs, double iou_threshold, const SizeBins& bins = {});

/// overlap_table + match_instances + ap_at_threshold. Scores come from
/// `score_source` (mean probability per instance) when given, else voxel count.
template <class Label>
MatchReport evaluate_instances(const LabelVolume<Label>& pred, const LabelVolume<Label>& gt,
                               const Volume<float>* score_source = nullptr, double iou_threshold = 0.75,
                               const SizeBins& bins = {}, unsigned workers = 1);

std::string report_to_json(const MatchReport& report, int indent = 2);

struct SemanticScores {
  double jaccard = 0.0;
  double dsc = 0.0;
};

/// Jaccard and Dice over the foreground of two binary masks; (1, 1) when both
/// are empty. Throws invalid-argument on a dims mismatch and a domain error for
/// non-binary input.
SemanticScores semantic_metrics(const Volume<std::uint8_t>& pred, const Volume<std::uint8_t>& gt);

}  // namespace mitoseg
