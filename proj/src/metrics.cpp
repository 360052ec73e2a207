#include "mitoseg/metrics.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "mitoseg/parallel.hpp"

namespace mitoseg {

template <class Label>
OverlapTable overlap_table(const LabelVolume<Label>& pred, const LabelVolume<Label>& gt, unsigned workers) {
  if (!(pred.dims() == gt.dims())) {
    fail(ErrorKind::InvalidArgument, "dimension mismatch: pred " + to_string(pred.dims()) + " vs gt " +
                                         to_string(gt.dims()));
  }

  const auto depth = static_cast<std::size_t>(pred.dims().d);
  const std::size_t blocks = std::min<std::size_t>(depth, resolve_workers(workers));
  std::vector<OverlapTable> partial(blocks);

  parallel_for(blocks, workers, [&](std::size_t b) {
    auto& t = partial[b];
    const std::size_t z_begin = depth * b / blocks, z_end = depth * (b + 1) / blocks;
    const std::size_t plane = static_cast<std::size_t>(pred.dims().h * pred.dims().w);
    const auto p = pred.data().subspan(z_begin * plane, (z_end - z_begin) * plane);
    const auto g = gt.data().subspan(z_begin * plane, (z_end - z_begin) * plane);

    // Runs of identical (pred, gt) values are common in label volumes.
    std::size_t i = 0;
    while (i < p.size()) {
      const Label pl = p[i], gl = g[i];
      std::size_t j = i + 1;
      while (j < p.size() && p[j] == pl && g[j] == gl) ++j;
      const std::uint64_t run = j - i;
      if (pl) t.pred_totals[pl] += run;
      if (gl) t.gt_totals[gl] += run;
      if (pl && gl) t.intersections[{pl, gl}] += run;
      i = j;
    }
  });

  OverlapTable out;
  for (auto& t : partial) {
    for (const auto& [k, v] : t.intersections) out.intersections[k] += v;
    for (const auto& [k, v] : t.pred_totals) out.pred_totals[k] += v;
    for (const auto& [k, v] : t.gt_totals) out.gt_totals[k] += v;
  }
  return out;
}

template OverlapTable overlap_table(const LabelVolume<std::uint32_t>&, const LabelVolume<std::uint32_t>&, unsigned);
template OverlapTable overlap_table(const LabelVolume<std::uint64_t>&, const LabelVolume<std::uint64_t>&, unsigned);

double iou(std::uint64_t inter, std::uint64_t pred_voxels, std::uint64_t gt_voxels) noexcept {
  const std::uint64_t uni = pred_voxels + gt_voxels - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void check_threshold(double t) {
  if (!(t > 0.5 && t <= 1.0)) {
    fail(ErrorKind::UnsupportedThreshold,
         "IoU threshold must satisfy 0.5 < t <= 1 for one-to-one matching, got " + std::to_string(t));
  }
}

}  // namespace

std::vector<MatchedPair> match_instances(const OverlapTable& table, double iou_threshold) {
  check_threshold(iou_threshold);
  std::vector<MatchedPair> pairs;
  std::set<std::uint64_t> seen_pred, seen_gt;
  for (const auto& [key, inter] : table.intersections) {
    const auto [p, g] = key;
    const double v = iou(inter, table.pred_totals.at(p), table.gt_totals.at(g));
    if (v < iou_threshold) continue;
    // Two sets each overlapping more than half of a third cannot be disjoint.
    if (!seen_pred.insert(p).second || !seen_gt.insert(g).second) {
      throw std::logic_error("IoU above 0.5 matched a label twice; overlap table is inconsistent");
    }
    pairs.push_back({p, g, v});
  }
  return pairs;
}

namespace {

struct Ranked {
  double score;
  bool tp;
};

BinStats bin_stats(std::vector<Ranked> preds, std::uint64_t n_gt) {
  BinStats s;
  const auto n_pred = static_cast<std::uint64_t>(preds.size());
  s.tp = static_cast<std::uint64_t>(std::count_if(preds.begin(), preds.end(), [](const Ranked& r) { return r.tp; }));
  s.fp = n_pred - s.tp;
  s.fn = n_gt - s.tp;

  if (n_gt == 0) {
    const double v = n_pred == 0 ? 1.0 : 0.0;
    s.ap = s.precision = s.recall = s.f1 = v;
    return s;
  }
  if (n_pred == 0) return s;

  s.precision = static_cast<double>(s.tp) / static_cast<double>(n_pred);
  s.recall = static_cast<double>(s.tp) / static_cast<double>(n_gt);
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;

  std::stable_sort(preds.begin(), preds.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  // One PR point per distinct score.
  std::vector<double> precision, recall;
  std::uint64_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < preds.size();) {
    std::size_t j = i;
    while (j < preds.size() && preds[j].score == preds[i].score) {
      tp += preds[j].tp;
      ++seen;
      ++j;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    i = j;
  }
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  s.ap = ap;
  return s;
}

}  // namespace

MatchReport ap_at_threshold(const InstanceTable& pred_table, const InstanceTable& gt_table,
                            const std::vector<MatchedPair>& pairs, double iou_threshold, const SizeBins& bins) {
  check_threshold(iou_threshold);
  bins.validate();

  std::map<std::uint64_t, std::uint64_t> gt_of_pred;
  std::set<std::uint64_t> matched_gt;
  for (const auto& m : pairs) {
    if (!pred_table.find(m.pred) || !gt_table.find(m.gt)) {
      fail(ErrorKind::InvalidArgument, "matched pair (" + std::to_string(m.pred) + ", " + std::to_string(m.gt) +
                                           ") refers to a label missing from the instance tables");
    }
    if (!gt_of_pred.emplace(m.pred, m.gt).second || !matched_gt.insert(m.gt).second) {
      fail(ErrorKind::InvalidArgument, "matched pairs must be one-to-one");
    }
  }

  MatchReport report;
  report.iou_threshold = iou_threshold;
  report.pairs = pairs;

  std::array<std::vector<Ranked>, 4> ranked;
  std::array<std::uint64_t, 4> n_gt{};
  constexpr auto kAll = static_cast<std::size_t>(Bin::All);

  for (const auto& row : pred_table.rows) {
    const auto it = gt_of_pred.find(row.label);
    const bool tp = it != gt_of_pred.end();
    const SizeCategory cat = tp ? gt_table.find(it->second)->category : row.category;
    ranked[static_cast<std::size_t>(cat)].push_back({row.score, tp});
    ranked[kAll].push_back({row.score, tp});
    (tp ? report.tp : report.fp).push_back(row.label);
  }
  for (const auto& row : gt_table.rows) {
    ++n_gt[static_cast<std::size_t>(row.category)];
    ++n_gt[kAll];
    if (!matched_gt.count(row.label)) report.fn.push_back(row.label);
  }
  for (std::size_t b = 0; b < 4; ++b) report.bins[b] = bin_stats(std::move(ranked[b]), n_gt[b]);
  return report;
}

template <class Label>
MatchReport evaluate_instances(const LabelVolume<Label>& pred, const LabelVolume<Label>& gt,
                               const Volume<float>* score_source, double iou_threshold, const SizeBins& bins,
                               unsigned workers) {
  check_threshold(iou_threshold);
  const auto table = overlap_table(pred, gt, workers);
  const auto pairs = match_instances(table, iou_threshold);
  const auto pred_rows = instance_table(pred, score_source, bins);
  const auto gt_rows = instance_table(gt, nullptr, bins);
  return ap_at_threshold(pred_rows, gt_rows, pairs, iou_threshold, bins);
}

template MatchReport evaluate_instances(const LabelVolume<std::uint32_t>&, const LabelVolume<std::uint32_t>&,
                                        const Volume<float>*, double, const SizeBins&, unsigned);
template MatchReport evaluate_instances(const LabelVolume<std::uint64_t>&, const LabelVolume<std::uint64_t>&,
                                        const Volume<float>*, double, const SizeBins&, unsigned);

std::string report_to_json(const MatchReport& report, int indent) {
  using nlohmann::json;
  auto stats = [](const BinStats& s) {
    return json{{"ap", s.ap}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                {"tp", s.tp}, {"fp", s.fp},               {"fn", s.fn}};
  };
  json pairs = json::array();
  for (const auto& p : report.pairs) pairs.push_back({{"pred", p.pred}, {"gt", p.gt}, {"iou", p.iou}});
  json doc{{"iou_threshold", report.iou_threshold},
           {"bins",
            {{"small", stats(report.bin(Bin::Small))},
             {"med", stats(report.bin(Bin::Medium))},
             {"large", stats(report.bin(Bin::Large))},
             {"all", stats(report.bin(Bin::All))}}},
           {"pairs", std::move(pairs)}};
  return doc.dump(indent);
}

SemanticScores semantic_metrics(const Volume<std::uint8_t>& pred, const Volume<std::uint8_t>& gt) {
  if (!(pred.dims() == gt.dims())) {
    fail(ErrorKind::InvalidArgument, "dimension mismatch: pred " + to_string(pred.dims()) + " vs gt " +
                                         to_string(gt.dims()));
  }
  validate_binary(pred, "predicted mask");
  validate_binary(gt, "ground-truth mask");

  std::uint64_t a = 0, b = 0, inter = 0;
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    a += p[i];
    b += g[i];
    inter += p[i] & g[i];
  }
  if (a + b == 0) return {1.0, 1.0};
  return {static_cast<double>(inter) / static_cast<double>(a + b - inter),
          2.0 * static_cast<double>(inter) / static_cast<double>(a + b)};
}

}  // namespace mitoseg
