#include "mitoseg/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "mitoseg/denoise.hpp"
#include "mitoseg/loss.hpp"
#include "mitoseg/metrics.hpp"
#include "mitoseg/volume.hpp"

namespace mitoseg::cli {

using nlohmann::json;

void PipelineConfig::validate() const {
  seed.validate();
  bins.validate();
  if (!(iou_threshold > 0.5 && iou_threshold <= 1.0)) {
    fail(ErrorKind::UnsupportedThreshold, "IoU threshold must satisfy 0.5 < t <= 1, got " + std::to_string(iou_threshold));
  }
  if (chunk.d < 1 || chunk.h < 1 || chunk.w < 1) fail(ErrorKind::InvalidArgument, "chunk dims must be positive");
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path, PipelineConfig cfg) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  try {
    const json doc = json::parse(in);
    if (doc.contains("t1")) cfg.seed.t1 = doc["t1"].get<double>();
    if (doc.contains("t2")) cfg.seed.t2 = doc["t2"].get<double>();
    if (doc.contains("connectivity")) cfg.connectivity = connectivity_from_int(doc["connectivity"].get<int>());
    if (doc.contains("min_size")) cfg.min_size = doc["min_size"].get<std::uint64_t>();
    if (doc.contains("iou")) cfg.iou_threshold = doc["iou"].get<double>();
    if (doc.contains("bins")) {
      const auto b = doc["bins"].get<std::array<std::uint64_t, 2>>();
      cfg.bins = {b[0], b[1]};
    }
    if (doc.contains("chunk")) {
      const auto c = doc["chunk"].get<std::array<std::int64_t, 3>>();
      cfg.chunk = {c[0], c[1], c[2]};
    }
    if (doc.contains("workers")) cfg.workers = doc["workers"].get<unsigned>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  return cfg;
}

namespace {

// Flag values as parsed; only those actually given override the config file.
struct Flags {
  std::string config;
  double t1 = 0.9;
  double t2 = 0.8;
  int connectivity = 6;
  std::uint64_t min_size = 0;
  double iou = 0.75;
  std::vector<std::int64_t> chunk;
  unsigned workers = 1;

  CLI::Option* t1_opt = nullptr;
  CLI::Option* t2_opt = nullptr;
  CLI::Option* conn_opt = nullptr;
  CLI::Option* min_size_opt = nullptr;
  CLI::Option* iou_opt = nullptr;
  CLI::Option* chunk_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

void add_config_flag(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override it")->check(CLI::ExistingFile);
}
void add_workers_flag(CLI::App* cmd, Flags& f) {
  f.workers_opt = cmd->add_option("--workers", f.workers, "Worker threads (0 = all cores)");
}

PipelineConfig resolve(const Flags& f) {
  PipelineConfig cfg;
  if (!f.config.empty()) cfg = load_pipeline_config(f.config, cfg);
  auto given = [](const CLI::Option* o) { return o != nullptr && o->count() > 0; };
  if (given(f.t1_opt)) cfg.seed.t1 = f.t1;
  if (given(f.t2_opt)) cfg.seed.t2 = f.t2;
  if (given(f.conn_opt)) cfg.connectivity = connectivity_from_int(f.connectivity);
  if (given(f.min_size_opt)) cfg.min_size = f.min_size;
  if (given(f.iou_opt)) cfg.iou_threshold = f.iou;
  if (given(f.chunk_opt)) {
    if (f.chunk.size() != 3) fail(ErrorKind::InvalidArgument, "--chunk takes d,h,w");
    cfg.chunk = {f.chunk[0], f.chunk[1], f.chunk[2]};
  }
  if (given(f.workers_opt)) cfg.workers = f.workers;
  cfg.validate();
  return cfg;
}

template <class To>
Volume<To> convert_labels(const AnyVolume& any, const std::string& what) {
  return std::visit(
      [&](const auto& v) -> Volume<To> {
        using From = typename std::decay_t<decltype(v)>::value_type;
        if constexpr (std::is_floating_point_v<From>) {
          fail(ErrorKind::UnsupportedDtype, what + " must be an integer volume");
        } else {
          std::vector<To> data(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (static_cast<std::uint64_t>(v[i]) > std::numeric_limits<To>::max()) {
              fail(ErrorKind::Domain, what + " holds a value too large for " + to_string(dtype_of<To>()));
            }
            data[i] = static_cast<To>(v[i]);
          }
          return Volume<To>(v.dims(), std::move(data));
        }
      },
      any);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text << '\n';
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

int cmd_segment(const std::string& mask_path, const std::string& boundary_path, const std::string& out_path,
                const Flags& flags, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = resolve(flags);
  const auto mask = load_volume_as<float>(mask_path);
  const auto boundary = load_volume_as<float>(boundary_path);
  const SeedMap seeds = make_seed_map(mask, boundary, cfg.seed, cfg.workers);

  const Dims& dims = seeds.dims();
  const Dims chunk{std::min(cfg.chunk.d, dims.d), std::min(cfg.chunk.h, dims.h), std::min(cfg.chunk.w, dims.w)};
  const ChunkGrid grid(dims, chunk, {1, 1, 1});
  const auto labels = label_components_chunked<std::uint32_t>(seeds, grid, cfg.connectivity, cfg.min_size, cfg.workers);
  save_volume(out_path, labels);

  const auto table = instance_table(labels, &mask, cfg.bins);
  std::map<SizeCategory, std::uint64_t> counts;
  for (const auto& row : table.rows) ++counts[row.category];
  const json report{{"instances", table.size()},
                    {"bins",
                     {{"small", counts[SizeCategory::Small]},
                      {"med", counts[SizeCategory::Medium]},
                      {"large", counts[SizeCategory::Large]}}}};
  out << report.dump() << '\n';
  err << "segment: " << table.size() << " instances in " << to_string(dims) << " -> " << out_path << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path, const std::string& report_path,
                 const std::string& score_path, const Flags& flags, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = resolve(flags);
  const auto pred = convert_labels<std::uint32_t>(load_volume(pred_path), "prediction");
  const auto gt = convert_labels<std::uint32_t>(load_volume(gt_path), "ground truth");
  std::unique_ptr<Volume<float>> scores;
  if (!score_path.empty()) {
    scores = std::make_unique<Volume<float>>(load_volume_as<float>(score_path));
    validate_probability(*scores, "score volume");
  }
  const auto report = evaluate_instances(pred, gt, scores.get(), cfg.iou_threshold, cfg.bins, cfg.workers);
  write_text(report_path, report_to_json(report));
  const auto& all = report.bin(Bin::All);
  out << json{{"ap", all.ap}}.dump() << '\n';
  err << "evaluate: AP@" << cfg.iou_threshold << " = " << all.ap << " (tp " << all.tp << ", fp " << all.fp << ", fn "
      << all.fn << ")\n";
  return kExitOk;
}

int cmd_semantic_eval(const std::string& pred_path, const std::string& gt_path, const std::string& report_path,
                      std::ostream& out, std::ostream& err) {
  const auto pred = convert_labels<std::uint8_t>(load_volume(pred_path), "predicted mask");
  const auto gt = convert_labels<std::uint8_t>(load_volume(gt_path), "ground-truth mask");
  const auto s = semantic_metrics(pred, gt);
  const std::string text = json{{"jaccard", s.jaccard}, {"dsc", s.dsc}}.dump();
  if (!report_path.empty()) write_text(report_path, text);
  out << text << '\n';
  err << "semantic-eval: jaccard " << s.jaccard << ", dsc " << s.dsc << '\n';
  return kExitOk;
}

int cmd_loss(const std::string& xm, const std::string& ym, const std::string& xb, const std::string& yb,
             std::ostream& out, std::ostream& err) {
  const double mask_term = wbce(load_volume_as<float>(xm), load_volume_as<float>(ym)).loss;
  const double boundary_term = wbce(load_volume_as<float>(xb), load_volume_as<float>(yb)).loss;
  const double total = mask_term + boundary_term;
  out << json{{"loss", total}, {"mask", mask_term}, {"boundary", boundary_term}}.dump() << '\n';
  err << "loss: " << total << '\n';
  return kExitOk;
}

int cmd_denoise(const std::string& in_path, const std::string& out_path, const std::vector<std::string>& mask_paths,
                const std::vector<std::string>& kernel_paths, const Flags& flags, std::ostream& out,
                std::ostream& err) {
  const PipelineConfig cfg = resolve(flags);
  if (mask_paths.size() != kernel_paths.size()) {
    fail(ErrorKind::InvalidArgument, "each --noise-mask needs a matching --kernels file");
  }
  std::map<std::int64_t, Volume<std::uint8_t>> masks;
  std::map<std::int64_t, KernelField> kernels;
  for (std::size_t i = 0; i < mask_paths.size(); ++i) {
    auto kf = load_kernel_file(kernel_paths[i]);
    if (masks.count(kf.slice_index)) {
      fail(ErrorKind::InvalidArgument, "slice " + std::to_string(kf.slice_index) + " listed twice");
    }
    masks.emplace(kf.slice_index, load_volume_as<std::uint8_t>(mask_paths[i]));
    kernels.emplace(kf.slice_index, std::move(kf.field));
  }

  const auto volume = load_volume(in_path);
  const AnyVolume restored = std::visit(
      [&](const auto& v) -> AnyVolume {
        using T = typename std::decay_t<decltype(v)>::value_type;
        if constexpr (std::is_same_v<T, std::uint8_t> || std::is_same_v<T, std::uint16_t> || std::is_same_v<T, float>) {
          return restore_slices(v, masks, kernels, cfg.workers);
        } else {
          fail(ErrorKind::UnsupportedDtype, "denoise supports u8, u16 and f32 volumes");
        }
      },
      volume);
  save_volume(out_path, restored);

  std::uint64_t pixels = 0;
  for (const auto& [z, m] : masks) {
    for (const auto v : m.data()) pixels += v;
  }
  out << json{{"slices", masks.size()}, {"pixels", pixels}}.dump() << '\n';
  err << "denoise: restored " << pixels << " pixels in " << masks.size() << " slices -> " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mitochondria instance segmentation post-processing and evaluation"};
  app.name("mitoseg");
  app.require_subcommand(1);

  Flags seg_flags, eval_flags, denoise_flags;
  std::string mask, boundary, out_path, pred, gt, report, score, in_path, mask_gt, boundary_gt;
  std::vector<std::string> noise_masks, kernel_files;

  auto* segment = app.add_subcommand("segment", "Seed map + connected components -> label volume");
  segment->add_option("--mask", mask, "Semantic-mask probabilities (EMV1 f32)")->required();
  segment->add_option("--boundary", boundary, "Instance-boundary probabilities (EMV1 f32)")->required();
  segment->add_option("--out", out_path, "Output label volume (EMV1 u32)")->required();
  seg_flags.t1_opt = segment->add_option("--t1", seg_flags.t1, "Mask threshold (seed iff mask > t1)");
  seg_flags.t2_opt = segment->add_option("--t2", seg_flags.t2, "Boundary threshold (seed iff boundary < t2)");
  seg_flags.conn_opt = segment->add_option("--connectivity", seg_flags.connectivity, "6 or 26");
  seg_flags.min_size_opt = segment->add_option("--min-size", seg_flags.min_size, "Drop components smaller than this");
  seg_flags.chunk_opt = segment->add_option("--chunk", seg_flags.chunk, "Chunk dims d,h,w")->delimiter(',')->expected(3);
  add_workers_flag(segment, seg_flags);
  add_config_flag(segment, seg_flags);

  auto* evaluate = app.add_subcommand("evaluate", "AP at an IoU threshold with size bins");
  evaluate->add_option("--pred", pred, "Predicted labels (EMV1 integer)")->required();
  evaluate->add_option("--gt", gt, "Ground-truth labels (EMV1 integer)")->required();
  evaluate->add_option("--report", report, "Output JSON report")->required();
  evaluate->add_option("--score", score, "Probability volume used to score instances (default: voxel count)");
  eval_flags.iou_opt = evaluate->add_option("--iou", eval_flags.iou, "IoU threshold, 0.5 < t <= 1");
  add_workers_flag(evaluate, eval_flags);
  add_config_flag(evaluate, eval_flags);

  auto* semantic = app.add_subcommand("semantic-eval", "Jaccard and DSC of two binary masks");
  semantic->add_option("--pred", pred, "Predicted mask (EMV1 integer, values 0/1)")->required();
  semantic->add_option("--gt", gt, "Ground-truth mask (EMV1 integer, values 0/1)")->required();
  semantic->add_option("--report", report, "Optional JSON output file");

  auto* loss = app.add_subcommand("loss", "Weighted BCE of mask and boundary predictions");
  loss->add_option("--mask", mask, "Predicted mask probabilities (EMV1 f32)")->required();
  loss->add_option("--mask-gt", mask_gt, "Binary mask target (EMV1 f32)")->required();
  loss->add_option("--boundary", boundary, "Predicted boundary probabilities (EMV1 f32)")->required();
  loss->add_option("--boundary-gt", boundary_gt, "Binary boundary target (EMV1 f32)")->required();

  auto* denoise = app.add_subcommand("denoise", "Restore marked slices from their neighbours");
  denoise->add_option("--in", in_path, "Input volume (EMV1 u8/u16/f32)")->required();
  denoise->add_option("--out", out_path, "Output volume")->required();
  denoise->add_option("--noise-mask", noise_masks, "Noise mask (EMV1 u8, 1xHxW); repeatable");
  denoise->add_option("--kernels", kernel_files, "Kernel field (EMV1 f32 + .json sidecar); repeatable");
  add_workers_flag(denoise, denoise_flags);
  add_config_flag(denoise, denoise_flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*segment) return cmd_segment(mask, boundary, out_path, seg_flags, out, err);
    if (*evaluate) return cmd_evaluate(pred, gt, report, score, eval_flags, out, err);
    if (*semantic) return cmd_semantic_eval(pred, gt, report, out, err);
    if (*loss) return cmd_loss(mask, mask_gt, boundary, boundary_gt, out, err);
    if (*denoise) return cmd_denoise(in_path, out_path, noise_masks, kernel_files, denoise_flags, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace mitoseg::cli
