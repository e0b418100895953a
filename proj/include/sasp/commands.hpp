#pragma once

// Command implementations behind the `sasp` tool. Each command reads its
// inputs, writes its artifacts into the output directory and returns a short
// human-readable summary. Errors surface as exceptions; exit_code_for maps
// them onto the tool's exit codes.

#include <algorithm>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sasp/config.hpp"
#include "sasp/decode.hpp"
#include "sasp/dtoc.hpp"
#include "sasp/embed.hpp"
#include "sasp/error.hpp"
#include "sasp/io.hpp"
#include "sasp/metrics.hpp"
#include "sasp/plot.hpp"
#include "sasp/select.hpp"
#include "sasp/train.hpp"

namespace sasp {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const ValueError*>(&e) || dynamic_cast<const IndexError*>(&e)) {
    return kExitData;
  }
  return kExitUsage;
}

namespace detail {

inline std::filesystem::path output_dir(const RunConfig& cfg) {
  std::filesystem::path dir = cfg.out.value_or(".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  write_file_bytes(path, j.dump(2) + "\n");
}

struct LoadedInput {
  TokenGrid grid;
  SegEmbedding seg;
};

/// Without an MLP file the raw seg embedding is used as is.
inline LoadedInput load_input(const std::filesystem::path& emb, const std::optional<std::filesystem::path>& mlp) {
  auto dump = read_embedding_file(emb);
  SegEmbedding seg;
  if (mlp) {
    const auto proj = read_mlp_file(*mlp);
    if (proj.in_dim() != dump.seg_raw.size()) {
      throw ShapeError("MLP expects input of length " + std::to_string(proj.in_dim()) + ", seg embedding has " +
                       std::to_string(dump.seg_raw.size()));
    }
    seg = project_seg(dump.seg_raw, proj);
  } else {
    seg = SegEmbedding::unprojected(dump.seg_raw);
  }
  if (seg.projected.size() != dump.grid.dim()) {
    throw ShapeError("seg embedding length " + std::to_string(seg.projected.size()) + " does not match token dim " +
                     std::to_string(dump.grid.dim()));
  }
  return {std::move(dump.grid), std::move(seg)};
}

inline SelectionConfig selection_of(const RunConfig& cfg) {
  SelectionConfig s;
  s.epsilon = cfg.epsilon.value_or(s.epsilon);
  s.max_points = cfg.max_points;
  s.include_neutral = cfg.include_neutral.value_or(false);
  s.validate();
  return s;
}

inline LossWeights weights_of(const RunConfig& cfg, LossWeights w = {}) {
  w.text = cfg.lambda_txt.value_or(w.text);
  w.mask = cfg.lambda_mask.value_or(w.mask);
  w.bce = cfg.lambda_bce.value_or(w.bce);
  w.dice = cfg.lambda_dice.value_or(w.dice);
  w.validate();
  return w;
}

}  // namespace detail

using OptionalPath = std::optional<std::filesystem::path>;

/// simmap.json (scores, normalised scores, softmax) and simmap.pgm heatmap.
inline std::string cmd_simmap(const std::filesystem::path& emb, const OptionalPath& mlp, const RunConfig& cfg) {
  cfg.validate();
  const auto in = detail::load_input(emb, mlp);
  const auto map = similarity(in.grid, in.seg);
  const auto dir = detail::output_dir(cfg);
  detail::write_json(dir / "simmap.json", to_json(map, in.grid.geometry()));
  write_file_bytes(dir / "simmap.pgm", serialize_heatmap_pgm(map, in.grid.geometry()));
  const auto peak = std::max_element(map.scores().begin(), map.scores().end()) - map.scores().begin();
  return "similarity map over " + std::to_string(map.size()) + " tokens, peak token " + std::to_string(peak);
}

/// points.json; with `continuous` the coordinates are the interpolated ones.
inline std::string cmd_points(const std::filesystem::path& emb, const OptionalPath& mlp, const RunConfig& cfg,
                              bool continuous) {
  cfg.validate();
  const auto in = detail::load_input(emb, mlp);
  const auto map = similarity(in.grid, in.seg);
  PointSet ps = select_points(map, in.grid, detail::selection_of(cfg));
  if (continuous && !ps.empty()) {
    const InterpGrid grid(in.grid.geometry(), cfg.stride.value_or(1.0));
    const auto res = dtoc_forward(ps, map, grid, {.tau = cfg.tau.value_or(1.0), .keep_tape = false});
    ps.points = res.points;
  }
  Json doc = to_json(ps);
  doc["continuous"] = continuous;
  std::string summary;
  if (ps.empty()) {
    summary = "no points selected";
    doc["note"] = summary;
  } else {
    const auto pos = std::count(ps.labels.begin(), ps.labels.end(), 1);
    const auto neg = std::count(ps.labels.begin(), ps.labels.end(), 0);
    summary = std::to_string(ps.size()) + " points selected (" + std::to_string(pos) + " positive, " +
              std::to_string(neg) + " negative)";
  }
  detail::write_json(detail::output_dir(cfg) / "points.json", doc);
  return summary;
}

/// sweep.json: per-image optimal threshold of the similarity map against a ground-truth mask.
inline std::string cmd_sweep(const std::filesystem::path& emb, const OptionalPath& mlp,
                             const std::filesystem::path& gt_path, const RunConfig& cfg) {
  cfg.validate();
  const auto in = detail::load_input(emb, mlp);
  const auto gt = read_mask_pgm(gt_path);
  const auto map = similarity(in.grid, in.seg);
  const auto sweep = grid_search_threshold(map, in.grid.geometry(), gt, cfg.step.value_or(0.01));
  detail::write_json(detail::output_dir(cfg) / "sweep.json", to_json(sweep));
  return "best threshold " + Json(sweep.best_t).dump() + " with IoU " + Json(sweep.best_ciou).dump();
}

/// eval.json over prediction/ground-truth PGM masks paired by file name.
inline std::string cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                            const RunConfig& cfg) {
  cfg.validate();
  const auto list = [](const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
  };
  const auto preds = list(pred_dir);
  const auto gts = list(gt_dir);
  if (preds.empty() && gts.empty()) throw ConfigError("no mask files in " + pred_dir.string() + " or " + gt_dir.string());
  std::vector<std::string> unpaired;
  std::set_symmetric_difference(preds.begin(), preds.end(), gts.begin(), gts.end(), std::back_inserter(unpaired));
  if (!unpaired.empty()) {
    std::string msg = "unpaired mask files:";
    for (const auto& n : unpaired) msg += " " + n;
    throw ValueError(msg);
  }
  std::vector<IoU> pairs;
  for (const auto& name : preds) {
    try {
      pairs.push_back(iou_pair(read_mask_pgm(pred_dir / name), read_mask_pgm(gt_dir / name)));
    } catch (const FormatError& e) {
      throw FormatError(name + ": " + e.what(), e.offset());
    }
  }
  const auto report = aggregate(pairs);
  detail::write_json(detail::output_dir(cfg) / "eval.json", to_json(report, preds));
  return "gIoU " + Json(report.giou).dump() + ", cIoU " + Json(report.ciou).dump() + " over " +
         std::to_string(pairs.size()) + " images";
}

/// Loss-curve plot of a training trace.
inline std::string plot_trace(const TrainingTrace& tr, const std::filesystem::path& out) {
  std::vector<double> totals;
  for (const auto& s : tr.steps) totals.push_back(s.total);
  const auto img = render_line_plot(totals);
  write_file_bytes(out, serialize_ppm(img.width, img.height, img.data));
  return "wrote " + out.string();
}

/// Toy training on the offset-blob scene: trace.jsonl and loss.ppm.
inline std::string cmd_train(const RunConfig& cfg) {
  cfg.validate();
  ToyScene scene = make_offset_blob(cfg.seed.value_or(0));
  scene.selection.epsilon = cfg.epsilon.value_or(scene.selection.epsilon);
  if (cfg.max_points) scene.selection.max_points = cfg.max_points;
  if (cfg.include_neutral.value_or(false)) throw ConfigError("train: neutral points cannot reach the decoder");
  scene.tau = cfg.tau.value_or(scene.tau);
  scene.stride = cfg.stride.value_or(scene.stride);
  scene.decoder.sigma_mask = cfg.sigma_mask.value_or(scene.decoder.sigma_mask);
  scene.weights = detail::weights_of(cfg, scene.weights);
  const auto trace = train_toy(scene, cfg.steps.value_or(500), cfg.lr.value_or(kOffsetBlobLearningRate));
  const auto dir = detail::output_dir(cfg);
  write_file_bytes(dir / "trace.jsonl", serialize_trace(trace));
  plot_trace(trace, dir / "loss.ppm");
  const auto& first = trace.steps.front();
  const auto& last = trace.steps.back();
  return "loss " + Json(first.total).dump() + " -> " + Json(last.total).dump() + ", positive in-mask fraction " +
         Json(last.in_mask_fraction).dump();
}

/// Re-plots an existing trace.jsonl.
inline std::string cmd_plot(const std::filesystem::path& trace_path, const RunConfig& cfg) {
  cfg.validate();
  const auto bytes = read_file_bytes(trace_path);
  const auto trace = parse_trace(std::string(bytes.begin(), bytes.end()));
  return plot_trace(trace, detail::output_dir(cfg) / "loss.ppm");
}

/// convergence.json: interpolated coordinates of the selected points at each stride.
inline std::string cmd_convergence(const std::filesystem::path& emb, const OptionalPath& mlp, const RunConfig& cfg,
                                   std::vector<double> strides) {
  cfg.validate();
  const auto in = detail::load_input(emb, mlp);
  const auto map = similarity(in.grid, in.seg);
  const auto ps = select_points(map, in.grid, detail::selection_of(cfg));
  if (ps.empty()) throw ValueError("convergence: no points selected");
  if (strides.empty()) strides = {8.0, 4.0, 2.0, 1.0};
  const auto entries = dtoc_convergence(ps, map, in.grid.geometry(), strides, cfg.tau.value_or(1.0));
  detail::write_json(detail::output_dir(cfg) / "convergence.json", to_json(entries));
  return std::to_string(entries.size()) + " strides for " + std::to_string(ps.size()) + " points";
}

}  // namespace sasp
