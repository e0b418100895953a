#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sasp/commands.hpp"

namespace {

struct Flags {
  std::string config_file;
  sasp::RunConfig cfg;
};

void add_run_flags(CLI::App* app, Flags& f) {
  auto& c = f.cfg;
  app->add_option("--config", f.config_file, "key=value config file; flags override it");
  app->add_option("--epsilon", c.epsilon, "threshold spread (t = mean +/- stdev * epsilon)");
  app->add_option("--max-points,--max_points", c.max_points, "cap on points per class");
  app->add_option("--include-neutral,--include_neutral", c.include_neutral, "emit neutral points too");
  app->add_option("--stride", c.stride, "interpolation grid stride in pixels (>= 1)");
  app->add_option("--tau", c.tau, "interpolation distance bandwidth");
  app->add_option("--sigma-mask,--sigma_mask", c.sigma_mask, "mock decoder splat width");
  app->add_option("--lambda-txt,--lambda_txt", c.lambda_txt, "text loss weight");
  app->add_option("--lambda-mask,--lambda_mask", c.lambda_mask, "mask loss weight");
  app->add_option("--lambda-bce,--lambda_bce", c.lambda_bce, "BCE weight inside the mask loss");
  app->add_option("--lambda-dice,--lambda_dice", c.lambda_dice, "Dice weight inside the mask loss");
  app->add_option("--step", c.step, "threshold sweep step");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "fixture seed");
  app->add_option("--steps", c.steps, "training steps");
  app->add_option("--lr", c.lr, "training learning rate");
}

sasp::RunConfig resolve(const Flags& f) {
  sasp::RunConfig cfg;
  if (!f.config_file.empty()) {
    const auto bytes = sasp::read_file_bytes(f.config_file);
    cfg = sasp::parse_config(std::string(bytes.begin(), bytes.end()));
  }
  cfg.merge(f.cfg);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity-as-points toolkit: similarity maps, point prompts, interpolation and mask metrics"};
  app.require_subcommand(1);

  Flags flags;
  std::string emb;
  std::string mlp;
  std::string gt;
  std::string pred_dir;
  std::string gt_dir;
  std::string trace;
  std::vector<double> strides;
  bool continuous = false;

  const auto with_input = [&](CLI::App* sub) {
    sub->add_option("--emb", emb, "SASPEMB1 embedding file")->required();
    sub->add_option("--mlp", mlp, "SASPMLP1 projection weights for the seg embedding");
    add_run_flags(sub, flags);
  };

  auto* simmap = app.add_subcommand("simmap", "similarity map and heatmap");
  with_input(simmap);
  auto* points = app.add_subcommand("points", "select prompt points");
  with_input(points);
  points->add_flag("--dtoc", continuous, "replace coordinates by their continuous interpolation");
  auto* sweep = app.add_subcommand("sweep", "optimal binarisation threshold against a ground-truth mask");
  with_input(sweep);
  sweep->add_option("--gt", gt, "ground-truth mask (PGM)")->required();
  auto* eval = app.add_subcommand("eval", "gIoU / cIoU over paired mask directories");
  eval->add_option("--pred", pred_dir, "prediction masks")->required();
  eval->add_option("--gt", gt_dir, "ground-truth masks")->required();
  add_run_flags(eval, flags);
  auto* train = app.add_subcommand("train", "toy end-to-end training on the offset-blob scene");
  add_run_flags(train, flags);
  auto* plot = app.add_subcommand("plot", "loss-curve plot from a training trace");
  plot->add_option("--trace", trace, "trace.jsonl")->required();
  add_run_flags(plot, flags);
  auto* convergence = app.add_subcommand("convergence", "interpolated coordinates across grid strides");
  with_input(convergence);
  convergence->add_option("--strides", strides, "descending strides, default 8 4 2 1")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sasp::kExitUsage;
  }

  try {
    const auto cfg = resolve(flags);
    const auto opt_mlp = mlp.empty() ? sasp::OptionalPath{} : sasp::OptionalPath{mlp};
    std::string summary;
    if (*simmap) summary = sasp::cmd_simmap(emb, opt_mlp, cfg);
    else if (*points) summary = sasp::cmd_points(emb, opt_mlp, cfg, continuous);
    else if (*sweep) summary = sasp::cmd_sweep(emb, opt_mlp, gt, cfg);
    else if (*eval) summary = sasp::cmd_eval(pred_dir, gt_dir, cfg);
    else if (*train) summary = sasp::cmd_train(cfg);
    else if (*plot) summary = sasp::cmd_plot(trace, cfg);
    else if (*convergence) summary = sasp::cmd_convergence(emb, opt_mlp, cfg, strides);
    std::cout << summary << "\n";
    return sasp::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sasp::exit_code_for(e);
  }
}
