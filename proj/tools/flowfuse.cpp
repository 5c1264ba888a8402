// flowfuse: data generation, estimation, warping, fusion, training and
// evaluation from the command line.
//
// Every subcommand accepts --config FILE and any number of
// --section.key=value overrides, and writes config.ini with the resolved
// settings into its output directory.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowfuse/config.hpp"
#include "flowfuse/errors.hpp"
#include "flowfuse/flow_io.hpp"
#include "flowfuse/fusion.hpp"
#include "flowfuse/metrics.hpp"
#include "flowfuse/pipeline.hpp"
#include "flowfuse/synth.hpp"

namespace fs = std::filesystem;
using namespace flowfuse;

namespace {

struct Common {
  std::string config;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "INI config file");
  sub->add_option("--out", c.out, "Output directory");
  sub->allow_extras();
}

// Resolves the config and the output directory, and records the former.
RunConfig prepare(CLI::App* sub, const Common& c, const std::string& name, fs::path& out_dir) {
  std::vector<std::string> overrides;
  for (std::string extra : sub->remaining()) {
    if (extra.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + extra + "'");
    overrides.push_back(extra.substr(2));
  }
  RunConfig cfg = RunConfig::load(c.config, overrides);
  if (!c.out.empty()) {
    cfg.output_dir = c.out;
  } else if (cfg.output_dir.empty()) {
    const char* root = std::getenv("FLOWFUSE_OUT_ROOT");
    cfg.output_dir = (fs::path(root && *root ? root : "flowfuse_out") / name).string();
  }
  out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  cfg.write(out_dir / "config.ini");
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out << text;
}

fs::path data_root(const RunConfig& cfg, const std::string& flag) {
  const std::string root = flag.empty() ? cfg.data.root : flag;
  if (root.empty()) throw ConfigError("no dataset given (use --data or data.root)");
  return root;
}

std::vector<synth::SequenceSample> load_sequences(const fs::path& root, const std::string& split) {
  std::vector<synth::SequenceSample> seqs = synth::load_split(root, split);
  if (seqs.empty()) throw ConfigError("dataset " + root.string() + " has no '" + split + "' sequences");
  return seqs;
}

void write_flow_outputs(const fs::path& dir, const std::string& stem, const FlowField& flow) {
  write_flow(dir / (stem + ".flo"), flow);
  write_png(dir / (stem + ".png"), flow_to_color(flow));
}

// ---- subcommands ------------------------------------------------------------

void run_gen_data(const RunConfig& cfg, const fs::path& out) {
  std::vector<synth::SceneSpec> specs;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.data.sequences; ++i) {
    const std::uint64_t seed = cfg.data.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    specs.push_back(synth::random_scene(cfg.data.scene, seed));
    seeds.push_back(seed);
  }
  std::vector<std::size_t> train, val;
  synth::split_by_seed_hash(seeds, cfg.data.split_ratio, train, val);
  std::vector<synth::DatasetEntry> entries(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) entries[i] = {i, seeds[i], "val", specs[i]};
  for (std::size_t i : train) entries[i].split = "train";
  for (const synth::DatasetEntry& e : entries) {
    synth::write_sequence(synth::sequence_dir(out, e.index), synth::generate(e.spec, e.seed));
  }
  synth::write_manifest(out / "manifest.json", entries);
  std::printf("generated %zu sequences (%zu train, %zu val) in %s\n", entries.size(), train.size(),
              val.size(), out.string().c_str());
}

void run_estimate(const RunConfig& cfg, const fs::path& out, const std::string& a, const std::string& b,
                  int frame_a, int frame_b) {
  auto est = make_estimator(cfg.estimator);
  if (!est) throw ConfigError("estimate: estimator 'gt' has no images to work from");
  const FlowField flow = est->estimate(read_image(a), read_image(b), frame_a, frame_b);
  write_flow_outputs(out, "flow", flow);
}

void run_warp(const fs::path& out, const std::string& flow_path, const std::string& back_path,
              const std::string& image_path) {
  if (!image_path.empty()) {
    const WarpedImage w = warp_image(read_image(image_path), read_flow(flow_path));
    write_png(out / "warped.png", w.image, 16);
    write_mask_png(out / "valid.png", w.valid);
    return;
  }
  if (back_path.empty()) throw ConfigError("warp: give --back (flow warp) or --image (image warp)");
  const FlowField warped = warp_flow(read_flow(flow_path), read_flow(back_path));
  write_flow_outputs(out, "warped", warped);
  write_mask_png(out / "valid.png", warped.validity());
}

struct FuseArgs {
  std::string mode = "heuristic";
  std::string prev, cur, next;
  std::string gt, checkpoint;
  int frame_t = 1;
};

void run_fuse(const RunConfig& cfg, const fs::path& out, const FuseArgs& args) {
  if (args.mode == "oracle" && args.gt.empty()) {
    throw ConfigError("fuse: --mode=oracle needs ground truth (--gt); refusing to run without it");
  }
  if (args.mode != "oracle" && args.mode != "heuristic" && args.mode != "learned") {
    throw ConfigError("fuse: unknown mode '" + args.mode + "'");
  }
  auto est = make_estimator(cfg.estimator);
  if (!est) throw ConfigError("fuse: estimator 'gt' is only available on generated datasets");
  const CandidateSet set = build_candidates(read_image(args.prev), read_image(args.cur),
                                            read_image(args.next), *est, args.frame_t);
  dump_candidates(out / "candidates", set);
  FlowField fused;
  if (args.mode == "oracle") {
    const FlowField pair[] = {set.current, set.warped};
    const OracleResult r = oracle_fuse(pair, read_flow(args.gt));
    fused = r.flow;
    Mask chose_warped(fused.width, fused.height);
    for (std::size_t i = 0; i < r.choice.size(); ++i) chose_warped.data[i] = r.choice[i] == 1;
    write_mask_png(out / "oracle_choice.png", chose_warped);
  } else if (args.mode == "heuristic") {
    fused = heuristic_fuse(set);
  } else {
    if (args.checkpoint.empty()) throw ConfigError("fuse: --mode=learned needs --checkpoint");
    const FusionModel model = load_fusion(args.checkpoint);
    fused = fuse(model.net, set, model.inputs);
  }
  write_flow_outputs(out, "fused", fused);
}

void run_train(const RunConfig& cfg, const fs::path& out, const std::string& data_flag) {
  const auto seqs = load_sequences(data_root(cfg, data_flag), "train");
  auto est = make_estimator(cfg.estimator);
  const std::vector<FusionExample> examples = make_examples(seqs, est.get());
  std::ofstream curve(out / "loss.csv", std::ios::trunc);
  curve << "step,loss\n";
  const int every = std::max(1, cfg.train.steps / 20);
  const TrainResult result = train_fusion(examples, cfg.train, cfg.fusion, [&](int step, double loss) {
    char line[64];
    std::snprintf(line, sizeof(line), "%d,%.9g\n", step, loss);
    curve << line;
    if (step % every == 0 || step + 1 == cfg.train.steps) {
      std::fprintf(stderr, "step %d/%d loss %.6g\n", step + 1, cfg.train.steps, loss);
    }
    return true;
  });
  save_fusion(out / "fusion.ckpt", result.net, cfg.fusion, cfg.train,
              {{"estimator", cfg.estimator.name}, {"examples", std::to_string(examples.size())}});
  std::printf("trained on %zu sequences for %zu steps; final loss %.6g\n", examples.size(),
              result.loss_curve.size(), result.loss_curve.empty() ? 0.0 : result.loss_curve.back());
}

struct EvalArgs {
  std::string flow, gt, occ;
  std::string data, split = "val", checkpoint;
};

void run_eval(const RunConfig& cfg, const fs::path& out, const EvalArgs& args) {
  if (!args.flow.empty()) {
    if (args.gt.empty()) throw ConfigError("eval: --flow needs --gt");
    const FlowField flow = read_flow(args.flow);
    const FlowField gt = read_flow(args.gt);
    const Mask occ = args.occ.empty() ? Mask(gt.width, gt.height) : read_mask_png(args.occ);
    const std::vector<NamedReport> rows{{"flow", evaluate(flow, gt, occ)}};
    write_text(out / "report.txt", to_key_value(rows));
    write_text(out / "report.csv", to_csv(rows));
    std::fputs(to_key_value(rows).c_str(), stdout);
    return;
  }
  const auto seqs = load_sequences(data_root(cfg, args.data), args.split);
  auto est = make_estimator(cfg.estimator);
  std::optional<FusionModel> model;
  if (!args.checkpoint.empty()) model = load_fusion(args.checkpoint);
  EvalOptions opts;
  opts.estimator = est.get();
  opts.model = model ? &*model : nullptr;
  opts.agree_threshold = cfg.metrics.agree_threshold;
  opts.match_threshold = cfg.metrics.match_threshold;
  const EvalResult result = evaluate_dataset(seqs, opts);
  write_text(out / "report.txt", eval_report_text(result));
  write_text(out / "report.csv", to_csv(result.rows));
  std::fputs(to_csv(result.rows).c_str(), stdout);
}

void run_oracle_study(const RunConfig& cfg, const fs::path& out, const std::string& data_flag,
                      const std::string& split) {
  const auto seqs = load_sequences(data_root(cfg, data_flag), split);
  auto est = make_estimator(cfg.estimator);
  const std::vector<NamedReport> rows = oracle_study(seqs, est.get());
  write_text(out / "report.txt", to_key_value(rows));
  write_text(out / "report.csv", to_csv(rows));
  std::fputs(to_csv(rows).c_str(), stdout);
}

struct VisualizeArgs {
  std::string flow, fused, current, warped, flow_a, flow_b, gt;
  double max_mag = 0.0;
};

void run_visualize(const RunConfig& cfg, const fs::path& out, const VisualizeArgs& a) {
  bool any = false;
  if (!a.flow.empty()) {
    const std::optional<double> m = a.max_mag > 0.0 ? std::optional<double>(a.max_mag) : std::nullopt;
    write_png(out / "flow_color.png", flow_to_color(read_flow(a.flow), m));
    any = true;
  }
  if (!a.fused.empty() || !a.current.empty() || !a.warped.empty()) {
    if (a.fused.empty() || a.current.empty() || a.warped.empty()) {
      throw ConfigError("visualize: the indicator map needs --fused, --current and --warped");
    }
    const IndicatorMap map = indicator_map(read_flow(a.fused), read_flow(a.current), read_flow(a.warped),
                                           cfg.metrics.agree_threshold, cfg.metrics.match_threshold);
    write_png(out / "indicator.png", render_indicator_map(map));
    any = true;
  }
  if (!a.flow_a.empty() || !a.flow_b.empty()) {
    if (a.flow_a.empty() || a.flow_b.empty() || a.gt.empty()) {
      throw ConfigError("visualize: the comparison map needs --flow-a, --flow-b and --gt");
    }
    const FlowField gt = read_flow(a.gt);
    const ComparisonMap map = comparison_map(epe_map(read_flow(a.flow_a), gt), epe_map(read_flow(a.flow_b), gt),
                                             cfg.metrics.comparison_margin);
    write_png(out / "comparison.png", render_comparison_map(map));
    any = true;
  }
  if (!any) throw ConfigError("visualize: nothing to draw (give --flow, an indicator triple or a comparison pair)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-frame optical flow fusion"};
  app.require_subcommand(1);

  Common c_gen, c_est, c_warp, c_fuse, c_train, c_eval, c_oracle, c_vis;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen, c_gen);

  std::string est_a, est_b;
  int est_fa = -1, est_fb = -1;
  auto* est = app.add_subcommand("estimate", "Estimate flow between two images");
  add_common(est, c_est);
  est->add_option("--frame-a", est_a, "Source image")->required();
  est->add_option("--frame-b", est_b, "Target image")->required();
  est->add_option("--index-a", est_fa, "Source frame index (precomputed flows)");
  est->add_option("--index-b", est_fb, "Target frame index (precomputed flows)");

  std::string warp_flow_path, warp_back, warp_image_path;
  auto* warp = app.add_subcommand("warp", "Backward-warp a flow or an image");
  add_common(warp, c_warp);
  warp->add_option("--flow", warp_flow_path, "Flow to warp (or to warp by, with --image)")->required();
  warp->add_option("--back", warp_back, "Backward flow to warp with");
  warp->add_option("--image", warp_image_path, "Image to warp with --flow");

  FuseArgs fuse_args;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse current and warped flows");
  add_common(fuse_cmd, c_fuse);
  fuse_cmd->add_option("--mode", fuse_args.mode, "oracle | heuristic | learned");
  fuse_cmd->add_option("--prev", fuse_args.prev, "Frame t-1")->required();
  fuse_cmd->add_option("--cur", fuse_args.cur, "Frame t")->required();
  fuse_cmd->add_option("--next", fuse_args.next, "Frame t+1")->required();
  fuse_cmd->add_option("--frame-index", fuse_args.frame_t, "Index of frame t (precomputed flows)");
  fuse_cmd->add_option("--gt", fuse_args.gt, "Ground-truth flow (oracle mode)");
  fuse_cmd->add_option("--checkpoint", fuse_args.checkpoint, "Trained net (learned mode)");

  std::string train_data;
  auto* train = app.add_subcommand("train-fusion", "Train the fusion net");
  add_common(train, c_train);
  train->add_option("--data", train_data, "Dataset root");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Region-partitioned endpoint errors");
  add_common(eval, c_eval);
  eval->add_option("--flow", eval_args.flow, "Flow to score against --gt");
  eval->add_option("--gt", eval_args.gt, "Ground-truth flow");
  eval->add_option("--occ", eval_args.occ, "Occlusion mask PNG");
  eval->add_option("--data", eval_args.data, "Dataset root");
  eval->add_option("--split", eval_args.split, "train | val");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Trained net");

  std::string oracle_data, oracle_split = "val";
  auto* oracle = app.add_subcommand("oracle-study", "Oracle fusion over 3 or more frames");
  add_common(oracle, c_oracle);
  oracle->add_option("--data", oracle_data, "Dataset root");
  oracle->add_option("--split", oracle_split, "train | val");

  VisualizeArgs vis_args;
  auto* vis = app.add_subcommand("visualize", "Colour-code flows and draw diagnostic maps");
  add_common(vis, c_vis);
  vis->add_option("--flow", vis_args.flow, "Flow to colour-code");
  vis->add_option("--max-mag", vis_args.max_mag, "Saturation magnitude");
  vis->add_option("--fused", vis_args.fused, "Fused flow (indicator map)");
  vis->add_option("--current", vis_args.current, "Current flow (indicator map)");
  vis->add_option("--warped", vis_args.warped, "Warped flow (indicator map)");
  vis->add_option("--flow-a", vis_args.flow_a, "First flow (comparison map)");
  vis->add_option("--flow-b", vis_args.flow_b, "Second flow (comparison map)");
  vis->add_option("--gt", vis_args.gt, "Ground truth (comparison map)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    fs::path out;
    if (gen->parsed()) {
      run_gen_data(prepare(gen, c_gen, "gen-data", out), out);
    } else if (est->parsed()) {
      run_estimate(prepare(est, c_est, "estimate", out), out, est_a, est_b, est_fa, est_fb);
    } else if (warp->parsed()) {
      prepare(warp, c_warp, "warp", out);
      run_warp(out, warp_flow_path, warp_back, warp_image_path);
    } else if (fuse_cmd->parsed()) {
      run_fuse(prepare(fuse_cmd, c_fuse, "fuse", out), out, fuse_args);
    } else if (train->parsed()) {
      run_train(prepare(train, c_train, "train-fusion", out), out, train_data);
    } else if (eval->parsed()) {
      run_eval(prepare(eval, c_eval, "eval", out), out, eval_args);
    } else if (oracle->parsed()) {
      run_oracle_study(prepare(oracle, c_oracle, "oracle-study", out), out, oracle_data, oracle_split);
    } else if (vis->parsed()) {
      run_visualize(prepare(vis, c_vis, "visualize", out), out, vis_args);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "flowfuse: %s\n", e.what());
    return 1;
  }
  return 0;
}
