#pragma once

// Layered synthetic sequences with analytic ground truth.
//
// Each layer carries a texture and a shape defined in its own coordinates,
// which coincide with canvas coordinates at frame 0. A Motion maps those
// coordinates to the canvas at any time t:
//
//   T_t(x) = c + s^t R(theta t) (x - c) + d(t)
//   d(t)   = v min(t, t_c) + v2 max(t - t_c, 0) + a t^2 / 2
//
// so constant velocity, constant acceleration, rotation, zoom and an abrupt
// velocity switch at frame t_c are all special cases.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowfuse/flow_core.hpp"

namespace flowfuse::synth {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Motion {
  Point velocity;
  Point acceleration;
  Point center;
  double degrees_per_frame = 0.0;
  double scale_per_frame = 1.0;
  // Frame at which velocity switches to velocity_after; < 0 disables.
  int change_frame = -1;
  Point velocity_after;

  Point apply(Point local, double t) const;
  Point invert(Point canvas, double t) const;

  static Motion stationary() { return {}; }
  static Motion constant(double vx, double vy);
};

enum class ShapeKind { kRect, kDisc };

struct LayerShape {
  ShapeKind kind = ShapeKind::kRect;
  // Rect: [x0, x1] x [y0, y1]. Disc: centre (x0, y0), radius x1.
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool contains(Point p) const;
  static LayerShape rect(double x0, double y0, double x1, double y1);
  static LayerShape disc(double cx, double cy, double r);
};

struct Layer {
  std::uint64_t texture_seed = 0;
  LayerShape shape;
  int depth = 0;  // smaller is nearer the camera
  Motion motion;
};

struct SceneSpec {
  int width = 96;
  int height = 96;
  int frames = 3;
  int channels = 1;
  std::uint64_t background_seed = 0;
  Motion background;
  std::vector<Layer> layers;
  // Box-filter radius applied twice to the white-noise textures.
  int texture_smoothing = 1;

  void validate() const;
};

struct SequenceSample {
  std::vector<ImageBuffer> frames;
  std::vector<FlowField> gt_fwd;  // gt_fwd[i]: frame i -> i + 1
  std::vector<FlowField> gt_bwd;  // gt_bwd[i]: frame i + 1 -> i
  std::vector<Mask> occlusion;    // occlusion[i]: pixels of frame i hidden in i + 1
};

SequenceSample generate(const SceneSpec& spec, std::uint64_t seed);

// Id of the top-most layer at canvas point p and time t: index into
// spec.layers, or -1 for the background.
int top_layer(const SceneSpec& spec, Point p, double t);

// Randomised scene recipe used by the CLI and the benchmarks.
struct SceneOptions {
  int width = 96;
  int height = 96;
  int frames = 3;
  int channels = 1;
  int min_layers = 1;
  int max_layers = 3;
  double max_speed = 4.0;             // foreground px/frame
  double max_background_speed = 2.0;  // camera pan px/frame
  double abrupt_fraction = 0.25;      // share of scenes with a velocity switch
  int texture_smoothing = 1;
};

SceneSpec random_scene(const SceneOptions& options, std::uint64_t seed);

struct Dataset {
  std::vector<SequenceSample> train;
  std::vector<SequenceSample> val;
  std::vector<std::size_t> train_index;  // positions in the input lists
  std::vector<std::size_t> val_index;
};

// Deterministic split: sequences are ordered by a hash of their seed and the
// first round(split_ratio * n) go to training.
Dataset make_dataset(const std::vector<SceneSpec>& specs, const std::vector<std::uint64_t>& seeds,
                     double split_ratio);

// Positions (into specs/seeds) of the train and val subsets.
void split_by_seed_hash(const std::vector<std::uint64_t>& seeds, double split_ratio,
                        std::vector<std::size_t>& train, std::vector<std::size_t>& val);

// On-disk layout:
//   manifest.json
//   seq_0000/frame_00.png  (16-bit)  flow_fwd_00.flo  flow_bwd_00.flo  occ_00.png
struct DatasetEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string split;  // "train" or "val"
  SceneSpec spec;
};

void write_sequence(const std::filesystem::path& dir, const SequenceSample& sample);
SequenceSample read_sequence(const std::filesystem::path& dir);

void write_manifest(const std::filesystem::path& path, const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> read_manifest(const std::filesystem::path& path);

std::filesystem::path sequence_dir(const std::filesystem::path& root, std::size_t index);

// Loads every sequence of a split ("train", "val" or "" for all).
std::vector<SequenceSample> load_split(const std::filesystem::path& root, const std::string& split);

}  // namespace flowfuse::synth
