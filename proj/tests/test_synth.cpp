#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "flowfuse/flow_core.hpp"
#include "flowfuse/synth.hpp"
#include "support.hpp"

namespace flowfuse::synth {
namespace {

SceneSpec square_scene(double vx, double vy) {
  SceneSpec spec;
  spec.width = 48;
  spec.height = 40;
  spec.background_seed = 3;
  spec.layers.push_back({7, LayerShape::rect(10, 10, 20, 20), 0, Motion::constant(vx, vy)});
  return spec;
}

std::vector<SceneSpec> mixed_scenes(int n, std::uint64_t base, int smoothing = 1) {
  SceneOptions opt;
  opt.width = 48;
  opt.height = 40;
  opt.abrupt_fraction = 0.5;
  opt.texture_smoothing = smoothing;
  std::vector<SceneSpec> out;
  for (int i = 0; i < n; ++i) out.push_back(random_scene(opt, base + i));
  return out;
}

TEST(Generate, StaticLayer) {
  SceneSpec spec = square_scene(0.0, 0.0);
  spec.frames = 4;
  const SequenceSample s = generate(spec, 1);
  ASSERT_EQ(s.frames.size(), 4u);
  ASSERT_EQ(s.gt_fwd.size(), 3u);
  for (std::size_t i = 1; i < s.frames.size(); ++i) EXPECT_EQ(s.frames[i], s.frames[0]);
  for (std::size_t i = 0; i < s.gt_fwd.size(); ++i) {
    EXPECT_EQ(s.gt_fwd[i], FlowField(48, 40));
    EXPECT_EQ(s.gt_bwd[i], FlowField(48, 40));
    EXPECT_EQ(s.occlusion[i].count(), 0u);
  }
}

TEST(Generate, ConstantVelocityLayer) {
  const SequenceSample s = generate(square_scene(2.0, 0.0), 2);
  const FlowField& f = s.gt_fwd[0];
  EXPECT_EQ(f.u[f.index(15, 15)], 2.0);
  EXPECT_EQ(f.v[f.index(15, 15)], 0.0);
  EXPECT_EQ(f.u[f.index(30, 30)], 0.0);
  // Frame 1 sees the square at [12, 22].
  const FlowField& b = s.gt_bwd[0];
  EXPECT_EQ(b.u[b.index(17, 15)], -2.0);
  EXPECT_EQ(b.v[b.index(17, 15)], 0.0);
  EXPECT_EQ(b.u[b.index(11, 15)], 0.0);
}

TEST(Generate, OcclusionMatchesBruteForceVisibility) {
  // Disc of radius 7 at (20, 18) moving (2, 1) over a background panning (-1, 0).
  SceneSpec spec;
  spec.width = 40;
  spec.height = 36;
  spec.background = Motion::constant(-1.0, 0.0);
  spec.layers.push_back({9, LayerShape::disc(20, 18, 7), 0, Motion::constant(2.0, 1.0)});
  const SequenceSample s = generate(spec, 5);

  auto in_disc = [](double x, double y, double cx, double cy) {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= 49.0;
  };
  auto in_frame = [&](double x, double y) {
    return x >= 0.0 && x <= spec.width - 1.0 && y >= 0.0 && y <= spec.height - 1.0;
  };
  std::size_t hidden_behind_disc = 0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const bool fg = in_disc(x, y, 20, 18);
      const double tx = fg ? x + 2.0 : x - 1.0;
      const double ty = fg ? y + 1.0 : y;
      bool occluded = !in_frame(tx, ty);
      if (!fg && !occluded && in_disc(tx, ty, 22, 19)) {
        occluded = true;
        ++hidden_behind_disc;
      }
      const std::size_t i = s.gt_fwd[0].index(x, y);
      ASSERT_EQ(s.occlusion[0](x, y), occluded) << x << "," << y;
      ASSERT_EQ(s.gt_fwd[0].u[i], fg ? 2.0 : -1.0);
      ASSERT_EQ(s.gt_fwd[0].v[i], fg ? 1.0 : 0.0);
    }
  }
  EXPECT_GT(hidden_behind_disc, 0u);
}

TEST(Generate, DeterministicPerSpecAndSeed) {
  const SceneSpec spec = mixed_scenes(1, 40).front();
  const SequenceSample a = generate(spec, 11), b = generate(spec, 11), c = generate(spec, 12);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.gt_fwd, b.gt_fwd);
  EXPECT_EQ(a.occlusion, b.occlusion);
  EXPECT_NE(a.frames, c.frames);
}

TEST(Generate, ValidateRejectsDegenerateSpecs) {
  SceneSpec spec = square_scene(1.0, 0.0);
  spec.width = 0;
  EXPECT_THROW(generate(spec, 0), std::invalid_argument);
  spec = square_scene(1.0, 0.0);
  spec.frames = 2;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = square_scene(30.0, 0.0);
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = square_scene(1.0, 0.0);
  spec.channels = 2;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  EXPECT_NO_THROW(square_scene(1.0, 0.0).validate());
}

TEST(Generate, MotionInverseRoundTrips) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Motion m;
    m.velocity = {d(rng), d(rng)};
    m.acceleration = {0.1 * d(rng), 0.1 * d(rng)};
    m.center = {20 + d(rng), 20 + d(rng)};
    m.degrees_per_frame = d(rng);
    m.scale_per_frame = 1.0 + 0.01 * d(rng);
    m.change_frame = trial % 3;
    m.velocity_after = {d(rng), d(rng)};
    const Point p{30 + d(rng), 10 + d(rng)};
    for (double t : {0.0, 1.0, 2.0, 3.5}) {
      const Point q = m.invert(m.apply(p, t), t);
      ASSERT_NEAR(q.x, p.x, 1e-9);
      ASSERT_NEAR(q.y, p.y, 1e-9);
    }
  }
}

// For every non-occluded pixel whose bilinear footprint in frame t+1 lies on
// the same layer, gt_bwd sampled at the target undoes gt_fwd. Per-layer
// fields are affine, so bilinear interpolation reproduces them exactly.
TEST(Properties, ForwardBackwardConsistency) {
  const auto specs = mixed_scenes(12, 100);
  std::size_t checked = 0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    SceneSpec spec = specs[k];
    for (Layer& l : spec.layers) {
      l.motion.degrees_per_frame = 2.0 * (k % 3);
      l.motion.scale_per_frame = 1.0 + 0.01 * (k % 2);
    }
    const SequenceSample s = generate(spec, 100 + k);
    for (std::size_t t = 0; t < s.gt_fwd.size(); ++t) {
      const FlowField& f = s.gt_fwd[t];
      const FlowField back = warp_flow(s.gt_bwd[t], f);
      for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
          if (s.occlusion[t](x, y)) continue;
          const std::size_t i = f.index(x, y);
          const double tx = x + f.u[i], ty = y + f.v[i];
          const int layer = top_layer(spec, {double(x), double(y)}, double(t));
          const int x0 = static_cast<int>(std::floor(tx)), y0 = static_cast<int>(std::floor(ty));
          bool same = true;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int sx = std::clamp(x0 + dx, 0, f.width - 1), sy = std::clamp(y0 + dy, 0, f.height - 1);
              same = same && top_layer(spec, {double(sx), double(sy)}, t + 1.0) == layer;
            }
          }
          if (!same) continue;
          ASSERT_NEAR(back.u[i], -f.u[i], 1e-6) << "scene " << k << " at " << x << "," << y;
          ASSERT_NEAR(back.v[i], -f.v[i], 1e-6);
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 10000u);
}

// Mean |W(I_{t+1}; gt) - I_t| over visible pixels of each pair.
std::vector<double> visible_residuals(const SequenceSample& s) {
  std::vector<double> out;
  for (std::size_t t = 0; t < s.gt_fwd.size(); ++t) {
    const WarpedImage w = warp_image(s.frames[t + 1], s.gt_fwd[t]);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.gt_fwd[t].pixels(); ++i) {
      if (s.occlusion[t].data[i]) continue;
      sum += std::abs(w.image.data[i] - s.frames[t].data[i]);
      ++n;
    }
    out.push_back(n ? sum / n : 0.0);
  }
  return out;
}

TEST(Properties, BrightnessConstancyOnVisiblePixels) {
  const auto specs = mixed_scenes(10, 200, 2);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    for (double r : visible_residuals(generate(specs[k], 200 + k))) EXPECT_LT(r, 0.02) << "scene " << k;
  }
  // Integer displacements sample texels directly.
  SceneSpec pan = square_scene(3.0, -1.0);
  pan.background = Motion::constant(2.0, 1.0);
  for (double r : visible_residuals(generate(pan, 6))) EXPECT_LT(r, 1e-12);
}

TEST(Properties, ConstantVelocityFlowIsStationary) {
  SceneSpec pan;
  pan.width = 32;
  pan.height = 24;
  pan.frames = 5;
  pan.background = Motion::constant(1.25, -0.5);
  const SequenceSample s = generate(pan, 3);
  for (std::size_t t = 1; t < s.gt_fwd.size(); ++t) {
    EXPECT_EQ(s.gt_fwd[t], s.gt_fwd[t - 1]);
    EXPECT_EQ(s.gt_bwd[t], s.gt_bwd[t - 1]);
  }

  // With moving layers, pixels that keep their layer keep their flow.
  SceneSpec spec = square_scene(1.5, 0.75);
  spec.frames = 4;
  spec.background = Motion::constant(-0.5, 0.0);
  const SequenceSample m = generate(spec, 4);
  for (int t = 1; t < 3; ++t) {
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const Point p{double(x), double(y)};
        if (top_layer(spec, p, t) != top_layer(spec, p, t - 1)) continue;
        const std::size_t i = m.gt_fwd[t].index(x, y);
        ASSERT_EQ(m.gt_fwd[t].u[i], m.gt_fwd[t - 1].u[i]);
        ASSERT_EQ(m.gt_fwd[t].v[i], m.gt_fwd[t - 1].v[i]);
      }
    }
  }
}

TEST(Dataset, SplitIsDisjointAndDeterministic) {
  const auto specs = mixed_scenes(10, 300);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < 10; ++i) seeds.push_back(300 + i);
  std::vector<std::size_t> train, val, train2, val2;
  split_by_seed_hash(seeds, 0.8, train, val);
  split_by_seed_hash(seeds, 0.8, train2, val2);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(val.size(), 2u);
  EXPECT_EQ(train, train2);
  EXPECT_EQ(val, val2);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  EXPECT_EQ(all.size(), 10u);

  const Dataset d = make_dataset(specs, seeds, 0.8);
  EXPECT_EQ(d.train.size(), 8u);
  EXPECT_EQ(d.val.size(), 2u);
  EXPECT_EQ(d.train_index, train);
  EXPECT_EQ(d.val_index, val);
  EXPECT_EQ(d.val[0].frames, generate(specs[val[0]], seeds[val[0]]).frames);
}

TEST(Dataset, SequenceRoundTrip) {
  testing::TempDir dir("synth");
  SceneSpec spec = mixed_scenes(1, 400).front();
  spec.channels = 3;
  spec.frames = 4;
  const SequenceSample s = generate(spec, 400);
  write_sequence(dir / "seq", s);
  const SequenceSample r = read_sequence(dir / "seq");
  ASSERT_EQ(r.frames.size(), s.frames.size());
  ASSERT_EQ(r.gt_fwd.size(), s.gt_fwd.size());
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    ASSERT_EQ(r.frames[i].channels, 3);
    for (std::size_t j = 0; j < s.frames[i].data.size(); ++j) {
      ASSERT_NEAR(r.frames[i].data[j], s.frames[i].data[j], 0.5 / 65535.0 + 1e-12);
    }
  }
  for (std::size_t t = 0; t < s.gt_fwd.size(); ++t) {
    for (std::size_t j = 0; j < s.gt_fwd[t].pixels(); ++j) {
      ASSERT_EQ(r.gt_fwd[t].u[j], static_cast<float>(s.gt_fwd[t].u[j]));
      ASSERT_EQ(r.gt_bwd[t].v[j], static_cast<float>(s.gt_bwd[t].v[j]));
    }
    EXPECT_EQ(r.occlusion[t], s.occlusion[t]);
  }
}

TEST(Dataset, ManifestRoundTripAndSplitLoading) {
  testing::TempDir dir("synth");
  const auto specs = mixed_scenes(3, 500);
  std::vector<DatasetEntry> entries;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    entries.push_back({i, 500 + i, i == 1 ? "val" : "train", specs[i]});
    write_sequence(sequence_dir(dir.path(), i), generate(specs[i], 500 + i));
  }
  write_manifest(dir / "manifest.json", entries);
  const auto back = read_manifest(dir / "manifest.json");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].seed, entries[i].seed);
    EXPECT_EQ(back[i].split, entries[i].split);
    EXPECT_EQ(generate(back[i].spec, back[i].seed).frames, generate(specs[i], 500 + i).frames);
  }
  EXPECT_EQ(sequence_dir(dir.path(), 7).filename(), "seq_0007");
  EXPECT_EQ(load_split(dir.path(), "train").size(), 2u);
  EXPECT_EQ(load_split(dir.path(), "val").size(), 1u);
  EXPECT_EQ(load_split(dir.path(), "").size(), 3u);
}

TEST(RandomScene, RespectsOptions) {
  SceneOptions opt;
  opt.width = 64;
  opt.height = 48;
  opt.frames = 4;
  opt.channels = 3;
  opt.min_layers = 2;
  opt.max_layers = 2;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSpec spec = random_scene(opt, seed);
    EXPECT_NO_THROW(spec.validate());
    EXPECT_EQ(spec.width, 64);
    EXPECT_EQ(spec.frames, 4);
    EXPECT_EQ(spec.channels, 3);
    EXPECT_EQ(spec.layers.size(), 2u);
  }
  opt.abrupt_fraction = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SceneSpec spec = random_scene(opt, seed);
    bool abrupt = spec.background.change_frame >= 0;
    for (const Layer& l : spec.layers) abrupt = abrupt || l.motion.change_frame >= 0;
    EXPECT_TRUE(abrupt);
  }
}

}  // namespace
}  // namespace flowfuse::synth
