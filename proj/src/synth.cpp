#include "flowfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace flowfuse::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Periodic band-limited noise, sampled bilinearly with wrap-around.
class Texture {
 public:
  static constexpr int kSize = 128;

  Texture(std::uint64_t seed, int channels, int smoothing) : channels_(channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    data_.resize(static_cast<std::size_t>(kSize) * kSize * channels);
    for (int c = 0; c < channels; ++c) {
      std::vector<double> plane(static_cast<std::size_t>(kSize) * kSize);
      for (double& v : plane) v = dist(rng);
      for (int pass = 0; pass < 2; ++pass) plane = box_wrap(plane, smoothing);
      const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
      const double range = std::max(*hi - *lo, 1e-12);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        data_[i * channels + c] = 0.05 + 0.9 * (plane[i] - *lo) / range;
      }
    }
  }

  void sample(Point p, double* out) const {
    const double fx = std::floor(p.x);
    const double fy = std::floor(p.y);
    const double ax = p.x - fx;
    const double ay = p.y - fy;
    const int x0 = wrap(static_cast<long long>(fx));
    const int y0 = wrap(static_cast<long long>(fy));
    const int x1 = (x0 + 1) % kSize;
    const int y1 = (y0 + 1) % kSize;
    for (int c = 0; c < channels_; ++c) {
      const double top = (1.0 - ax) * at(x0, y0, c) + ax * at(x1, y0, c);
      const double bot = (1.0 - ax) * at(x0, y1, c) + ax * at(x1, y1, c);
      out[c] = (1.0 - ay) * top + ay * bot;
    }
  }

 private:
  static int wrap(long long i) {
    const long long m = i % kSize;
    return static_cast<int>(m < 0 ? m + kSize : m);
  }

  double at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * kSize + x) * channels_ + c];
  }

  static std::vector<double> box_wrap(const std::vector<double>& src, int r) {
    if (r <= 0) return src;
    std::vector<double> tmp(src.size()), out(src.size());
    const double norm = 1.0 / (2 * r + 1);
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        double s = 0.0;
        for (int d = -r; d <= r; ++d) s += src[static_cast<std::size_t>(y) * kSize + wrap(x + d)];
        tmp[static_cast<std::size_t>(y) * kSize + x] = s * norm;
      }
    }
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        double s = 0.0;
        for (int d = -r; d <= r; ++d) s += tmp[static_cast<std::size_t>(wrap(y + d)) * kSize + x];
        out[static_cast<std::size_t>(y) * kSize + x] = s * norm;
      }
    }
    return out;
  }

  int channels_;
  std::vector<double> data_;
};

const Motion& motion_of(const SceneSpec& spec, int layer) {
  return layer < 0 ? spec.background : spec.layers[layer].motion;
}

std::vector<int> front_to_back(const SceneSpec& spec) {
  std::vector<int> order(spec.layers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return spec.layers[a].depth < spec.layers[b].depth;
  });
  return order;
}

int top_layer_ordered(const SceneSpec& spec, const std::vector<int>& order, Point p, double t) {
  for (int k : order) {
    const Layer& layer = spec.layers[k];
    if (layer.shape.contains(layer.motion.invert(p, t))) return k;
  }
  return -1;
}

bool inside_canvas(const SceneSpec& spec, Point p) {
  return p.x >= 0.0 && p.x <= spec.width - 1.0 && p.y >= 0.0 && p.y <= spec.height - 1.0;
}

}  // namespace

Motion Motion::constant(double vx, double vy) {
  Motion m;
  m.velocity = {vx, vy};
  return m;
}

namespace {

Point displacement(const Motion& m, double t) {
  const double before = m.change_frame >= 0 ? std::min(t, static_cast<double>(m.change_frame)) : t;
  const double after = m.change_frame >= 0 ? std::max(t - m.change_frame, 0.0) : 0.0;
  return {m.velocity.x * before + m.velocity_after.x * after + 0.5 * m.acceleration.x * t * t,
          m.velocity.y * before + m.velocity_after.y * after + 0.5 * m.acceleration.y * t * t};
}

}  // namespace

Point Motion::apply(Point local, double t) const {
  const double theta = degrees_per_frame * t * std::numbers::pi / 180.0;
  const double s = std::pow(scale_per_frame, t);
  const double dx = local.x - center.x;
  const double dy = local.y - center.y;
  const Point d = displacement(*this, t);
  return {center.x + s * (std::cos(theta) * dx - std::sin(theta) * dy) + d.x,
          center.y + s * (std::sin(theta) * dx + std::cos(theta) * dy) + d.y};
}

Point Motion::invert(Point canvas, double t) const {
  const double theta = degrees_per_frame * t * std::numbers::pi / 180.0;
  const double s = std::pow(scale_per_frame, t);
  const Point d = displacement(*this, t);
  const double dx = canvas.x - d.x - center.x;
  const double dy = canvas.y - d.y - center.y;
  return {center.x + (std::cos(theta) * dx + std::sin(theta) * dy) / s,
          center.y + (-std::sin(theta) * dx + std::cos(theta) * dy) / s};
}

bool LayerShape::contains(Point p) const {
  if (kind == ShapeKind::kRect) return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
  const double dx = p.x - x0;
  const double dy = p.y - y0;
  return dx * dx + dy * dy <= x1 * x1;
}

LayerShape LayerShape::rect(double x0, double y0, double x1, double y1) {
  return {ShapeKind::kRect, x0, y0, x1, y1};
}

LayerShape LayerShape::disc(double cx, double cy, double r) {
  return {ShapeKind::kDisc, cx, cy, r, 0.0};
}

void SceneSpec::validate() const {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("scene: degenerate canvas " + std::to_string(width) + "x" +
                                std::to_string(height));
  }
  if (frames < 3) throw std::invalid_argument("scene: need at least 3 frames");
  if (channels != 1 && channels != 3) throw std::invalid_argument("scene: channels must be 1 or 3");
  if (texture_smoothing < 0) throw std::invalid_argument("scene: negative texture smoothing");
  auto check = [&](const Motion& m, std::vector<Point> probes, const std::string& who) {
    for (int t = 0; t + 1 < frames; ++t) {
      for (const Point& p : probes) {
        const Point a = m.apply(p, t);
        const Point b = m.apply(p, t + 1);
        if (std::abs(b.x - a.x) > 0.5 * width || std::abs(b.y - a.y) > 0.5 * height) {
          throw std::invalid_argument("scene: " + who + " moves more than half the canvas in one frame");
        }
      }
    }
  };
  check(background, {{0, 0}, {width - 1.0, 0}, {0, height - 1.0}, {width - 1.0, height - 1.0}},
        "background");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerShape& s = layers[k].shape;
    std::vector<Point> probes;
    if (s.kind == ShapeKind::kRect) {
      probes = {{s.x0, s.y0}, {s.x1, s.y0}, {s.x0, s.y1}, {s.x1, s.y1}};
    } else {
      probes = {{s.x0 - s.x1, s.y0}, {s.x0 + s.x1, s.y0}, {s.x0, s.y0 - s.x1}, {s.x0, s.y0 + s.x1}};
    }
    check(layers[k].motion, probes, "layer " + std::to_string(k));
  }
}

int top_layer(const SceneSpec& spec, Point p, double t) {
  return top_layer_ordered(spec, front_to_back(spec), p, t);
}

SequenceSample generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int w = spec.width;
  const int h = spec.height;
  const std::vector<int> order = front_to_back(spec);

  const Texture background(splitmix64(seed ^ splitmix64(spec.background_seed)), spec.channels,
                           spec.texture_smoothing);
  std::vector<Texture> textures;
  for (const Layer& layer : spec.layers) {
    textures.emplace_back(splitmix64(seed ^ splitmix64(layer.texture_seed + 1)), spec.channels,
                          spec.texture_smoothing);
  }

  SequenceSample out;
  // Top-most layer per pixel and frame, reused for the ground truth.
  std::vector<std::vector<int>> owner(spec.frames, std::vector<int>(static_cast<std::size_t>(w) * h));
  for (int t = 0; t < spec.frames; ++t) {
    ImageBuffer frame(w, h, spec.channels);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Point p{static_cast<double>(x), static_cast<double>(y)};
        const int k = top_layer_ordered(spec, order, p, t);
        owner[t][static_cast<std::size_t>(y) * w + x] = k;
        const Texture& tex = k < 0 ? background : textures[k];
        tex.sample(motion_of(spec, k).invert(p, t), &frame.at(x, y));
      }
    }
    out.frames.push_back(std::move(frame));
  }

  for (int t = 0; t + 1 < spec.frames; ++t) {
    FlowField fwd(w, h), bwd(w, h);
    Mask occ(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const Point p{static_cast<double>(x), static_cast<double>(y)};

        const int k = owner[t][i];
        const Motion& m = motion_of(spec, k);
        const Point target = m.apply(m.invert(p, t), t + 1);
        fwd.u[i] = target.x - p.x;
        fwd.v[i] = target.y - p.y;
        const bool hidden =
            !inside_canvas(spec, target) || top_layer_ordered(spec, order, target, t + 1) != k;
        occ.data[i] = hidden ? 1 : 0;

        const int kb = owner[t + 1][i];
        const Motion& mb = motion_of(spec, kb);
        const Point source = mb.apply(mb.invert(p, t + 1), t);
        bwd.u[i] = source.x - p.x;
        bwd.v[i] = source.y - p.y;
      }
    }
    out.gt_fwd.push_back(std::move(fwd));
    out.gt_bwd.push_back(std::move(bwd));
    out.occlusion.push_back(std::move(occ));
  }
  return out;
}

SceneSpec random_scene(const SceneOptions& o, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SceneSpec spec;
  spec.width = o.width;
  spec.height = o.height;
  spec.frames = o.frames;
  spec.channels = o.channels;
  spec.texture_smoothing = o.texture_smoothing;
  spec.background_seed = rng();
  spec.background = Motion::constant(uniform(-o.max_background_speed, o.max_background_speed),
                                     uniform(-o.max_background_speed, o.max_background_speed));

  const bool abrupt = uniform(0.0, 1.0) < o.abrupt_fraction;
  const int n_layers = pick(o.min_layers, o.max_layers);
  const double min_dim = std::min(o.width, o.height);
  for (int k = 0; k < n_layers; ++k) {
    Layer layer;
    layer.texture_seed = rng();
    layer.depth = k;
    // Half-pixel offsets keep shape edges off the sampling grid.
    const double size = std::round(uniform(0.18, 0.4) * min_dim) + 0.5;
    const double cx = std::round(uniform(0.15, 0.85) * o.width) + 0.5;
    const double cy = std::round(uniform(0.15, 0.85) * o.height) + 0.5;
    if (uniform(0.0, 1.0) < 0.5) {
      layer.shape = LayerShape::rect(cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2);
    } else {
      layer.shape = LayerShape::disc(cx, cy, size / 2);
    }
    const double speed = uniform(0.5, o.max_speed);
    const double heading = uniform(0.0, 2.0 * std::numbers::pi);
    Motion m = Motion::constant(speed * std::cos(heading), speed * std::sin(heading));
    m.center = {cx, cy};
    const double kind = uniform(0.0, 1.0);
    if (kind < 0.15) {
      m.acceleration = {uniform(-0.4, 0.4), uniform(-0.4, 0.4)};
    } else if (kind < 0.3) {
      m.degrees_per_frame = uniform(-4.0, 4.0);
    } else if (kind < 0.45) {
      m.scale_per_frame = uniform(0.96, 1.04);
    }
    if (abrupt) {
      m.change_frame = o.frames - 2;
      const double speed2 = uniform(0.5, o.max_speed);
      const double heading2 = heading + uniform(0.5 * std::numbers::pi, 1.5 * std::numbers::pi);
      m.velocity_after = {speed2 * std::cos(heading2), speed2 * std::sin(heading2)};
    }
    layer.motion = m;
    spec.layers.push_back(layer);
  }
  return spec;
}

void split_by_seed_hash(const std::vector<std::uint64_t>& seeds, double split_ratio,
                        std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0)) {
    throw std::invalid_argument("split ratio must lie in [0, 1]");
  }
  std::vector<std::size_t> order(seeds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return splitmix64(seeds[a]) < splitmix64(seeds[b]);
  });
  const auto n_train = static_cast<std::size_t>(std::lround(split_ratio * seeds.size()));
  train.assign(order.begin(), order.begin() + n_train);
  val.assign(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

Dataset make_dataset(const std::vector<SceneSpec>& specs, const std::vector<std::uint64_t>& seeds,
                     double split_ratio) {
  if (specs.empty()) throw std::invalid_argument("make_dataset: no scenes");
  if (specs.size() != seeds.size()) {
    throw std::invalid_argument("make_dataset: " + std::to_string(specs.size()) + " specs but " +
                                std::to_string(seeds.size()) + " seeds");
  }
  Dataset ds;
  split_by_seed_hash(seeds, split_ratio, ds.train_index, ds.val_index);
  for (std::size_t i : ds.train_index) ds.train.push_back(generate(specs[i], seeds[i]));
  for (std::size_t i : ds.val_index) ds.val.push_back(generate(specs[i], seeds[i]));
  return ds;
}

}  // namespace flowfuse::synth
