#include "flowfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flowfuse/errors.hpp"
#include "flowfuse/flow_io.hpp"

namespace flowfuse {

namespace {

void require_grid(const FlowField& a, const FlowField& b, const std::string& what) {
  if (!same_grid(a, b)) {
    throw DimensionError(what + ": " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                         " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

// Copies an (N, C, H, W) tensor into (N, C, Hp, Wp), repeating the last row
// and column.
nn::TensorData edge_pad(const nn::TensorData& in, int hp, int wp) {
  const nn::Shape s = in.shape;
  nn::TensorData out(nn::Shape{s.n, s.c, hp, wp});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = in.value.data() + (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      double* dst = out.value.data() + (static_cast<std::size_t>(n) * s.c + c) * hp * wp;
      for (int y = 0; y < hp; ++y) {
        const int sy = std::min(y, s.h - 1);
        for (int x = 0; x < wp; ++x) {
          dst[static_cast<std::size_t>(y) * wp + x] = src[static_cast<std::size_t>(sy) * s.w + std::min(x, s.w - 1)];
        }
      }
    }
  }
  return out;
}

struct LayerSpec {
  const char* name;
  int in, out, kernel;
};

}  // namespace

int FusionInputConfig::channels(int image_channels) const {
  return 4 + (include_brightness_errors ? 2 : 0) + (include_image ? image_channels : 0) +
         (include_magnitude ? 2 : 0);
}

void CandidateSet::validate() const {
  require_grid(current, warped, "candidate set");
  if (!same_grid(current, err_current) || !same_grid(current, err_warped) ||
      !same_grid(current, frame)) {
    throw DimensionError("candidate set: error maps and frame must match the flow size");
  }
  if (err_current.channels != 1 || err_warped.channels != 1) {
    throw DimensionError("candidate set: error maps must have one channel");
  }
  for (const FlowField& f : extra) require_grid(current, f, "candidate set extra flow");
}

CandidateSet candidates_from_flows(const ImageBuffer& I_t, const ImageBuffer& I_next,
                                   const FlowField& current, const FlowField& prev,
                                   const FlowField& back) {
  CandidateSet set;
  set.current = current;
  set.warped = warp_flow(prev, back);
  set.err_current = brightness_error(I_t, I_next, set.current);
  set.err_warped = brightness_error(I_t, I_next, set.warped);
  set.frame = I_t;
  set.validate();
  return set;
}

CandidateSet build_candidates(const ImageBuffer& I_prev, const ImageBuffer& I_t,
                              const ImageBuffer& I_next, const TwoFrameEstimator& est,
                              int frame_t) {
  if (!same_grid(I_prev, I_t) || !same_grid(I_t, I_next)) {
    throw DimensionError("build_candidates: frames differ in size");
  }
  const FlowField current = est.estimate(I_t, I_next, frame_t, frame_t + 1);
  const FlowField prev = est.estimate(I_prev, I_t, frame_t - 1, frame_t);
  const FlowField back = est.estimate(I_t, I_prev, frame_t, frame_t - 1);
  return candidates_from_flows(I_t, I_next, current, prev, back);
}

std::vector<FlowField> k_frame_candidates(std::span<const FlowField> fwd,
                                          std::span<const FlowField> bwd, int t) {
  if (t < 0 || static_cast<std::size_t>(t) >= fwd.size() ||
      bwd.size() < static_cast<std::size_t>(t)) {
    throw std::invalid_argument("k_frame_candidates: frame " + std::to_string(t) +
                                " out of range for " + std::to_string(fwd.size()) + " flows");
  }
  std::vector<FlowField> out{fwd[t]};
  for (int k = 1; k <= t; ++k) {
    out.push_back(compose_warp_chain(fwd.subspan(t - k, k), bwd.subspan(t - k, k)));
  }
  return out;
}

OracleResult oracle_fuse(std::span<const FlowField> candidates, const FlowField& gt) {
  if (candidates.size() < 2) {
    throw std::invalid_argument("oracle_fuse: need at least 2 candidates, got " +
                                std::to_string(candidates.size()));
  }
  for (const FlowField& c : candidates) require_grid(c, gt, "oracle_fuse");
  OracleResult r{FlowField(gt.width, gt.height), std::vector<int>(gt.pixels(), 0)};
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    int best = 0;
    double best_err = std::hypot(candidates[0].u[i] - gt.u[i], candidates[0].v[i] - gt.v[i]);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
      const double e = std::hypot(candidates[k].u[i] - gt.u[i], candidates[k].v[i] - gt.v[i]);
      if (e < best_err) {
        best_err = e;
        best = static_cast<int>(k);
      }
    }
    r.choice[i] = best;
    r.flow.u[i] = candidates[best].u[i];
    r.flow.v[i] = candidates[best].v[i];
  }
  return r;
}

FlowField heuristic_fuse(const CandidateSet& set) {
  set.validate();
  FlowField out = set.current;
  out.valid = {};
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    if (set.warped.is_valid(i) && set.err_warped.data[i] < set.err_current.data[i]) {
      out.u[i] = set.warped.u[i];
      out.v[i] = set.warped.v[i];
    }
  }
  return out;
}

nn::TensorData pack_inputs(std::span<const CandidateSet> sets, const FusionInputConfig& cfg) {
  if (sets.empty()) throw std::invalid_argument("pack_inputs: no candidate sets");
  const int w = sets.front().current.width;
  const int h = sets.front().current.height;
  const int ic = sets.front().frame.channels;
  const int channels = cfg.channels(ic);
  nn::TensorData out(nn::Shape{static_cast<int>(sets.size()), channels, h, w});
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t n = 0; n < sets.size(); ++n) {
    const CandidateSet& s = sets[n];
    s.validate();
    if (s.current.width != w || s.current.height != h || s.frame.channels != ic) {
      throw DimensionError("pack_inputs: candidate sets differ in size or frame channels");
    }
    double* base = out.value.data() + n * channels * plane;
    int c = 0;
    auto put = [&](auto&& value_at) {
      double* dst = base + static_cast<std::size_t>(c++) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = value_at(i);
    };
    put([&](std::size_t i) { return s.current.u[i]; });
    put([&](std::size_t i) { return s.current.v[i]; });
    put([&](std::size_t i) { return s.warped.u[i]; });
    put([&](std::size_t i) { return s.warped.v[i]; });
    if (cfg.include_brightness_errors) {
      put([&](std::size_t i) { return s.err_current.data[i]; });
      put([&](std::size_t i) { return s.err_warped.data[i]; });
    }
    if (cfg.include_image) {
      for (int k = 0; k < ic; ++k) put([&](std::size_t i) { return s.frame.data[i * ic + k]; });
    }
    if (cfg.include_magnitude) {
      put([&](std::size_t i) { return std::hypot(s.current.u[i], s.current.v[i]); });
      put([&](std::size_t i) { return std::hypot(s.warped.u[i], s.warped.v[i]); });
    }
  }
  return out;
}

nn::TensorData pack_input(const CandidateSet& set, const FusionInputConfig& cfg) {
  return pack_inputs(std::span<const CandidateSet>(&set, 1), cfg);
}

namespace {

std::vector<LayerSpec> layer_specs(int in_channels) {
  return {{"e1", in_channels, 16, 3}, {"e2", 16, 32, 3},     {"e3", 32, 64, 3},
          {"d3", 64, 32, 3},          {"d2", 32 + 32, 16, 3}, {"d1", 16 + 16, 16, 3},
          {"d0", 16 + in_channels, 8, 3}, {"head", 8 + in_channels, 2, 1}};
}

}  // namespace

FusionNet::FusionNet(int in_channels, std::uint64_t seed) : in_channels_(in_channels) {
  if (in_channels < 4) {
    throw ConfigError("fusion net needs at least 4 input channels, got " + std::to_string(in_channels));
  }
  std::uint64_t layer_seed = seed;
  for (const LayerSpec& l : layer_specs(in_channels)) {
    auto w = std::make_shared<nn::TensorData>(nn::Shape{l.out, l.in, l.kernel, l.kernel});
    auto b = std::make_shared<nn::TensorData>(nn::Shape{1, l.out, 1, 1});
    if (std::string(l.name) != "head") nn::he_uniform(*w, l.in * l.kernel * l.kernel, layer_seed++);
    params_.push_back({std::string(l.name) + ".weight", w, true});
    params_.push_back({std::string(l.name) + ".bias", b, false});
  }
}

FusionNet::FusionNet(const FusionNet& other) : in_channels_(other.in_channels_) {
  for (const auto& p : other.params_) {
    params_.push_back({p.name, std::make_shared<nn::TensorData>(*p.data), p.decay});
  }
}

FusionNet& FusionNet::operator=(const FusionNet& other) {
  if (this != &other) *this = FusionNet(other);
  return *this;
}

std::size_t FusionNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data->value.size();
  return n;
}

FusionNet::Output FusionNet::forward(nn::Tape& tape, const nn::TensorData& input) const {
  const nn::Shape s = input.shape;
  if (s.c != in_channels_) {
    throw ConfigError("fusion net expects " + std::to_string(in_channels_) +
                      " input channels but got " + std::to_string(s.c));
  }
  const int hp = round_up(s.h, kMultiple);
  const int wp = round_up(s.w, kMultiple);
  nn::TensorData padded = hp == s.h && wp == s.w ? input : edge_pad(input, hp, wp);
  const nn::Tensor x = tape.constant(padded.shape, std::move(padded.value));

  Output out;
  std::vector<nn::Tensor> p;
  for (const auto& param : params_) {
    p.push_back(tape.variable(param.data));
    if (param.decay) out.decayed.push_back(p.back());
  }
  auto layer = [&](std::size_t k, const nn::Tensor& in, int stride) {
    const int pad = p[2 * k].shape().h / 2;
    return nn::conv2d(in, p[2 * k], p[2 * k + 1], stride, pad);
  };
  auto act = [](const nn::Tensor& t) { return nn::leaky_relu(t, 0.1); };
  auto cat = [](const nn::Tensor& a, const nn::Tensor& b) {
    const nn::Tensor parts[] = {a, b};
    return nn::concat_channels(parts);
  };

  const nn::Tensor e1 = act(layer(0, x, 2));
  const nn::Tensor e2 = act(layer(1, e1, 2));
  const nn::Tensor e3 = act(layer(2, e2, 2));
  const nn::Tensor d3 = act(layer(3, e3, 1));
  const nn::Tensor d2 = act(layer(4, cat(nn::bilinear_upsample2x(d3), e2), 1));
  const nn::Tensor d1 = act(layer(5, cat(nn::bilinear_upsample2x(d2), e1), 1));
  const nn::Tensor d0 = act(layer(6, cat(nn::bilinear_upsample2x(d1), x), 1));
  const nn::Tensor head = layer(7, cat(d0, x), 1);
  out.flow = hp == s.h && wp == s.w ? head : nn::crop(head, s.h, s.w);
  return out;
}

std::vector<nn::NamedTensor> FusionNet::export_tensors() const {
  std::vector<nn::NamedTensor> out;
  for (const auto& p : params_) out.push_back({p.name, p.data->shape, p.data->value});
  return out;
}

void FusionNet::import_tensors(std::span<const nn::NamedTensor> tensors) {
  if (tensors.size() != params_.size()) {
    throw FormatError(FormatError::Kind::kUnsupported,
                      "checkpoint has " + std::to_string(tensors.size()) + " tensors, net expects " +
                          std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const nn::NamedTensor& t = tensors[i];
    if (t.name != params_[i].name || !(t.shape == params_[i].data->shape)) {
      throw FormatError(FormatError::Kind::kUnsupported,
                        "checkpoint tensor '" + t.name + "' " + t.shape.str() + " does not match '" +
                            params_[i].name + "' " + params_[i].data->shape.str());
    }
    params_[i].data->value = t.values;
    params_[i].data->zero_grad();
  }
}

FlowField fuse(const FusionNet& net, const CandidateSet& set, const FusionInputConfig& cfg) {
  const int expected = cfg.channels(set.frame.channels);
  if (expected != net.in_channels()) {
    throw ConfigError("fusion input config yields " + std::to_string(expected) +
                      " channels but the net expects " + std::to_string(net.in_channels()));
  }
  const nn::TensorData input = pack_input(set, cfg);
  nn::Tape tape;
  const nn::Tensor flow = net.forward(tape, input).flow;
  FlowField out(set.current.width, set.current.height);
  const auto v = flow.value();
  std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(out.pixels()), out.u.begin());
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(out.pixels()), v.end(), out.v.begin());
  return out;
}

void save_fusion(const std::filesystem::path& path, const FusionNet& net,
                 const FusionInputConfig& inputs, const nn::TrainConfig& train,
                 std::map<std::string, std::string> meta) {
  nn::Checkpoint ckpt;
  ckpt.config = train;
  ckpt.meta = std::move(meta);
  ckpt.meta["arch"] = "fusionnet-3level";
  ckpt.meta["in_channels"] = std::to_string(net.in_channels());
  ckpt.meta["include_image"] = inputs.include_image ? "1" : "0";
  ckpt.meta["include_brightness_errors"] = inputs.include_brightness_errors ? "1" : "0";
  ckpt.meta["include_magnitude"] = inputs.include_magnitude ? "1" : "0";
  ckpt.tensors = net.export_tensors();
  nn::save_checkpoint(path, ckpt);
}

FusionModel load_fusion(const std::filesystem::path& path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  auto get = [&](const std::string& key) {
    const auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) {
      throw FormatError(FormatError::Kind::kUnsupported, "checkpoint lacks '" + key + "': " + path.string());
    }
    return it->second;
  };
  if (get("arch") != "fusionnet-3level") {
    throw FormatError(FormatError::Kind::kUnsupported, "unknown architecture '" + get("arch") + "'");
  }
  FusionInputConfig inputs;
  inputs.include_image = get("include_image") == "1";
  inputs.include_brightness_errors = get("include_brightness_errors") == "1";
  inputs.include_magnitude = get("include_magnitude") == "1";
  FusionNet net(std::stoi(get("in_channels")));
  net.import_tensors(ckpt.tensors);
  return {std::move(net), inputs, ckpt.config, std::move(ckpt.meta)};
}

void dump_candidates(const std::filesystem::path& dir, const CandidateSet& set) {
  std::filesystem::create_directories(dir);
  write_flo(dir / "current.flo", set.current);
  write_flo(dir / "warped.flo", set.warped);
  write_mask_png(dir / "warped_valid.png", set.warped.validity());
  for (std::size_t k = 0; k < set.extra.size(); ++k) {
    write_flo(dir / ("extra_" + std::to_string(k + 1) + ".flo"), set.extra[k]);
  }
  write_png(dir / "err_current.png", set.err_current, 16);
  write_png(dir / "err_warped.png", set.err_warped, 16);
  write_png(dir / "frame.png", set.frame, 16);
}

}  // namespace flowfuse
