#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "flowfuse/errors.hpp"
#include "flowfuse/fusion.hpp"

namespace flowfuse {

namespace {

FlowField crop_flow(const FlowField& f, int x0, int y0, int w, int h) {
  FlowField out(w, h);
  if (f.has_valid()) out.valid = Mask(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t s = f.index(x0 + x, y0 + y);
      const std::size_t d = out.index(x, y);
      out.u[d] = f.u[s];
      out.v[d] = f.v[s];
      if (f.has_valid()) out.valid.data[d] = f.valid.data[s];
    }
  }
  return out;
}

ImageBuffer crop_image(const ImageBuffer& img, int x0, int y0, int w, int h) {
  ImageBuffer out(w, h, img.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

FusionExample crop_example(const FusionExample& ex, int x0, int y0, int w, int h) {
  FusionExample out;
  const CandidateSet& s = ex.candidates;
  out.candidates.current = crop_flow(s.current, x0, y0, w, h);
  out.candidates.warped = crop_flow(s.warped, x0, y0, w, h);
  out.candidates.err_current = crop_image(s.err_current, x0, y0, w, h);
  out.candidates.err_warped = crop_image(s.err_warped, x0, y0, w, h);
  out.candidates.frame = crop_image(s.frame, x0, y0, w, h);
  out.gt = crop_flow(ex.gt, x0, y0, w, h);
  return out;
}

}  // namespace

TrainResult train_fusion(std::span<const FusionExample> examples, const nn::TrainConfig& cfg,
                         const FusionInputConfig& icfg, const TrainCallback& callback) {
  cfg.validate();
  if (examples.empty()) throw std::invalid_argument("train_fusion: empty dataset");
  const int image_channels = examples.front().candidates.frame.channels;
  int crop_w = cfg.crop_size;
  int crop_h = cfg.crop_size;
  for (const FusionExample& ex : examples) {
    ex.candidates.validate();
    if (!same_grid(ex.gt, ex.candidates.current)) {
      throw DimensionError("train_fusion: ground truth does not match the candidates");
    }
    if (ex.candidates.frame.channels != image_channels) {
      throw DimensionError("train_fusion: examples mix frame channel counts");
    }
    crop_w = std::min(crop_w, ex.gt.width);
    crop_h = std::min(crop_h, ex.gt.height);
  }

  TrainResult result{FusionNet(icfg.channels(image_channels), cfg.seed), {}};
  nn::Adam adam(result.net.parameters(), nn::AdamHyper{cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<CandidateSet> sets;
    std::vector<FlowField> targets;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const FusionExample& ex = examples[order[cursor++]];
      const int x0 = std::uniform_int_distribution<int>(0, ex.gt.width - crop_w)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, ex.gt.height - crop_h)(rng);
      FusionExample crop = crop_example(ex, x0, y0, crop_w, crop_h);
      sets.push_back(std::move(crop.candidates));
      targets.push_back(std::move(crop.gt));
    }

    const nn::TensorData input = pack_inputs(sets, icfg);
    nn::Tape tape;
    const FusionNet::Output out = result.net.forward(tape, input);
    const nn::Tensor levels[] = {out.flow};
    const nn::Tensor loss = nn::robust_loss(levels, targets, cfg, out.decayed);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw std::runtime_error("train_fusion: non-finite loss " + std::to_string(value) +
                               " at step " + std::to_string(step));
    }
    adam.zero_grad();
    tape.backward(loss);
    adam.step();
    result.loss_curve.push_back(value);
    if (callback && !callback(step, value)) break;
  }
  return result;
}

std::vector<FusionExample> make_examples(std::span<const synth::SequenceSample> sequences,
                                         const TwoFrameEstimator* est) {
  std::vector<FusionExample> out;
  for (const synth::SequenceSample& s : sequences) {
    if (s.frames.size() < 3) throw std::invalid_argument("make_examples: sequence shorter than 3 frames");
    const int t = static_cast<int>(s.frames.size()) - 2;
    FusionExample ex;
    if (est) {
      ex.candidates = build_candidates(s.frames[t - 1], s.frames[t], s.frames[t + 1], *est, t);
    } else {
      ex.candidates = candidates_from_flows(s.frames[t], s.frames[t + 1], s.gt_fwd[t],
                                            s.gt_fwd[t - 1], s.gt_bwd[t - 1]);
    }
    ex.gt = s.gt_fwd[t];
    out.push_back(std::move(ex));
  }
  return out;
}

TrainResult train_fusion(std::span<const synth::SequenceSample> sequences,
                         const TwoFrameEstimator* est, const nn::TrainConfig& cfg,
                         const FusionInputConfig& icfg, const TrainCallback& callback) {
  if (sequences.empty()) throw std::invalid_argument("train_fusion: empty dataset");
  const std::vector<FusionExample> examples = make_examples(sequences, est);
  return train_fusion(examples, cfg, icfg, callback);
}

}  // namespace flowfuse
