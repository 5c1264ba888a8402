#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/flow_core.hpp"

namespace flowfuse::nn {

namespace {

struct LevelTarget {
  int width = 0;
  int height = 0;
  std::vector<double> u, v;
  std::vector<std::uint8_t> valid;
};

LevelTarget from_flow(const FlowField& f) {
  LevelTarget t{f.width, f.height, f.u, f.v, {}};
  t.valid.resize(f.pixels());
  for (std::size_t i = 0; i < f.pixels(); ++i) t.valid[i] = f.is_valid(i) ? 1 : 0;
  return t;
}

// Mean of the valid children of each 2x2 block, displacement halved.
LevelTarget pool_target(const LevelTarget& in) {
  LevelTarget out{in.width / 2, in.height / 2, {}, {}, {}};
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  out.u.assign(n, 0.0);
  out.v.assign(n, 0.0);
  out.valid.assign(n, 0);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double su = 0.0, sv = 0.0;
      int count = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::size_t i = static_cast<std::size_t>(2 * y + dy) * in.width + 2 * x + dx;
          if (!in.valid[i]) continue;
          su += in.u[i];
          sv += in.v[i];
          ++count;
        }
      }
      const std::size_t o = static_cast<std::size_t>(y) * out.width + x;
      if (count > 0) {
        out.u[o] = 0.5 * su / count;
        out.v[o] = 0.5 * sv / count;
        out.valid[o] = 1;
      }
    }
  }
  return out;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor robust_loss(std::span<const Tensor> pred_levels, std::span<const FlowField> gt,
                   const TrainConfig& cfg, std::span<const Tensor> decayed_weights) {
  if (pred_levels.empty()) throw std::invalid_argument("robust_loss: no prediction levels");
  if (pred_levels.size() > cfg.alpha_levels.size()) {
    throw std::invalid_argument("robust_loss: " + std::to_string(pred_levels.size()) +
                                " levels but only " + std::to_string(cfg.alpha_levels.size()) +
                                " alpha weights");
  }
  const int batch = pred_levels.front().shape().n;
  if (static_cast<int>(gt.size()) != batch) {
    throw std::invalid_argument("robust_loss: batch of " + std::to_string(batch) +
                                " predictions but " + std::to_string(gt.size()) + " targets");
  }

  // targets[l][n]
  std::vector<std::vector<LevelTarget>> targets(pred_levels.size());
  for (int n = 0; n < batch; ++n) {
    LevelTarget cur = from_flow(gt[n]);
    for (std::size_t l = 0; l < pred_levels.size(); ++l) {
      const Shape s = pred_levels[l].shape();
      if (s.n != batch || s.c != 2) {
        throw std::invalid_argument("robust_loss: level " + std::to_string(l) +
                                    " prediction has shape " + s.str());
      }
      while (cur.width > s.w && cur.height > s.h) cur = pool_target(cur);
      if (cur.width != s.w || cur.height != s.h) {
        throw std::invalid_argument("robust_loss: cannot pool ground truth " +
                                    std::to_string(gt[n].width) + "x" +
                                    std::to_string(gt[n].height) + " to level shape " + s.str());
      }
      targets[l].push_back(cur);
    }
  }

  const bool l1 = cfg.norm == FlowNorm::kL1;
  double data_term = 0.0;
  std::size_t valid_pixels = 0;
  // d(loss)/d(pred) per level, filled during the forward pass.
  std::vector<std::vector<double>> dpred(pred_levels.size());
  for (std::size_t l = 0; l < pred_levels.size(); ++l) {
    const Shape s = pred_levels[l].shape();
    const auto pv = pred_levels[l].value();
    const double alpha = cfg.alpha_levels[l];
    dpred[l].assign(s.size(), 0.0);
    const std::size_t plane = s.plane();
    for (int n = 0; n < batch; ++n) {
      const LevelTarget& t = targets[l][n];
      const std::size_t base_u = static_cast<std::size_t>(n) * 2 * plane;
      const std::size_t base_v = base_u + plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!t.valid[i]) continue;
        ++valid_pixels;
        const double du = pv[base_u + i] - t.u[i];
        const double dv = pv[base_v + i] - t.v[i];
        const double dist = l1 ? std::abs(du) + std::abs(dv) : std::sqrt(du * du + dv * dv);
        data_term += alpha * std::pow(dist + cfg.epsilon, cfg.q);
        const double outer = alpha * cfg.q * std::pow(dist + cfg.epsilon, cfg.q - 1.0);
        if (l1) {
          dpred[l][base_u + i] = outer * sign(du);
          dpred[l][base_v + i] = outer * sign(dv);
        } else if (dist > 0.0) {
          dpred[l][base_u + i] = outer * du / dist;
          dpred[l][base_v + i] = outer * dv / dist;
        }
      }
    }
  }
  if (valid_pixels == 0) {
    throw std::runtime_error("robust_loss: no valid ground-truth pixels (degenerate batch)");
  }

  double decay = 0.0;
  for (const Tensor& w : decayed_weights) {
    for (double x : w.value()) decay += x * x;
  }
  const double total = data_term + cfg.gamma * decay;

  std::vector<Tensor> inputs(pred_levels.begin(), pred_levels.end());
  inputs.insert(inputs.end(), decayed_weights.begin(), decayed_weights.end());
  std::vector<std::size_t> pred_ids, weight_ids;
  for (const Tensor& p : pred_levels) pred_ids.push_back(p.id());
  for (const Tensor& w : decayed_weights) weight_ids.push_back(w.id());
  const double gamma = cfg.gamma;

  Tape* tape = pred_levels.front().tape();
  return tape->record(Shape{}, {total}, inputs,
                      [pred_ids, weight_ids, gamma, dpred = std::move(dpred)](Tape& t,
                                                                              std::size_t self) {
                        const double g = t.data(self).grad[0];
                        for (std::size_t l = 0; l < pred_ids.size(); ++l) {
                          auto& pg = t.data(pred_ids[l]).grad;
                          for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g * dpred[l][i];
                        }
                        for (std::size_t id : weight_ids) {
                          auto& d = t.data(id);
                          for (std::size_t i = 0; i < d.grad.size(); ++i) {
                            d.grad[i] += g * 2.0 * gamma * d.value[i];
                          }
                        }
                      });
}

}  // namespace flowfuse::nn
