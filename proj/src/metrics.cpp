#include "flowfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "flowfuse/errors.hpp"

namespace flowfuse {

namespace {

void require_grid(const FlowField& a, const FlowField& b, const char* what) {
  if (!same_grid(a, b)) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height));
  }
}

template <typename M>
void require_mask(const FlowField& f, const M& m, const char* what) {
  if (f.width != m.width || f.height != m.height) {
    throw DimensionError(std::string(what) + ": mask size does not match the flow");
  }
}

double epe_at(const FlowField& a, const FlowField& b, std::size_t i) {
  return std::hypot(a.u[i] - b.u[i], a.v[i] - b.v[i]);
}

bool is_outlier(double epe, double gt_mag) { return epe > 3.0 && epe > 0.05 * gt_mag; }

std::optional<double> mean(double sum, std::size_t n) {
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

ImageBuffer epe_map(const FlowField& flow, const FlowField& gt) {
  require_grid(flow, gt, "epe_map");
  ImageBuffer out(flow.width, flow.height, 1);
  for (std::size_t i = 0; i < flow.pixels(); ++i) out.data[i] = epe_at(flow, gt, i);
  return out;
}

std::optional<double> aepe(const FlowField& flow, const FlowField& gt, const Mask& mask) {
  require_grid(flow, gt, "aepe");
  require_mask(flow, mask, "aepe");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    if (!mask.data[i]) continue;
    sum += epe_at(flow, gt, i);
    ++n;
  }
  return mean(sum, n);
}

RegionMasks region_partition(const FlowField& gt, const Mask& occlusion) {
  require_mask(gt, occlusion, "region_partition");
  RegionMasks r;
  r.outside = out_of_boundary_mask(gt);
  r.inside = mask_not(r.outside);
  r.occluded = occlusion;
  return r;
}

std::optional<double> fl_score(const FlowField& flow, const FlowField& gt, const Mask& valid) {
  require_grid(flow, gt, "fl_score");
  require_mask(flow, valid, "fl_score");
  std::size_t n = 0, bad = 0;
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    if (!valid.data[i]) continue;
    ++n;
    if (is_outlier(epe_at(flow, gt, i), std::hypot(gt.u[i], gt.v[i]))) ++bad;
  }
  if (n == 0) return std::nullopt;
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

void MetricsAccumulator::add(const FlowField& flow, const FlowField& gt, const Mask& occlusion) {
  require_grid(flow, gt, "metrics");
  const RegionMasks regions = region_partition(gt, occlusion);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    if (!gt.is_valid(i)) continue;
    const double e = epe_at(flow, gt, i);
    all_.epe += e;
    ++all_.n;
    Sum& side = regions.inside.data[i] ? inside_ : outside_;
    side.epe += e;
    ++side.n;
    if (regions.occluded.data[i]) {
      occluded_.epe += e;
      ++occluded_.n;
    }
    if (is_outlier(e, std::hypot(gt.u[i], gt.v[i]))) ++outliers_;
  }
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.aepe_all = mean(all_.epe, all_.n);
  r.aepe_inside = mean(inside_.epe, inside_.n);
  r.aepe_outside = mean(outside_.epe, outside_.n);
  r.aepe_occluded = mean(occluded_.epe, occluded_.n);
  if (all_.n > 0) r.fl_all = 100.0 * static_cast<double>(outliers_) / static_cast<double>(all_.n);
  r.pixels_all = all_.n;
  r.pixels_inside = inside_.n;
  r.pixels_outside = outside_.n;
  r.pixels_occluded = occluded_.n;
  return r;
}

MetricsReport evaluate(const FlowField& flow, const FlowField& gt, const Mask& occlusion) {
  MetricsAccumulator acc;
  acc.add(flow, gt, occlusion);
  return acc.report();
}

std::string format_value(std::optional<double> v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

namespace {

struct Field {
  const char* key;
  std::string value;
};

std::vector<Field> fields_of(const MetricsReport& r) {
  return {{"aepe_all", format_value(r.aepe_all)},
          {"aepe_inside", format_value(r.aepe_inside)},
          {"aepe_outside", format_value(r.aepe_outside)},
          {"aepe_occluded", format_value(r.aepe_occluded)},
          {"fl_all", format_value(r.fl_all)},
          {"pixels_all", std::to_string(r.pixels_all)},
          {"pixels_inside", std::to_string(r.pixels_inside)},
          {"pixels_outside", std::to_string(r.pixels_outside)},
          {"pixels_occluded", std::to_string(r.pixels_occluded)}};
}

}  // namespace

std::string to_key_value(std::span<const NamedReport> rows) {
  std::ostringstream out;
  for (const auto& [name, report] : rows) {
    for (const Field& f : fields_of(report)) out << name << '.' << f.key << '=' << f.value << '\n';
  }
  return out.str();
}

std::string to_csv(std::span<const NamedReport> rows) {
  std::ostringstream out;
  out << "method";
  for (const Field& f : fields_of(MetricsReport{})) out << ',' << f.key;
  out << '\n';
  for (const auto& [name, report] : rows) {
    out << name;
    for (const Field& f : fields_of(report)) out << ',' << f.value;
    out << '\n';
  }
  return out.str();
}

std::size_t IndicatorMap::count(Indicator c) const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), c));
}

Mask IndicatorMap::mask(Indicator c) const {
  Mask m(width, height);
  for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = data[i] == c ? 1 : 0;
  return m;
}

IndicatorMap indicator_map(const FlowField& fused, const FlowField& current, const FlowField& warped,
                           double agree_threshold, double match_threshold) {
  require_grid(fused, current, "indicator_map");
  require_grid(fused, warped, "indicator_map");
  IndicatorMap map{fused.width, fused.height, std::vector<Indicator>(fused.pixels())};
  for (std::size_t i = 0; i < fused.pixels(); ++i) {
    if (epe_at(current, warped, i) < agree_threshold) {
      map.data[i] = Indicator::kBlue;
    } else if (epe_at(fused, current, i) < match_threshold) {
      map.data[i] = Indicator::kYellow;
    } else if (epe_at(fused, warped, i) < match_threshold) {
      map.data[i] = Indicator::kCyan;
    } else {
      map.data[i] = Indicator::kRed;
    }
  }
  return map;
}

ImageBuffer render_indicator_map(const IndicatorMap& map) {
  ImageBuffer out(map.width, map.height, 3);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    double rgb[3] = {0.0, 0.0, 1.0};
    switch (map.data[i]) {
      case Indicator::kBlue: break;
      case Indicator::kYellow: rgb[0] = 1.0, rgb[1] = 1.0, rgb[2] = 0.0; break;
      case Indicator::kCyan: rgb[0] = 0.0, rgb[1] = 1.0, rgb[2] = 1.0; break;
      case Indicator::kRed: rgb[0] = 1.0, rgb[1] = 0.0, rgb[2] = 0.0; break;
    }
    std::copy(rgb, rgb + 3, out.data.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

std::size_t ComparisonMap::count(Comparison c) const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), c));
}

ComparisonMap comparison_map(const ImageBuffer& epe_a, const ImageBuffer& epe_b, double margin) {
  if (!same_grid(epe_a, epe_b) || epe_a.channels != 1 || epe_b.channels != 1) {
    throw DimensionError("comparison_map: EPE maps must be single-channel and the same size");
  }
  ComparisonMap map{epe_a.width, epe_a.height, std::vector<Comparison>(epe_a.pixels())};
  for (std::size_t i = 0; i < epe_a.pixels(); ++i) {
    const double a = epe_a.data[i];
    const double b = epe_b.data[i];
    map.data[i] = a < b - margin ? Comparison::kGreen
                  : b < a - margin ? Comparison::kRed
                                   : Comparison::kGray;
  }
  return map;
}

ImageBuffer render_comparison_map(const ComparisonMap& map) {
  ImageBuffer out(map.width, map.height, 3);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    double rgb[3] = {0.5, 0.5, 0.5};
    if (map.data[i] == Comparison::kGreen) rgb[0] = 0.0, rgb[1] = 1.0, rgb[2] = 0.0;
    if (map.data[i] == Comparison::kRed) rgb[0] = 1.0, rgb[1] = 0.0, rgb[2] = 0.0;
    std::copy(rgb, rgb + 3, out.data.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

void RedRegionAccumulator::add(const FlowField& fused, std::span<const FlowField> candidates,
                               const FlowField& oracle, const FlowField& gt,
                               const IndicatorMap& classes) {
  if (candidates.size() != candidates_.size()) {
    throw std::invalid_argument("analyze_red_regions: expected " + std::to_string(candidates_.size()) +
                                " candidates, got " + std::to_string(candidates.size()));
  }
  require_grid(fused, gt, "analyze_red_regions");
  require_grid(oracle, gt, "analyze_red_regions");
  require_mask(gt, classes, "analyze_red_regions");
  for (const FlowField& c : candidates) require_grid(c, gt, "analyze_red_regions");
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    if (classes.data[i] != Indicator::kRed || !gt.is_valid(i)) continue;
    ++n_;
    for (std::size_t k = 0; k < candidates.size(); ++k) candidates_[k] += epe_at(candidates[k], gt, i);
    const double ef = epe_at(fused, gt, i);
    const double eo = epe_at(oracle, gt, i);
    fused_ += ef;
    oracle_ += eo;
    if (ef < eo) ++beats_;
  }
}

RedRegionReport RedRegionAccumulator::report() const {
  RedRegionReport r;
  r.red_pixels = n_;
  for (double s : candidates_) r.aepe_candidates.push_back(mean(s, n_));
  r.aepe_fused = mean(fused_, n_);
  r.aepe_oracle = mean(oracle_, n_);
  if (n_ > 0) r.fused_beats_oracle_pct = 100.0 * static_cast<double>(beats_) / static_cast<double>(n_);
  return r;
}

RedRegionReport analyze_red_regions(const FlowField& fused, std::span<const FlowField> candidates,
                                    const FlowField& oracle, const FlowField& gt,
                                    const IndicatorMap& classes) {
  RedRegionAccumulator acc(candidates.size());
  acc.add(fused, candidates, oracle, gt, classes);
  return acc.report();
}

std::string to_key_value(const RedRegionReport& report, const std::vector<std::string>& candidate_names) {
  std::ostringstream out;
  out << "red.pixels=" << report.red_pixels << '\n';
  for (std::size_t k = 0; k < report.aepe_candidates.size(); ++k) {
    const std::string name = k < candidate_names.size() ? candidate_names[k] : "candidate" + std::to_string(k);
    out << "red.aepe_" << name << '=' << format_value(report.aepe_candidates[k]) << '\n';
  }
  out << "red.aepe_fused=" << format_value(report.aepe_fused) << '\n';
  out << "red.aepe_oracle=" << format_value(report.aepe_oracle) << '\n';
  out << "red.fused_beats_oracle_pct=" << format_value(report.fused_beats_oracle_pct) << '\n';
  return out.str();
}

}  // namespace flowfuse
