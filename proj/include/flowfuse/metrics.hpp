#pragma once

// Endpoint-error metrics split by region, outlier rates and the diagnostic
// maps used to inspect fusion behaviour.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowfuse/flow_core.hpp"

namespace flowfuse {

// Per-pixel Euclidean distance between flow and gt (1 channel).
ImageBuffer epe_map(const FlowField& flow, const FlowField& gt);

// Mean EPE over the set pixels of mask; nullopt when the mask is empty.
std::optional<double> aepe(const FlowField& flow, const FlowField& gt, const Mask& mask);

struct RegionMasks {
  Mask inside;    // target stays within the frame
  Mask outside;   // target leaves the frame
  Mask occluded;  // independent of the two above

  Mask all() const { return mask_or(inside, outside); }
};

RegionMasks region_partition(const FlowField& gt, const Mask& occlusion);

// Percentage of mask pixels with EPE > 3 px and EPE > 5% of |gt|.
std::optional<double> fl_score(const FlowField& flow, const FlowField& gt, const Mask& valid);

// Region-partitioned summary. Regions without pixels report nullopt.
struct MetricsReport {
  std::optional<double> aepe_all, aepe_inside, aepe_outside, aepe_occluded;
  std::optional<double> fl_all;
  std::size_t pixels_all = 0, pixels_inside = 0, pixels_outside = 0, pixels_occluded = 0;
};

// Pools pixels over any number of (flow, gt, occlusion) triples; AEPEs are
// pixel-weighted across samples. Pixels invalid in gt are skipped.
class MetricsAccumulator {
 public:
  void add(const FlowField& flow, const FlowField& gt, const Mask& occlusion);
  MetricsReport report() const;

 private:
  struct Sum {
    double epe = 0.0;
    std::size_t n = 0;
  };
  Sum all_, inside_, outside_, occluded_;
  std::size_t outliers_ = 0;
};

MetricsReport evaluate(const FlowField& flow, const FlowField& gt, const Mask& occlusion);

// Named rows, serialised as "name.key=value" lines or CSV. Values use fixed
// six-decimal formatting; absent values print as NA.
using NamedReport = std::pair<std::string, MetricsReport>;
std::string to_key_value(std::span<const NamedReport> rows);
std::string to_csv(std::span<const NamedReport> rows);

// ---- Indicator maps ---------------------------------------------------------

enum class Indicator : std::uint8_t {
  kBlue,    // candidates agree
  kYellow,  // fused follows the current flow
  kCyan,    // fused follows the warped flow
  kRed,     // fused differs from both
};

struct IndicatorMap {
  int width = 0;
  int height = 0;
  std::vector<Indicator> data;

  std::size_t count(Indicator c) const;
  Mask mask(Indicator c) const;
};

IndicatorMap indicator_map(const FlowField& fused, const FlowField& current, const FlowField& warped,
                           double agree_threshold = 5.0, double match_threshold = 5.0);
ImageBuffer render_indicator_map(const IndicatorMap& map);

enum class Comparison : std::uint8_t { kGray, kGreen, kRed };

struct ComparisonMap {
  int width = 0;
  int height = 0;
  std::vector<Comparison> data;

  std::size_t count(Comparison c) const;
};

// Green where epe_a < epe_b - margin, red where epe_b < epe_a - margin.
ComparisonMap comparison_map(const ImageBuffer& epe_a, const ImageBuffer& epe_b, double margin = 0.5);
ImageBuffer render_comparison_map(const ComparisonMap& map);

struct RedRegionReport {
  std::size_t red_pixels = 0;
  std::vector<std::optional<double>> aepe_candidates;
  std::optional<double> aepe_fused;
  std::optional<double> aepe_oracle;
  // Share of red pixels where fused EPE < oracle EPE.
  std::optional<double> fused_beats_oracle_pct;
};

RedRegionReport analyze_red_regions(const FlowField& fused, std::span<const FlowField> candidates,
                                    const FlowField& oracle, const FlowField& gt,
                                    const IndicatorMap& classes);

// Pools red-region statistics over several samples.
class RedRegionAccumulator {
 public:
  explicit RedRegionAccumulator(std::size_t candidates) : candidates_(candidates, 0.0) {}
  void add(const FlowField& fused, std::span<const FlowField> candidates, const FlowField& oracle,
           const FlowField& gt, const IndicatorMap& classes);
  RedRegionReport report() const;

 private:
  std::vector<double> candidates_;
  double fused_ = 0.0, oracle_ = 0.0;
  std::size_t n_ = 0, beats_ = 0;
};

std::string to_key_value(const RedRegionReport& report, const std::vector<std::string>& candidate_names);

std::string format_value(std::optional<double> v);

}  // namespace flowfuse
