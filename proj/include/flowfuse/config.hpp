#pragma once

// Run configuration: an INI file with sections, overridable per key with
// "section.key=value" strings. Unknown keys are rejected.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/estimators.hpp"
#include "flowfuse/fusion.hpp"
#include "flowfuse/synth.hpp"

namespace flowfuse {

struct EstimatorConfig {
  std::string name = "hs";  // hs | lk | precomputed | gt
  HsParams hs;
  LkParams lk;
  std::string precomputed_dir;
  std::string precomputed_pattern = PrecomputedSource::kDefaultPattern;
};

struct DataConfig {
  std::string root;
  int sequences = 24;
  double split_ratio = 0.5;
  std::uint64_t seed = 7;
  synth::SceneOptions scene;
};

struct MetricsConfig {
  double agree_threshold = 5.0;
  double match_threshold = 5.0;
  double comparison_margin = 0.5;
};

struct RunConfig {
  EstimatorConfig estimator;
  FusionInputConfig fusion;
  nn::TrainConfig train = nn::TrainConfig::single_output();
  DataConfig data;
  MetricsConfig metrics;
  std::string output_dir;

  // Defaults, then the file (if non-empty), then the overrides in order.
  static RunConfig load(const std::filesystem::path& file, const std::vector<std::string>& overrides);

  // Every key with its resolved value, one section per block.
  std::string to_ini() const;
  void write(const std::filesystem::path& path) const;
};

// Null for "gt", which callers serve from ground truth directly.
std::unique_ptr<TwoFrameEstimator> make_estimator(const EstimatorConfig& cfg);

}  // namespace flowfuse
