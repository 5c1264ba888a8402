#pragma once

// Dataset-level drivers shared by the CLI and the acceptance suite.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowfuse/fusion.hpp"
#include "flowfuse/metrics.hpp"
#include "flowfuse/synth.hpp"

namespace flowfuse {

// Pairwise flows i -> i+1 and i+1 -> i for every adjacent pair, from est or
// the analytic ground truth when est is null.
struct PairFlows {
  std::vector<FlowField> fwd;
  std::vector<FlowField> bwd;
};
PairFlows pair_flows(const synth::SequenceSample& s, const TwoFrameEstimator* est);

// Candidates for the last triple (t = frames - 2) from precomputed pair flows.
CandidateSet last_triple_candidates(const synth::SequenceSample& s, const PairFlows& flows);

struct EvalOptions {
  const TwoFrameEstimator* estimator = nullptr;  // null: analytic flows
  const FusionModel* model = nullptr;            // adds the "fused" row when set
  double agree_threshold = 5.0;
  double match_threshold = 5.0;
};

struct EvalResult {
  std::vector<NamedReport> rows;  // current, warped, heuristic, oracle[, fused]
  std::optional<RedRegionReport> red;
  std::size_t indicator_counts[4] = {0, 0, 0, 0};
};

EvalResult evaluate_dataset(std::span<const synth::SequenceSample> sequences, const EvalOptions& options);

// Oracle over the current flow and every older flow carried into frame t:
// rows current, warped, oracle_k2 (three frames), oracle_k3, ... up to the
// sequence length.
std::vector<NamedReport> oracle_study(std::span<const synth::SequenceSample> sequences,
                                      const TwoFrameEstimator* est);

std::string eval_report_text(const EvalResult& result);

}  // namespace flowfuse
