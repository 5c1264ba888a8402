#include "flowfuse/pipeline.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace flowfuse {

PairFlows pair_flows(const synth::SequenceSample& s, const TwoFrameEstimator* est) {
  PairFlows out;
  if (!est) {
    out.fwd = s.gt_fwd;
    out.bwd = s.gt_bwd;
    return out;
  }
  for (std::size_t i = 0; i + 1 < s.frames.size(); ++i) {
    const int a = static_cast<int>(i);
    out.fwd.push_back(est->estimate(s.frames[i], s.frames[i + 1], a, a + 1));
    out.bwd.push_back(est->estimate(s.frames[i + 1], s.frames[i], a + 1, a));
  }
  return out;
}

CandidateSet last_triple_candidates(const synth::SequenceSample& s, const PairFlows& flows) {
  if (s.frames.size() < 3) throw std::invalid_argument("sequence shorter than 3 frames");
  const std::size_t t = s.frames.size() - 2;
  return candidates_from_flows(s.frames[t], s.frames[t + 1], flows.fwd[t], flows.fwd[t - 1],
                               flows.bwd[t - 1]);
}

EvalResult evaluate_dataset(std::span<const synth::SequenceSample> sequences, const EvalOptions& options) {
  if (sequences.empty()) throw std::invalid_argument("evaluate_dataset: no sequences");
  MetricsAccumulator current, warped, heuristic, oracle, fused;
  RedRegionAccumulator red(2);
  EvalResult result;
  for (const synth::SequenceSample& s : sequences) {
    const std::size_t t = s.frames.size() - 2;
    const CandidateSet set = last_triple_candidates(s, pair_flows(s, options.estimator));
    const FlowField& gt = s.gt_fwd[t];
    const Mask& occ = s.occlusion[t];
    const FlowField pair[] = {set.current, set.warped};
    const OracleResult best = oracle_fuse(pair, gt);
    current.add(set.current, gt, occ);
    warped.add(set.warped, gt, occ);
    heuristic.add(heuristic_fuse(set), gt, occ);
    oracle.add(best.flow, gt, occ);
    if (options.model) {
      const FlowField f = fuse(options.model->net, set, options.model->inputs);
      fused.add(f, gt, occ);
      const IndicatorMap classes = indicator_map(f, set.current, set.warped, options.agree_threshold,
                                                 options.match_threshold);
      red.add(f, pair, best.flow, gt, classes);
      for (int c = 0; c < 4; ++c) result.indicator_counts[c] += classes.count(static_cast<Indicator>(c));
    }
  }
  result.rows = {{"current", current.report()},
                 {"warped", warped.report()},
                 {"heuristic", heuristic.report()},
                 {"oracle", oracle.report()}};
  if (options.model) {
    result.rows.push_back({"fused", fused.report()});
    result.red = red.report();
  }
  return result;
}

std::vector<NamedReport> oracle_study(std::span<const synth::SequenceSample> sequences,
                                      const TwoFrameEstimator* est) {
  if (sequences.empty()) throw std::invalid_argument("oracle_study: no sequences");
  std::size_t frames = sequences.front().frames.size();
  for (const auto& s : sequences) frames = std::min(frames, s.frames.size());
  if (frames < 3) throw std::invalid_argument("oracle_study: sequences need at least 3 frames");
  // Oracles over the first m candidates, m = 2 .. frames - 1.
  const std::size_t max_candidates = frames - 1;
  MetricsAccumulator current, warped;
  std::vector<MetricsAccumulator> oracles(max_candidates - 1);
  for (const synth::SequenceSample& s : sequences) {
    const PairFlows flows = pair_flows(s, est);
    const int t = static_cast<int>(s.frames.size()) - 2;
    const std::vector<FlowField> cands = k_frame_candidates(flows.fwd, flows.bwd, t);
    const FlowField& gt = s.gt_fwd[t];
    const Mask& occ = s.occlusion[t];
    current.add(cands[0], gt, occ);
    warped.add(cands[1], gt, occ);
    for (std::size_t m = 2; m <= max_candidates; ++m) {
      oracles[m - 2].add(oracle_fuse(std::span(cands).first(m), gt).flow, gt, occ);
    }
  }
  std::vector<NamedReport> rows{{"current", current.report()}, {"warped", warped.report()}};
  for (std::size_t m = 2; m <= max_candidates; ++m) {
    rows.push_back({"oracle_" + std::to_string(m + 1) + "f", oracles[m - 2].report()});
  }
  return rows;
}

std::string eval_report_text(const EvalResult& result) {
  std::ostringstream out;
  out << to_key_value(result.rows);
  if (result.red) {
    out << to_key_value(*result.red, {"current", "warped"});
    const char* names[] = {"blue", "yellow", "cyan", "red"};
    for (int c = 0; c < 4; ++c) out << "indicator." << names[c] << '=' << result.indicator_counts[c] << '\n';
  }
  return out.str();
}

}  // namespace flowfuse
