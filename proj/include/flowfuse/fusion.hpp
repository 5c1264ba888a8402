#pragma once

// Candidate assembly and the three fusion rules: per-pixel oracle selection,
// a brightness-error heuristic and the learned encoder-decoder.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/estimators.hpp"
#include "flowfuse/flow_core.hpp"
#include "flowfuse/synth.hpp"

namespace flowfuse {

struct FusionInputConfig {
  bool include_image = true;
  bool include_brightness_errors = true;
  bool include_magnitude = false;

  // Packed channel count for a frame with the given channel count.
  int channels(int image_channels) const;
};

struct CandidateSet {
  FlowField current;  // w_{t->t+1}
  FlowField warped;   // W(w_{t-1->t}; w_{t->t-1}), validity from the warp
  ImageBuffer err_current;
  ImageBuffer err_warped;
  ImageBuffer frame;  // I_t
  // Older flows carried into frame t, nearest first (K-frame mode).
  std::vector<FlowField> extra;

  void validate() const;
};

// Candidates from the three pairwise flows w_{t->t+1}, w_{t-1->t}, w_{t->t-1}.
CandidateSet candidates_from_flows(const ImageBuffer& I_t, const ImageBuffer& I_next,
                                   const FlowField& current, const FlowField& prev,
                                   const FlowField& back);

// Runs the estimator on (t, t+1), (t-1, t) and (t, t-1). frame_t is passed
// through as the pair index for precomputed sources.
CandidateSet build_candidates(const ImageBuffer& I_prev, const ImageBuffer& I_t,
                              const ImageBuffer& I_next, const TwoFrameEstimator& est,
                              int frame_t = 1);

// K-frame candidates for frame t of a sequence: the current flow first, then
// w_{t-k->t-k+1} carried into frame t for k = 1..t. fwd[i] and bwd[i] are the
// flows i -> i+1 and i+1 -> i.
std::vector<FlowField> k_frame_candidates(std::span<const FlowField> fwd,
                                          std::span<const FlowField> bwd, int t);

struct OracleResult {
  FlowField flow;
  std::vector<int> choice;  // index of the selected candidate per pixel
};

// Per pixel, the candidate closest to gt; ties keep the earliest candidate.
OracleResult oracle_fuse(std::span<const FlowField> candidates, const FlowField& gt);

// Per pixel, the candidate with the smaller brightness error; the current
// flow wins ties and wherever the warp left the frame.
FlowField heuristic_fuse(const CandidateSet& set);

// (1, C, H, W) stack: current u,v | warped u,v | E_w | E_hat | I_t | |current|, |warped|.
nn::TensorData pack_input(const CandidateSet& set, const FusionInputConfig& cfg);
// Batched variant; every set must share the frame size.
nn::TensorData pack_inputs(std::span<const CandidateSet> sets, const FusionInputConfig& cfg);

// Encoder: three stride-2 3x3 convs (16/32/64). Decoder: 3x3 convs with 2x
// bilinear upsampling and skip concatenation back to full resolution, then a
// zero-initialised 1x1 head on [decoder features, input] producing the flow.
// Inputs are edge-padded to a multiple of 8 and the output cropped back.
class FusionNet {
 public:
  explicit FusionNet(int in_channels, std::uint64_t seed = 1);
  // Copies own their parameters.
  FusionNet(const FusionNet& other);
  FusionNet& operator=(const FusionNet& other);
  FusionNet(FusionNet&&) = default;
  FusionNet& operator=(FusionNet&&) = default;

  int in_channels() const { return in_channels_; }
  const std::vector<nn::Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  struct Output {
    nn::Tensor flow;                    // (N, 2, H, W)
    std::vector<nn::Tensor> decayed;    // weight tensors bound on the tape
  };
  Output forward(nn::Tape& tape, const nn::TensorData& input) const;

  std::vector<nn::NamedTensor> export_tensors() const;
  void import_tensors(std::span<const nn::NamedTensor> tensors);

  static constexpr int kMultiple = 8;

 private:
  const nn::TensorDataPtr& param(std::size_t i) const { return params_[i].data; }

  int in_channels_;
  std::vector<nn::Parameter> params_;
};

// Raises ConfigError naming both counts when the packed input does not match.
FlowField fuse(const FusionNet& net, const CandidateSet& set, const FusionInputConfig& cfg);

struct FusionModel {
  FusionNet net;
  FusionInputConfig inputs;
  nn::TrainConfig train;
  std::map<std::string, std::string> meta;
};

void save_fusion(const std::filesystem::path& path, const FusionNet& net,
                 const FusionInputConfig& inputs, const nn::TrainConfig& train,
                 std::map<std::string, std::string> meta = {});
FusionModel load_fusion(const std::filesystem::path& path);

// Writes current/warped/extra flows (.flo), error maps and the frame (PNG).
void dump_candidates(const std::filesystem::path& dir, const CandidateSet& set);

// ---- Training ---------------------------------------------------------------

// One training example: candidate inputs with their ground truth.
struct FusionExample {
  CandidateSet candidates;
  FlowField gt;
};

struct TrainResult {
  FusionNet net;
  std::vector<double> loss_curve;
};

// Called after every step with (step, loss); returning false stops early.
using TrainCallback = std::function<bool(int step, double loss)>;

// Adam on the single-output robust loss. Each step draws batch_size examples
// from a seeded shuffle and a random crop_size window from each; crops are
// clamped to the frame when it is smaller. Throws on an empty dataset or a
// non-finite loss.
TrainResult train_fusion(std::span<const FusionExample> examples, const nn::TrainConfig& cfg,
                         const FusionInputConfig& icfg, const TrainCallback& callback = {});

// Examples for the last triple (t = frames - 2) of each sequence, with
// candidates from est, or from the analytic flows when est is null.
std::vector<FusionExample> make_examples(std::span<const synth::SequenceSample> sequences,
                                         const TwoFrameEstimator* est);

TrainResult train_fusion(std::span<const synth::SequenceSample> sequences,
                         const TwoFrameEstimator* est, const nn::TrainConfig& cfg,
                         const FusionInputConfig& icfg, const TrainCallback& callback = {});

}  // namespace flowfuse
