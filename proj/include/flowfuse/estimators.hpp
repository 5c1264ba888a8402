#pragma once

// Two-frame flow sources. Every estimator maps (I_a, I_b) to the flow from
// I_a to I_b on I_a's grid; the fusion pipeline only sees this interface.

#include <filesystem>
#include <memory>
#include <string>

#include "flowfuse/flow_core.hpp"

namespace flowfuse {

class TwoFrameEstimator {
 public:
  virtual ~TwoFrameEstimator() = default;

  // Flow from frame a to frame b. The frame indices identify the pair for
  // sources that look flows up rather than compute them; pure estimators
  // ignore them.
  virtual FlowField estimate(const ImageBuffer& I_a, const ImageBuffer& I_b, int frame_a = -1,
                             int frame_b = -1) const = 0;
  virtual std::string name() const = 0;
};

// Horn-Schunck weight on [0, 1] intensities. 15 / 255 is the classic
// alpha = 15 on 8-bit intensities.
inline constexpr double kDefaultHsAlpha = 15.0 / 255.0;

struct HsParams {
  double alpha = kDefaultHsAlpha;
  int iterations = 200;
  int pyramid_levels = 4;
  int warps_per_level = 1;

  void validate() const;
};

struct LkParams {
  int window_radius = 4;
  int pyramid_levels = 4;
  int iterations_per_level = 5;
  // On the smaller eigenvalue of the window-averaged structure tensor.
  double min_eigen_threshold = 1e-6;

  void validate() const;
};

FlowField horn_schunck(const ImageBuffer& I_a, const ImageBuffer& I_b, const HsParams& params = {});

// Pixels whose structure tensor is too weak keep the coarser estimate and
// are marked invalid in the result.
FlowField lucas_kanade(const ImageBuffer& I_a, const ImageBuffer& I_b, const LkParams& params = {});

class HornSchunckEstimator final : public TwoFrameEstimator {
 public:
  explicit HornSchunckEstimator(HsParams params = {});
  FlowField estimate(const ImageBuffer& I_a, const ImageBuffer& I_b, int frame_a = -1,
                     int frame_b = -1) const override;
  std::string name() const override { return "hs"; }
  const HsParams& params() const { return params_; }

 private:
  HsParams params_;
};

class LucasKanadeEstimator final : public TwoFrameEstimator {
 public:
  explicit LucasKanadeEstimator(LkParams params = {});
  FlowField estimate(const ImageBuffer& I_a, const ImageBuffer& I_b, int frame_a = -1,
                     int frame_b = -1) const override;
  std::string name() const override { return "lk"; }
  const LkParams& params() const { return params_; }

 private:
  LkParams params_;
};

// Loads stored flows instead of computing them. The pattern is a printf
// format with two integer conversions (source frame, target frame),
// resolved relative to the directory; the default matches
// flow_000001_000002.flo. A .png extension selects the KITTI codec.
class PrecomputedSource final : public TwoFrameEstimator {
 public:
  static constexpr const char* kDefaultPattern = "flow_%06d_%06d.flo";

  explicit PrecomputedSource(std::filesystem::path dir, std::string pattern = kDefaultPattern);
  FlowField estimate(const ImageBuffer& I_a, const ImageBuffer& I_b, int frame_a = -1,
                     int frame_b = -1) const override;
  std::string name() const override { return "precomputed"; }

  std::filesystem::path path_for(int frame_a, int frame_b) const;

 private:
  std::filesystem::path dir_;
  std::string pattern_;
};

std::unique_ptr<TwoFrameEstimator> precomputed_source(const std::filesystem::path& dir,
                                                      const std::string& pattern =
                                                          PrecomputedSource::kDefaultPattern);

// Image pyramid helpers shared by the estimators.
ImageBuffer downsample2x(const ImageBuffer& img);
// Bilinear resize of a flow to (w, h), rescaling displacements by the size
// ratio per axis.
FlowField resize_flow(const FlowField& flow, int w, int h);

}  // namespace flowfuse
