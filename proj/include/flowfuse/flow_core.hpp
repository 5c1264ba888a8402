#pragma once

// Dense flow fields, rasters and the warping primitives built on them.
//
// Conventions: pixel (x, y) has x growing rightward and y growing downward.
// A flow vector (u, v) at p points to p + (u, v) in the target frame.
// Backward warping pulls each output pixel from the source at p + flow(p).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace flowfuse {

// Per-pixel boolean raster, row-major, one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool fill = false);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool operator()(int x, int y) const { return data[index(x, y)] != 0; }
  void set(int x, int y, bool on) { data[index(x, y)] = on ? 1 : 0; }
  std::size_t count() const;
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }

  bool operator==(const Mask&) const = default;
};

Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
Mask mask_not(const Mask& a);

// H x W x C raster of doubles stored interleaved (HWC).
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0);

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return data.empty(); }
  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const ImageBuffer&) const = default;
};

// Two-channel displacement field with an optional validity mask.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u;
  std::vector<double> v;
  Mask valid;  // empty when every pixel is valid

  FlowField() = default;
  FlowField(int w, int h, double fill_u = 0.0, double fill_v = 0.0);

  std::size_t pixels() const { return u.size(); }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  bool has_valid() const { return !valid.empty(); }
  bool is_valid(std::size_t i) const { return valid.empty() || valid.data[i] != 0; }
  // Validity as an explicit mask (all true when absent).
  Mask validity() const;

  bool operator==(const FlowField&) const = default;
};

struct Sample {
  std::vector<double> pixel;
  bool in_bounds = true;
};

template <typename A, typename B>
bool same_grid(const A& a, const B& b) {
  return a.width == b.width && a.height == b.height;
}

// Bilinear lookup with clamp-to-edge; in_bounds is false when (x, y) falls
// outside [0, W-1] x [0, H-1].
Sample bilinear_sample(const ImageBuffer& img, double x, double y);

struct WarpedImage {
  ImageBuffer image;
  Mask valid;
};

WarpedImage warp_image(const ImageBuffer& img, const FlowField& flow);

// Resamples both channels of flow_prev at p + flow_back(p). The result's
// validity is the in-bounds mask intersected with flow_prev's validity.
FlowField warp_flow(const FlowField& flow_prev, const FlowField& flow_back);

// Transports the oldest forward flow into the newest frame: starting from
// flows_fwd.front(), warp by flows_bwd[0], flows_bwd[1], ... in order.
// flows_bwd[i] maps frame (i + 1) of the chain back to frame i, and
// flows_fwd[i] is the forward flow leaving frame i, so both lists have the
// same length. Validity is intersected at every step.
FlowField compose_warp_chain(std::span<const FlowField> flows_fwd,
                             std::span<const FlowField> flows_bwd);

// |I_t - W(I_next; flow)|, averaged over channels.
ImageBuffer brightness_error(const ImageBuffer& I_t, const ImageBuffer& I_next,
                             const FlowField& flow);

ImageBuffer flow_magnitude(const FlowField& flow);

// True where p + gt(p) lands outside [0, W-1] x [0, H-1].
Mask out_of_boundary_mask(const FlowField& gt);

// Luma 0.299 / 0.587 / 0.114; single-channel input is returned unchanged.
ImageBuffer to_gray(const ImageBuffer& img);

// Uniform channel of a flow as a 1-channel image and back.
ImageBuffer flow_channel(const FlowField& flow, int channel);

}  // namespace flowfuse
