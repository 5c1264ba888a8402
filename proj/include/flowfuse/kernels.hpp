#pragma once

// Data-parallel inner loops. Every kernel exists twice with identical
// signatures: `serial` is a plain reference written for readability and
// kept for testing, `omp` is the OpenMP version the library calls.
//
// The omp kernels never reduce across threads, so their output is bitwise
// independent of the thread count and schedule. Warping and Horn-Schunck
// sweeps perform the same per-pixel arithmetic in both versions and agree
// bit for bit. The box sum (separable column and row passes) and the
// convolution kernels (im2col) use a different summation order than the
// direct serial loops and agree to rounding.

#include <cstdint>
#include <span>

namespace flowfuse::kernels {

// Bilinear backward warp of an interleaved raster of `channels` planes.
// out[p] = src(p + (flow_u[p], flow_v[p])) with clamp-to-edge; valid[p]
// records whether the sample position was inside the raster.
struct WarpArgs {
  std::span<const double> src;
  int width = 0;
  int height = 0;
  int channels = 1;
  std::span<const double> flow_u;
  std::span<const double> flow_v;
  std::span<double> out;
  std::span<std::uint8_t> valid;
};

// One Jacobi sweep of linearised Horn-Schunck around (base_u, base_v):
//   u' = ubar - Ix (Ix (ubar - base_u) + Iy (vbar - base_v) + It) / (a2 + Ix^2 + Iy^2)
// with ubar, vbar the 4-neighbour means of (u, v) under replicate borders.
struct HsSweepArgs {
  int width = 0;
  int height = 0;
  double alpha_sq = 0.0;
  std::span<const double> u;
  std::span<const double> v;
  std::span<const double> base_u;
  std::span<const double> base_v;
  std::span<const double> ix;
  std::span<const double> iy;
  std::span<const double> it;
  std::span<double> u_out;
  std::span<double> v_out;
};

// Square-window sum of a single-channel raster with the window clipped at
// the borders.
struct BoxSumArgs {
  std::span<const double> src;
  int width = 0;
  int height = 0;
  int radius = 1;
  std::span<double> out;
};

// NCHW cross-correlation geometry. Output size is
// floor((in + 2 pad - kernel) / stride) + 1 in each spatial dimension.
struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_height = 1;
  int in_width = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
};

namespace serial {
void warp_bilinear(const WarpArgs& args);
void hs_sweep(const HsSweepArgs& args);
void box_sum(const BoxSumArgs& args);
// out = conv(x, w) + b (overwrites out).
void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> out);
// Accumulates into grad_x, grad_w and grad_b; any of them may be empty.
void conv2d_backward(const ConvGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_out,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b);
}  // namespace serial

namespace omp {
void warp_bilinear(const WarpArgs& args);
void hs_sweep(const HsSweepArgs& args);
void box_sum(const BoxSumArgs& args);
void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> out);
void conv2d_backward(const ConvGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_out,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b);
}  // namespace omp

}  // namespace flowfuse::kernels
