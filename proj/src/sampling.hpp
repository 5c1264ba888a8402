#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace flowfuse::detail {

// Clamp-to-edge bilinear lookup into an interleaved raster. Writes
// `channels` values to out and returns whether (x, y) was inside.
inline bool sample_bilinear(const double* src, int width, int height,
                            int channels, double x, double y, double* out) {
  const bool inside =
      x >= 0.0 && x <= width - 1.0 && y >= 0.0 && y <= height - 1.0;
  const double cx = std::clamp(x, 0.0, width - 1.0);
  const double cy = std::clamp(y, 0.0, height - 1.0);
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = cx - x0;
  const double fy = cy - y0;
  const std::size_t row0 = static_cast<std::size_t>(y0) * width;
  const std::size_t row1 = static_cast<std::size_t>(y1) * width;
  const double* p00 = src + (row0 + x0) * channels;
  const double* p01 = src + (row0 + x1) * channels;
  const double* p10 = src + (row1 + x0) * channels;
  const double* p11 = src + (row1 + x1) * channels;
  for (int c = 0; c < channels; ++c) {
    const double top = (1.0 - fx) * p00[c] + fx * p01[c];
    const double bottom = (1.0 - fx) * p10[c] + fx * p11[c];
    out[c] = (1.0 - fy) * top + fy * bottom;
  }
  return inside;
}

// Per-pixel Horn-Schunck update shared by both kernel flavours.
inline void hs_update(const double* u, const double* v, int width, int height,
                      int x, int y, double alpha_sq, double base_u,
                      double base_v, double ix, double iy, double it,
                      double* u_out, double* v_out) {
  const int xl = x > 0 ? x - 1 : x;
  const int xr = x + 1 < width ? x + 1 : x;
  const int yu = y > 0 ? y - 1 : y;
  const int yd = y + 1 < height ? y + 1 : y;
  const std::size_t row = static_cast<std::size_t>(y) * width;
  const std::size_t up = static_cast<std::size_t>(yu) * width;
  const std::size_t down = static_cast<std::size_t>(yd) * width;
  const double ubar = 0.25 * (u[row + xl] + u[row + xr] + u[up + x] + u[down + x]);
  const double vbar = 0.25 * (v[row + xl] + v[row + xr] + v[up + x] + v[down + x]);
  const double residual = ix * (ubar - base_u) + iy * (vbar - base_v) + it;
  const double denom = alpha_sq + ix * ix + iy * iy;
  *u_out = ubar - ix * residual / denom;
  *v_out = vbar - iy * residual / denom;
}

}  // namespace flowfuse::detail
