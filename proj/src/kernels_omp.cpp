#include "flowfuse/kernels.hpp"

#include <algorithm>
#include <vector>

#include "sampling.hpp"

namespace flowfuse::kernels::omp {

void warp_bilinear(const WarpArgs& a) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
      const bool inside = detail::sample_bilinear(
          a.src.data(), a.width, a.height, a.channels, x + a.flow_u[i],
          y + a.flow_v[i], a.out.data() + i * a.channels);
      a.valid[i] = inside ? 1 : 0;
    }
  }
}

void hs_sweep(const HsSweepArgs& a) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
      detail::hs_update(a.u.data(), a.v.data(), a.width, a.height, x, y,
                        a.alpha_sq, a.base_u[i], a.base_v[i], a.ix[i], a.iy[i],
                        a.it[i], &a.u_out[i], &a.v_out[i]);
    }
  }
}

void box_sum(const BoxSumArgs& a) {
  std::vector<double> columns(a.src.size());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < a.height; ++y) {
    const int y0 = std::max(0, y - a.radius);
    const int y1 = std::min(a.height - 1, y + a.radius);
    double* dst = columns.data() + static_cast<std::size_t>(y) * a.width;
    std::fill(dst, dst + a.width, 0.0);
    for (int yy = y0; yy <= y1; ++yy) {
      const double* src = a.src.data() + static_cast<std::size_t>(yy) * a.width;
      for (int x = 0; x < a.width; ++x) dst[x] += src[x];
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < a.height; ++y) {
    const double* src = columns.data() + static_cast<std::size_t>(y) * a.width;
    double* dst = a.out.data() + static_cast<std::size_t>(y) * a.width;
    for (int x = 0; x < a.width; ++x) {
      double s = 0.0;
      const int x1 = std::min(a.width - 1, x + a.radius);
      for (int xx = std::max(0, x - a.radius); xx <= x1; ++xx) s += src[xx];
      dst[x] = s;
    }
  }
}

namespace {

// Unfolds one sample into a (in_channels * k * k) x (out_h * out_w) matrix.
void im2col(const ConvGeometry& g, const double* x, std::vector<double>& cols) {
  const int ho = g.out_height();
  const int wo = g.out_width();
  const int k = g.kernel;
  const int rows = g.in_channels * k * k;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  cols.assign(static_cast<std::size_t>(rows) * plane, 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int ci = r / (k * k);
    const int ky = (r / k) % k;
    const int kx = r % k;
    const double* src = x + static_cast<std::size_t>(ci) * g.in_height * g.in_width;
    double* dst = cols.data() + static_cast<std::size_t>(r) * plane;
    for (int oy = 0; oy < ho; ++oy) {
      const int iy = oy * g.stride - g.pad + ky;
      if (iy < 0 || iy >= g.in_height) continue;
      for (int ox = 0; ox < wo; ++ox) {
        const int ix = ox * g.stride - g.pad + kx;
        if (ix < 0 || ix >= g.in_width) continue;
        dst[static_cast<std::size_t>(oy) * wo + ox] =
            src[static_cast<std::size_t>(iy) * g.in_width + ix];
      }
    }
  }
}

// Scatters column gradients back onto one input sample. Each input channel
// owns a disjoint block of rows, so channels run in parallel without races.
void col2im_add(const ConvGeometry& g, const std::vector<double>& cols, double* grad_x) {
  const int ho = g.out_height();
  const int wo = g.out_width();
  const int k = g.kernel;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* dst = grad_x + static_cast<std::size_t>(ci) * g.in_height * g.in_width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int r = (ci * k + ky) * k + kx;
        const double* src = cols.data() + static_cast<std::size_t>(r) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            dst[static_cast<std::size_t>(iy) * g.in_width + ix] +=
                src[static_cast<std::size_t>(oy) * wo + ox];
          }
        }
      }
    }
  }
}

// C[m][p] += sum_k A(m, k) * B[k][p] with A(m, k) = a[m * a_m + k * a_k].
// The plane is cut into tiles handled by one thread each; within a tile,
// blocks of eight C rows share every B load. Each C element sums over k in
// ascending order, so results do not depend on the thread count.
void gemm_acc(int m_rows, int k_rows, std::size_t plane, const double* a, std::size_t a_m,
              std::size_t a_k, const double* b, double* c) {
  constexpr std::size_t kTile = 128;
  constexpr int kBlock = 8;
  const auto tiles = static_cast<long>((plane + kTile - 1) / kTile);
#pragma omp parallel for schedule(static)
  for (long tile = 0; tile < tiles; ++tile) {
    const std::size_t p0 = static_cast<std::size_t>(tile) * kTile;
    const std::size_t len = std::min(kTile, plane - p0);
    alignas(64) double acc[kBlock][kTile];
    for (int m0 = 0; m0 < m_rows; m0 += kBlock) {
      const int nb = std::min(kBlock, m_rows - m0);
      for (int j = 0; j < kBlock; ++j) {
        for (std::size_t p = 0; p < len; ++p) {
          acc[j][p] = j < nb ? c[static_cast<std::size_t>(m0 + j) * plane + p0 + p] : 0.0;
        }
      }
      for (int k = 0; k < k_rows; ++k) {
        double wv[kBlock];
        for (int j = 0; j < kBlock; ++j) {
          wv[j] = j < nb ? a[static_cast<std::size_t>(m0 + j) * a_m + static_cast<std::size_t>(k) * a_k] : 0.0;
        }
        const double* src = b + static_cast<std::size_t>(k) * plane + p0;
#pragma omp simd
        for (std::size_t p = 0; p < len; ++p) {
          const double sv = src[p];
          acc[0][p] += wv[0] * sv;
          acc[1][p] += wv[1] * sv;
          acc[2][p] += wv[2] * sv;
          acc[3][p] += wv[3] * sv;
          acc[4][p] += wv[4] * sv;
          acc[5][p] += wv[5] * sv;
          acc[6][p] += wv[6] * sv;
          acc[7][p] += wv[7] * sv;
        }
      }
      for (int j = 0; j < nb; ++j) {
        std::copy(acc[j], acc[j] + len, c + static_cast<std::size_t>(m0 + j) * plane + p0);
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> out) {
  const int rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t plane = static_cast<std::size_t>(g.out_height()) * g.out_width();
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_height * g.in_width;
  std::vector<double> cols;
  for (int n = 0; n < g.batch; ++n) {
    im2col(g, x.data() + n * in_sample, cols);
    double* dst = out.data() + static_cast<std::size_t>(n) * g.out_channels * plane;
    for (int co = 0; co < g.out_channels; ++co) {
      std::fill(dst + co * plane, dst + (co + 1) * plane, b.empty() ? 0.0 : b[co]);
    }
    gemm_acc(g.out_channels, rows, plane, w.data(), rows, 1, cols.data(), dst);
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_out,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b) {
  const int rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t plane = static_cast<std::size_t>(g.out_height()) * g.out_width();
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_height * g.in_width;
  std::vector<double> cols;
  std::vector<double> dcols;
  for (int n = 0; n < g.batch; ++n) {
    const double* gout = grad_out.data() + static_cast<std::size_t>(n) * g.out_channels * plane;
    if (!grad_b.empty()) {
      for (int co = 0; co < g.out_channels; ++co) {
        const double* go = gout + static_cast<std::size_t>(co) * plane;
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t p = 0; p < plane; ++p) s += go[p];
        grad_b[co] += s;
      }
    }
    if (!grad_w.empty()) {
      im2col(g, x.data() + n * in_sample, cols);
      const int blocks = (rows + 3) / 4;
#pragma omp parallel for schedule(static)
      for (int blk = 0; blk < blocks; ++blk) {
        const int r0 = 4 * blk;
        const int nb = std::min(4, rows - r0);
        const double* c0 = cols.data() + static_cast<std::size_t>(r0) * plane;
        const double* c1 = nb > 1 ? c0 + plane : c0;
        const double* c2 = nb > 2 ? c0 + 2 * plane : c0;
        const double* c3 = nb > 3 ? c0 + 3 * plane : c0;
        for (int co = 0; co < g.out_channels; ++co) {
          const double* go = gout + static_cast<std::size_t>(co) * plane;
          double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
          for (std::size_t p = 0; p < plane; ++p) {
            const double gv = go[p];
            s0 += gv * c0[p];
            s1 += gv * c1[p];
            s2 += gv * c2[p];
            s3 += gv * c3[p];
          }
          double* gw = grad_w.data() + static_cast<std::size_t>(co) * rows + r0;
          const double s[4] = {s0, s1, s2, s3};
          for (int j = 0; j < nb; ++j) gw[j] += s[j];
        }
      }
    }
    if (!grad_x.empty()) {
      dcols.assign(static_cast<std::size_t>(rows) * plane, 0.0);
      gemm_acc(rows, g.out_channels, plane, w.data(), 1, rows, gout, dcols.data());
      col2im_add(g, dcols, grad_x.data() + n * in_sample);
    }
  }
}

}  // namespace flowfuse::kernels::omp
