#include "flowfuse/kernels.hpp"

#include <algorithm>

#include "sampling.hpp"

namespace flowfuse::kernels::serial {

void warp_bilinear(const WarpArgs& a) {
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
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double s = 0.0;
      for (int yy = std::max(0, y - a.radius);
           yy <= std::min(a.height - 1, y + a.radius); ++yy) {
        for (int xx = std::max(0, x - a.radius);
             xx <= std::min(a.width - 1, x + a.radius); ++xx) {
          s += a.src[static_cast<std::size_t>(yy) * a.width + xx];
        }
      }
      a.out[static_cast<std::size_t>(y) * a.width + x] = s;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> out) {
  const int ho = g.out_height();
  const int wo = g.out_width();
  const int k = g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b.empty() ? 0.0 : b[co];
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_width) continue;
                acc += w[((static_cast<std::size_t>(co) * g.in_channels + ci) * k + ky) * k + kx] *
                       x[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_height + iy) *
                             g.in_width + ix];
              }
            }
          }
          out[((static_cast<std::size_t>(n) * g.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_out,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b) {
  const int ho = g.out_height();
  const int wo = g.out_width();
  const int k = g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double go =
              grad_out[((static_cast<std::size_t>(n) * g.out_channels + co) * ho + oy) * wo + ox];
          if (!grad_b.empty()) grad_b[co] += go;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_width) continue;
                const std::size_t wi =
                    ((static_cast<std::size_t>(co) * g.in_channels + ci) * k + ky) * k + kx;
                const std::size_t xi =
                    ((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_height + iy) *
                        g.in_width + ix;
                if (!grad_w.empty()) grad_w[wi] += go * x[xi];
                if (!grad_x.empty()) grad_x[xi] += go * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace flowfuse::kernels::serial
