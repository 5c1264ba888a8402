#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/kernels.hpp"

namespace flowfuse::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Source taps for align-corners-false 2x upsampling along one axis.
struct Tap {
  int i0, i1;
  double frac;
};

std::vector<Tap> upsample_taps(int in) {
  std::vector<Tap> taps(2 * in);
  for (int o = 0; o < 2 * in; ++o) {
    const double s = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, in - 1.0);
    const int i0 = static_cast<int>(std::floor(s));
    taps[o] = {i0, std::min(i0 + 1, in - 1), s - i0};
  }
  return taps;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const bool has_bias = b.tape() != nullptr;
  require(ws.c == xs.c, "conv2d: input has " + std::to_string(xs.c) +
                            " channels but kernel expects " + std::to_string(ws.c));
  require(ws.h == ws.w, "conv2d: kernel must be square, got " + ws.str());
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  require(padding >= 0, "conv2d: negative padding");
  require(!has_bias || b.shape().size() == static_cast<std::size_t>(ws.n),
          "conv2d: bias of shape " + (has_bias ? b.shape().str() : std::string()) +
              " does not match " + std::to_string(ws.n) + " output channels");
  kernels::ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, stride, padding};
  require(g.out_height() >= 1 && g.out_width() >= 1, "conv2d: input " + xs.str() +
                                                          " too small for kernel " + ws.str());
  const Shape os{xs.n, ws.n, g.out_height(), g.out_width()};
  std::vector<double> out(os.size());
  kernels::omp::conv2d_forward(g, x.value(), w.value(),
                               has_bias ? b.value() : std::span<const double>{}, out);

  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  const std::size_t xi = x.id(), wi = w.id(), bi = has_bias ? b.id() : 0;
  return x.tape()->record(os, std::move(out), inputs, [=](Tape& t, std::size_t self) {
    auto& xd = t.data(xi);
    auto& wd = t.data(wi);
    std::span<double> gx = t.requires_grad(xi) ? std::span<double>(xd.grad) : std::span<double>{};
    std::span<double> gw = t.requires_grad(wi) ? std::span<double>(wd.grad) : std::span<double>{};
    std::span<double> gb = has_bias && t.requires_grad(bi) ? std::span<double>(t.data(bi).grad)
                                                           : std::span<double>{};
    kernels::omp::conv2d_backward(g, xd.value, wd.value, t.data(self).grad, gx, gw, gb);
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  const auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  const std::size_t xi = x.id();
  const Tensor in[] = {x};
  return x.tape()->record(x.shape(), std::move(out), in, [=](Tape& t, std::size_t self) {
    auto& xd = t.data(xi);
    const auto& g = t.data(self).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      xd.grad[i] += xd.value[i] > 0.0 ? g[i] : slope * g[i];
    }
  });
}

Tensor bilinear_upsample2x(const Tensor& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, 2 * s.h, 2 * s.w};
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
  const auto xv = x.value();
  std::vector<double> out(os.size());
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv.data() + nc * s.plane();
    double* dst = out.data() + nc * os.plane();
    for (int oy = 0; oy < os.h; ++oy) {
      const Tap& a = ty[oy];
      for (int ox = 0; ox < os.w; ++ox) {
        const Tap& b = tx[ox];
        const double top = (1.0 - b.frac) * src[a.i0 * s.w + b.i0] + b.frac * src[a.i0 * s.w + b.i1];
        const double bot = (1.0 - b.frac) * src[a.i1 * s.w + b.i0] + b.frac * src[a.i1 * s.w + b.i1];
        dst[oy * os.w + ox] = (1.0 - a.frac) * top + a.frac * bot;
      }
    }
  }
  const std::size_t xi = x.id();
  const Tensor in[] = {x};
  return x.tape()->record(os, std::move(out), in, [=](Tape& t, std::size_t self) {
    auto& xd = t.data(xi);
    const auto& g = t.data(self).grad;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = xd.grad.data() + nc * s.plane();
      const double* go = g.data() + nc * os.plane();
      for (int oy = 0; oy < os.h; ++oy) {
        const Tap& a = ty[oy];
        for (int ox = 0; ox < os.w; ++ox) {
          const Tap& b = tx[ox];
          const double v = go[oy * os.w + ox];
          dst[a.i0 * s.w + b.i0] += (1.0 - a.frac) * (1.0 - b.frac) * v;
          dst[a.i0 * s.w + b.i1] += (1.0 - a.frac) * b.frac * v;
          dst[a.i1 * s.w + b.i0] += a.frac * (1.0 - b.frac) * v;
          dst[a.i1 * s.w + b.i1] += a.frac * b.frac * v;
        }
      }
    }
  });
}

Tensor concat_channels(std::span<const Tensor> xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const Shape first = xs.front().shape();
  int channels = 0;
  for (const Tensor& t : xs) {
    const Shape s = t.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: spatial/batch mismatch " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  std::vector<double> out(os.size());
  const std::size_t plane = first.plane();
  std::vector<std::size_t> ids;
  std::vector<int> offsets;
  int offset = 0;
  for (const Tensor& t : xs) {
    const int c = t.shape().c;
    const auto v = t.value();
    for (int n = 0; n < first.n; ++n) {
      std::copy_n(v.data() + static_cast<std::size_t>(n) * c * plane, c * plane,
                  out.data() + (static_cast<std::size_t>(n) * channels + offset) * plane);
    }
    ids.push_back(t.id());
    offsets.push_back(offset);
    offset += c;
  }
  return xs.front().tape()->record(os, std::move(out), xs, [=](Tape& t, std::size_t self) {
    const auto& g = t.data(self).grad;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      auto& d = t.data(ids[k]);
      const int c = d.shape.c;
      for (int n = 0; n < os.n; ++n) {
        const double* src = g.data() + (static_cast<std::size_t>(n) * channels + offsets[k]) * plane;
        double* dst = d.grad.data() + static_cast<std::size_t>(n) * c * plane;
        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor avgpool2x(const Tensor& x) {
  const Shape s = x.shape();
  require(s.h >= 2 && s.w >= 2, "avgpool2x: input " + s.str() + " too small");
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  const auto xv = x.value();
  std::vector<double> out(os.size());
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv.data() + nc * s.plane();
    double* dst = out.data() + nc * os.plane();
    for (int oy = 0; oy < os.h; ++oy) {
      for (int ox = 0; ox < os.w; ++ox) {
        const int y = 2 * oy, xx = 2 * ox;
        dst[oy * os.w + ox] = 0.25 * (src[y * s.w + xx] + src[y * s.w + xx + 1] +
                                      src[(y + 1) * s.w + xx] + src[(y + 1) * s.w + xx + 1]);
      }
    }
  }
  const std::size_t xi = x.id();
  const Tensor in[] = {x};
  return x.tape()->record(os, std::move(out), in, [=](Tape& t, std::size_t self) {
    auto& xd = t.data(xi);
    const auto& g = t.data(self).grad;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = xd.grad.data() + nc * s.plane();
      const double* go = g.data() + nc * os.plane();
      for (int oy = 0; oy < os.h; ++oy) {
        for (int ox = 0; ox < os.w; ++ox) {
          const double v = 0.25 * go[oy * os.w + ox];
          const int y = 2 * oy, xx = 2 * ox;
          dst[y * s.w + xx] += v;
          dst[y * s.w + xx + 1] += v;
          dst[(y + 1) * s.w + xx] += v;
          dst[(y + 1) * s.w + xx + 1] += v;
        }
      }
    }
  });
}

Tensor crop(const Tensor& x, int h, int w) {
  const Shape s = x.shape();
  require(h >= 1 && w >= 1 && h <= s.h && w <= s.w,
          "crop: window " + std::to_string(h) + "x" + std::to_string(w) + " outside " + s.str());
  const Shape os{s.n, s.c, h, w};
  const auto xv = x.value();
  std::vector<double> out(os.size());
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(xv.data() + nc * s.plane() + static_cast<std::size_t>(y) * s.w, w,
                  out.data() + nc * os.plane() + static_cast<std::size_t>(y) * w);
    }
  }
  const std::size_t xi = x.id();
  const Tensor in[] = {x};
  return x.tape()->record(os, std::move(out), in, [=](Tape& t, std::size_t self) {
    auto& xd = t.data(xi);
    const auto& g = t.data(self).grad;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      for (int y = 0; y < h; ++y) {
        double* dst = xd.grad.data() + nc * s.plane() + static_cast<std::size_t>(y) * s.w;
        const double* src = g.data() + nc * os.plane() + static_cast<std::size_t>(y) * w;
        for (int xx = 0; xx < w; ++xx) dst[xx] += src[xx];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const auto av = a.value(), bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const Tensor in[] = {a, b};
  return a.tape()->record(a.shape(), std::move(out), in, [=](Tape& t, std::size_t self) {
    const auto& g = t.data(self).grad;
    auto& ag = t.data(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
    auto& bg = t.data(bi).grad;
    for (std::size_t i = 0; i < g.size(); ++i) bg[i] += g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const auto av = a.value(), bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const Tensor in[] = {a, b};
  return a.tape()->record(a.shape(), std::move(out), in, [=](Tape& t, std::size_t self) {
    const auto& g = t.data(self).grad;
    auto& ad = t.data(ai);
    auto& bd = t.data(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ad.grad[i] += g[i] * bd.value[i];
      bd.grad[i] += g[i] * ad.value[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.value();
  double s = 0.0;
  for (double v : xv) s += v;
  const std::size_t xi = x.id();
  const Tensor in[] = {x};
  return x.tape()->record(Shape{}, {s}, in, [=](Tape& t, std::size_t self) {
    const double g = t.data(self).grad[0];
    for (double& v : t.data(xi).grad) v += g;
  });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  const auto xv = x.value();
  require(weights.size() == xv.size(), "weighted_sum: weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += weights[i] * xv[i];
  const std::size_t xi = x.id();
  std::vector<double> wcopy(weights.begin(), weights.end());
  const Tensor in[] = {x};
  return x.tape()->record(Shape{}, {s}, in, [=](Tape& t, std::size_t self) {
    const double g = t.data(self).grad[0];
    auto& xg = t.data(xi).grad;
    for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g * wcopy[i];
  });
}

}  // namespace flowfuse::nn
