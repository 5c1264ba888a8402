#include "flowfuse/flow_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowfuse/errors.hpp"
#include "flowfuse/kernels.hpp"
#include "sampling.hpp"

namespace flowfuse {

namespace {

std::string dims(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

template <typename A, typename B>
void require_same_grid(const A& a, const B& b, const char* what) {
  if (!same_grid(a, b)) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" +
                         dims(a.width, a.height) + " vs " + dims(b.width, b.height) + ")");
  }
}

}  // namespace

Mask::Mask(int w, int h, bool fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Mask mask_and(const Mask& a, const Mask& b) {
  require_same_grid(a, b, "mask_and");
  Mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] & b.data[i];
  return out;
}

Mask mask_or(const Mask& a, const Mask& b) {
  require_same_grid(a, b, "mask_or");
  Mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] | b.data[i];
  return out;
}

Mask mask_not(const Mask& a) {
  Mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] ? 0 : 1;
  return out;
}

ImageBuffer::ImageBuffer(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

FlowField::FlowField(int w, int h, double fill_u, double fill_v)
    : width(w), height(h),
      u(static_cast<std::size_t>(w) * h, fill_u),
      v(static_cast<std::size_t>(w) * h, fill_v) {}

Mask FlowField::validity() const {
  if (has_valid()) return valid;
  return Mask(width, height, true);
}

Sample bilinear_sample(const ImageBuffer& img, double x, double y) {
  Sample s;
  s.pixel.resize(img.channels);
  s.in_bounds = detail::sample_bilinear(img.data.data(), img.width, img.height,
                                        img.channels, x, y, s.pixel.data());
  return s;
}

WarpedImage warp_image(const ImageBuffer& img, const FlowField& flow) {
  require_same_grid(img, flow, "warp_image");
  WarpedImage out{ImageBuffer(img.width, img.height, img.channels),
                  Mask(img.width, img.height)};
  kernels::omp::warp_bilinear({img.data, img.width, img.height, img.channels,
                               flow.u, flow.v, out.image.data, out.valid.data});
  return out;
}

FlowField warp_flow(const FlowField& flow_prev, const FlowField& flow_back) {
  require_same_grid(flow_prev, flow_back, "warp_flow");
  const std::size_t n = flow_prev.pixels();
  std::vector<double> packed(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    packed[2 * i] = flow_prev.u[i];
    packed[2 * i + 1] = flow_prev.v[i];
  }
  std::vector<double> sampled(2 * n);
  FlowField out(flow_prev.width, flow_prev.height);
  out.valid = Mask(flow_prev.width, flow_prev.height);
  kernels::omp::warp_bilinear({packed, flow_prev.width, flow_prev.height, 2,
                               flow_back.u, flow_back.v, sampled, out.valid.data});
  for (std::size_t i = 0; i < n; ++i) {
    out.u[i] = sampled[2 * i];
    out.v[i] = sampled[2 * i + 1];
  }
  if (flow_prev.has_valid()) {
    // A warped sample is trusted only if every contributing source pixel was.
    Mask src_ok(flow_prev.width, flow_prev.height);
    for (int y = 0; y < flow_prev.height; ++y) {
      for (int x = 0; x < flow_prev.width; ++x) {
        const std::size_t i = out.index(x, y);
        const double sx = std::clamp(x + flow_back.u[i], 0.0, flow_prev.width - 1.0);
        const double sy = std::clamp(y + flow_back.v[i], 0.0, flow_prev.height - 1.0);
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, flow_prev.width - 1);
        const int y1 = std::min(y0 + 1, flow_prev.height - 1);
        const bool fx = sx > x0;
        const bool fy = sy > y0;
        bool ok = flow_prev.valid(x0, y0);
        if (fx) ok = ok && flow_prev.valid(x1, y0);
        if (fy) ok = ok && flow_prev.valid(x0, y1);
        if (fx && fy) ok = ok && flow_prev.valid(x1, y1);
        src_ok.data[i] = ok ? 1 : 0;
      }
    }
    out.valid = mask_and(out.valid, src_ok);
  }
  return out;
}

FlowField compose_warp_chain(std::span<const FlowField> flows_fwd,
                             std::span<const FlowField> flows_bwd) {
  if (flows_fwd.empty() || flows_bwd.empty()) {
    throw std::invalid_argument("compose_warp_chain: empty chain");
  }
  if (flows_fwd.size() != flows_bwd.size()) {
    throw std::invalid_argument("compose_warp_chain: " + std::to_string(flows_fwd.size()) +
                                " forward flows but " + std::to_string(flows_bwd.size()) +
                                " backward flows");
  }
  for (const auto& f : flows_fwd) require_same_grid(f, flows_fwd.front(), "compose_warp_chain");
  for (const auto& f : flows_bwd) require_same_grid(f, flows_fwd.front(), "compose_warp_chain");

  FlowField acc = warp_flow(flows_fwd.front(), flows_bwd.front());
  for (std::size_t i = 1; i < flows_bwd.size(); ++i) {
    acc = warp_flow(acc, flows_bwd[i]);
  }
  return acc;
}

ImageBuffer brightness_error(const ImageBuffer& I_t, const ImageBuffer& I_next,
                             const FlowField& flow) {
  require_same_grid(I_t, I_next, "brightness_error");
  require_same_grid(I_t, flow, "brightness_error");
  if (I_t.channels != I_next.channels) {
    throw DimensionError("brightness_error: channel mismatch (" +
                         std::to_string(I_t.channels) + " vs " +
                         std::to_string(I_next.channels) + ")");
  }
  const WarpedImage warped = warp_image(I_next, flow);
  ImageBuffer err(I_t.width, I_t.height, 1);
  const int c = I_t.channels;
  for (std::size_t i = 0; i < I_t.pixels(); ++i) {
    double s = 0.0;
    for (int k = 0; k < c; ++k) {
      s += std::abs(I_t.data[i * c + k] - warped.image.data[i * c + k]);
    }
    err.data[i] = s / c;
  }
  return err;
}

ImageBuffer flow_magnitude(const FlowField& flow) {
  ImageBuffer mag(flow.width, flow.height, 1);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    mag.data[i] = std::hypot(flow.u[i], flow.v[i]);
  }
  return mag;
}

Mask out_of_boundary_mask(const FlowField& gt) {
  Mask out(gt.width, gt.height);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const std::size_t i = gt.index(x, y);
      const double tx = x + gt.u[i];
      const double ty = y + gt.v[i];
      const bool outside = tx < 0.0 || tx > gt.width - 1.0 || ty < 0.0 || ty > gt.height - 1.0;
      out.data[i] = outside ? 1 : 0;
    }
  }
  return out;
}

ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) {
    throw DimensionError("to_gray: expected 1 or 3 channels, got " + std::to_string(img.channels));
  }
  ImageBuffer gray(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    gray.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] +
                   0.114 * img.data[3 * i + 2];
  }
  return gray;
}

ImageBuffer flow_channel(const FlowField& flow, int channel) {
  ImageBuffer out(flow.width, flow.height, 1);
  out.data = channel == 0 ? flow.u : flow.v;
  return out;
}

}  // namespace flowfuse
