#include "flowfuse/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "flowfuse/errors.hpp"
#include "flowfuse/flow_io.hpp"
#include "flowfuse/kernels.hpp"
#include "sampling.hpp"

namespace flowfuse {

namespace {

constexpr int kMinPyramidSize = 8;

void require_pair(const ImageBuffer& a, const ImageBuffer& b, const char* who) {
  if (!same_grid(a, b) || a.channels != b.channels) {
    throw DimensionError(std::string(who) + ": frames differ in size or channels (" +
                         std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                         std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + "x" + std::to_string(b.channels) + ")");
  }
  if (a.empty()) throw DimensionError(std::string(who) + ": empty frames");
}

// Gray pyramids, finest level first.
std::vector<ImageBuffer> build_pyramid(const ImageBuffer& gray, int levels) {
  std::vector<ImageBuffer> pyr{gray};
  while (static_cast<int>(pyr.size()) < levels && pyr.back().width >= 2 * kMinPyramidSize &&
         pyr.back().height >= 2 * kMinPyramidSize) {
    pyr.push_back(downsample2x(pyr.back()));
  }
  return pyr;
}

// Central differences with replicate borders on the mean of both frames.
struct Derivatives {
  std::vector<double> ix, iy, it;
};

Derivatives derivatives(const ImageBuffer& a, const ImageBuffer& b_warped) {
  const int w = a.width;
  const int h = a.height;
  Derivatives d;
  d.ix.resize(a.pixels());
  d.iy.resize(a.pixels());
  d.it.resize(a.pixels());
  auto mean = [&](int x, int y) { return 0.5 * (a.at(x, y) + b_warped.at(x, y)); };
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(0, y - 1);
    const int yd = std::min(h - 1, y + 1);
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(0, x - 1);
      const int xr = std::min(w - 1, x + 1);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      d.ix[i] = 0.5 * (mean(xr, y) - mean(xl, y));
      d.iy[i] = 0.5 * (mean(x, yd) - mean(x, yu));
      d.it[i] = b_warped.at(x, y) - a.at(x, y);
    }
  }
  return d;
}

void require_finite(const FlowField& f, const char* who) {
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    if (!std::isfinite(f.u[i]) || !std::isfinite(f.v[i])) {
      throw std::runtime_error(std::string(who) + ": non-finite flow at pixel " +
                               std::to_string(i));
    }
  }
}

}  // namespace

void HsParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("hs: alpha must be > 0");
  if (iterations < 1) throw ConfigError("hs: iterations must be >= 1");
  if (pyramid_levels < 1) throw ConfigError("hs: pyramid_levels must be >= 1");
  if (warps_per_level < 1) throw ConfigError("hs: warps_per_level must be >= 1");
}

void LkParams::validate() const {
  if (window_radius < 1) throw ConfigError("lk: window_radius must be >= 1");
  if (pyramid_levels < 1) throw ConfigError("lk: pyramid_levels must be >= 1");
  if (iterations_per_level < 1) throw ConfigError("lk: iterations_per_level must be >= 1");
  if (!(min_eigen_threshold >= 0.0)) throw ConfigError("lk: min_eigen_threshold must be >= 0");
}

ImageBuffer downsample2x(const ImageBuffer& img) {
  // Binomial 1-3-3-1 filter centred between the two fine pixels of each
  // coarse pixel, replicate borders.
  static constexpr double kTaps[4] = {1.0 / 8, 3.0 / 8, 3.0 / 8, 1.0 / 8};
  const int w = (img.width + 1) / 2;
  const int h = (img.height + 1) / 2;
  const int ch = img.channels;
  ImageBuffer rows(w, img.height, ch);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int k = -1; k <= 2; ++k) {
          s += kTaps[k + 1] * img.at(std::clamp(2 * x + k, 0, img.width - 1), y, c);
        }
        rows.at(x, y, c) = s;
      }
    }
  }
  ImageBuffer out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int k = -1; k <= 2; ++k) {
          s += kTaps[k + 1] * rows.at(x, std::clamp(2 * y + k, 0, img.height - 1), c);
        }
        out.at(x, y, c) = s;
      }
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& flow, int w, int h) {
  const double sx = static_cast<double>(w) / flow.width;
  const double sy = static_cast<double>(h) / flow.height;
  ImageBuffer packed(flow.width, flow.height, 2);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    packed.data[2 * i] = flow.u[i];
    packed.data[2 * i + 1] = flow.v[i];
  }
  FlowField out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Pixel centres line up: (x + 0.5) / s - 0.5.
      const Sample s = bilinear_sample(packed, (x + 0.5) / sx - 0.5, (y + 0.5) / sy - 0.5);
      const std::size_t i = out.index(x, y);
      out.u[i] = s.pixel[0] * sx;
      out.v[i] = s.pixel[1] * sy;
    }
  }
  return out;
}

FlowField horn_schunck(const ImageBuffer& I_a, const ImageBuffer& I_b, const HsParams& params) {
  require_pair(I_a, I_b, "horn_schunck");
  params.validate();
  const auto pyr_a = build_pyramid(to_gray(I_a), params.pyramid_levels);
  const auto pyr_b = build_pyramid(to_gray(I_b), params.pyramid_levels);
  const double alpha_sq = params.alpha * params.alpha;

  FlowField flow;
  for (int level = static_cast<int>(pyr_a.size()) - 1; level >= 0; --level) {
    const ImageBuffer& a = pyr_a[level];
    const ImageBuffer& b = pyr_b[level];
    flow = flow.pixels() == 0 ? FlowField(a.width, a.height) : resize_flow(flow, a.width, a.height);
    std::vector<double> next_u(a.pixels());
    std::vector<double> next_v(a.pixels());
    for (int warp = 0; warp < params.warps_per_level; ++warp) {
      const Derivatives d = derivatives(a, warp_image(b, flow).image);
      const std::vector<double> base_u = flow.u;
      const std::vector<double> base_v = flow.v;
      for (int it = 0; it < params.iterations; ++it) {
        kernels::omp::hs_sweep({a.width, a.height, alpha_sq, flow.u, flow.v, base_u, base_v,
                                d.ix, d.iy, d.it, next_u, next_v});
        flow.u.swap(next_u);
        flow.v.swap(next_v);
      }
    }
  }
  require_finite(flow, "horn_schunck");
  return flow;
}

FlowField lucas_kanade(const ImageBuffer& I_a, const ImageBuffer& I_b, const LkParams& params) {
  require_pair(I_a, I_b, "lucas_kanade");
  params.validate();
  const auto pyr_a = build_pyramid(to_gray(I_a), params.pyramid_levels);
  const auto pyr_b = build_pyramid(to_gray(I_b), params.pyramid_levels);
  const int r = params.window_radius;

  FlowField flow;
  Mask weak;
  for (int level = static_cast<int>(pyr_a.size()) - 1; level >= 0; --level) {
    const ImageBuffer& a = pyr_a[level];
    const ImageBuffer& b = pyr_b[level];
    const int w = a.width;
    const int h = a.height;
    const std::size_t n = a.pixels();
    flow = flow.pixels() == 0 ? FlowField(w, h) : resize_flow(flow, w, h);
    weak = Mask(w, h);

    // Spatial gradients of the template frame, fixed across iterations.
    const Derivatives d = derivatives(a, a);
    std::vector<double> ones(n, 1.0), counts(n), prod(n), sxx(n), sxy(n), syy(n);
    kernels::omp::box_sum({ones, w, h, r, counts});
    auto windowed = [&](auto&& f, std::vector<double>& out) {
      for (std::size_t i = 0; i < n; ++i) prod[i] = f(i);
      kernels::omp::box_sum({prod, w, h, r, out});
    };
    windowed([&](std::size_t i) { return d.ix[i] * d.ix[i]; }, sxx);
    windowed([&](std::size_t i) { return d.ix[i] * d.iy[i]; }, sxy);
    windowed([&](std::size_t i) { return d.iy[i] * d.iy[i]; }, syy);

    std::vector<double> next_u(n), next_v(n);
    for (int it = 0; it < params.iterations_per_level; ++it) {
#pragma omp parallel for schedule(static)
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          next_u[i] = flow.u[i];
          next_v[i] = flow.v[i];
          const double inv = 1.0 / counts[i];
          const double gxx = sxx[i] * inv, gxy = sxy[i] * inv, gyy = syy[i] * inv;
          const double half_tr = 0.5 * (gxx + gyy);
          const double half_diff = 0.5 * (gxx - gyy);
          const double min_eig = half_tr - std::sqrt(half_diff * half_diff + gxy * gxy);
          const double det = gxx * gyy - gxy * gxy;
          if (!(min_eig > params.min_eigen_threshold) || !(det > 0.0)) {
            weak.data[i] = 1;
            continue;
          }
          weak.data[i] = 0;
          // Mismatch over the window, every window pixel displaced by this
          // pixel's flow.
          double bx = 0.0, by = 0.0;
          for (int qy = std::max(0, y - r); qy <= std::min(h - 1, y + r); ++qy) {
            for (int qx = std::max(0, x - r); qx <= std::min(w - 1, x + r); ++qx) {
              const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
              double sampled;
              detail::sample_bilinear(b.data.data(), w, h, 1, qx + flow.u[i], qy + flow.v[i], &sampled);
              const double diff = sampled - a.data[q];
              bx += d.ix[q] * diff;
              by += d.iy[q] * diff;
            }
          }
          bx *= inv;
          by *= inv;
          next_u[i] -= (gyy * bx - gxy * by) / det;
          next_v[i] -= (-gxy * bx + gxx * by) / det;
        }
      }
      flow.u.swap(next_u);
      flow.v.swap(next_v);
    }
  }
  flow.valid = mask_not(weak);
  require_finite(flow, "lucas_kanade");
  return flow;
}

HornSchunckEstimator::HornSchunckEstimator(HsParams params) : params_(params) {
  params_.validate();
}

FlowField HornSchunckEstimator::estimate(const ImageBuffer& I_a, const ImageBuffer& I_b, int,
                                         int) const {
  return horn_schunck(I_a, I_b, params_);
}

LucasKanadeEstimator::LucasKanadeEstimator(LkParams params) : params_(params) {
  params_.validate();
}

FlowField LucasKanadeEstimator::estimate(const ImageBuffer& I_a, const ImageBuffer& I_b, int,
                                         int) const {
  return lucas_kanade(I_a, I_b, params_);
}

PrecomputedSource::PrecomputedSource(std::filesystem::path dir, std::string pattern)
    : dir_(std::move(dir)), pattern_(std::move(pattern)) {}

std::filesystem::path PrecomputedSource::path_for(int frame_a, int frame_b) const {
  std::vector<char> buf(pattern_.size() + 64);
  const int len = std::snprintf(buf.data(), buf.size(), pattern_.c_str(), frame_a, frame_b);
  if (len < 0 || static_cast<std::size_t>(len) >= buf.size()) {
    throw ConfigError("precomputed: bad flow file pattern '" + pattern_ + "'");
  }
  return dir_ / std::string(buf.data(), len);
}

FlowField PrecomputedSource::estimate(const ImageBuffer& I_a, const ImageBuffer& I_b,
                                      int frame_a, int frame_b) const {
  if (frame_a < 0 || frame_b < 0) {
    throw std::invalid_argument("precomputed: frame indices are required to locate flows");
  }
  const std::filesystem::path path = path_for(frame_a, frame_b);
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("flow not found: " + path.string());
  }
  FlowField flow = read_flow(path);
  if (!same_grid(flow, I_a) || !same_grid(flow, I_b)) {
    throw DimensionError("precomputed: " + path.string() + " is " + std::to_string(flow.width) +
                         "x" + std::to_string(flow.height) + " but frames are " +
                         std::to_string(I_a.width) + "x" + std::to_string(I_a.height));
  }
  return flow;
}

std::unique_ptr<TwoFrameEstimator> precomputed_source(const std::filesystem::path& dir,
                                                      const std::string& pattern) {
  return std::make_unique<PrecomputedSource>(dir, pattern);
}

}  // namespace flowfuse
