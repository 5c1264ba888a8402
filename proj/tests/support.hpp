#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "flowfuse/flow_core.hpp"

namespace flowfuse::testing {

// Band-limited noise: uniform noise box-blurred twice (radius 1) with wrap.
inline ImageBuffer noise_image(int w, int h, std::uint64_t seed, int channels = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ImageBuffer img(w, h, channels);
  for (double& v : img.data) v = uni(rng);
  for (int pass = 0; pass < 2; ++pass) {
    ImageBuffer out(w, h, channels);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < channels; ++c) {
          double s = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              s += img.at((x + dx + w) % w, (y + dy + h) % h, c);
            }
          }
          out.at(x, y, c) = s / 9.0;
        }
      }
    }
    img = std::move(out);
  }
  return img;
}

inline ImageBuffer crop_image(const ImageBuffer& img, int x0, int y0, int w, int h) {
  ImageBuffer out(w, h, img.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

inline FlowField random_flow(int w, int h, std::mt19937_64& rng, double range = 5.0) {
  std::uniform_real_distribution<double> uni(-range, range);
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    f.u[i] = uni(rng);
    f.v[i] = uni(rng);
  }
  return f;
}

// Mean EPE over pixels at least `border` away from every edge.
inline double interior_aepe(const FlowField& f, double gu, double gv, int border) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = border; y < f.height - border; ++y) {
    for (int x = border; x < f.width - border; ++x) {
      const std::size_t i = f.index(x, y);
      s += std::hypot(f.u[i] - gu, f.v[i] - gv);
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("flowfuse_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace flowfuse::testing
