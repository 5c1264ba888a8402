#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "flowfuse/kernels.hpp"

namespace flowfuse::kernels {
namespace {

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

class ThreadCounts : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }

 private:
  int saved_ = 1;
};

TEST_P(ThreadCounts, WarpMatchesSerialBitwise) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 5 + trial * 3, h = 4 + trial * 2, c = trial % 2 ? 3 : 1;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const auto src = uniform(n * c, rng, 0.0, 1.0);
    const auto fu = uniform(n, rng, -4.0, 4.0);
    const auto fv = uniform(n, rng, -4.0, 4.0);
    std::vector<double> a(n * c), b(n * c);
    std::vector<std::uint8_t> va(n), vb(n);
    serial::warp_bilinear({src, w, h, c, fu, fv, a, va});
    omp::warp_bilinear({src, w, h, c, fu, fv, b, vb});
    ASSERT_EQ(a, b);
    ASSERT_EQ(va, vb);
  }
}

TEST_P(ThreadCounts, HsSweepMatchesSerialBitwise) {
  std::mt19937_64 rng(52);
  const int w = 37, h = 23;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto u = uniform(n, rng, -2, 2), v = uniform(n, rng, -2, 2);
  const auto bu = uniform(n, rng, -2, 2), bv = uniform(n, rng, -2, 2);
  const auto ix = uniform(n, rng, -1, 1), iy = uniform(n, rng, -1, 1), it = uniform(n, rng, -1, 1);
  std::vector<double> u1(n), v1(n), u2(n), v2(n);
  serial::hs_sweep({w, h, 0.01, u, v, bu, bv, ix, iy, it, u1, v1});
  omp::hs_sweep({w, h, 0.01, u, v, bu, bv, ix, iy, it, u2, v2});
  EXPECT_EQ(u1, u2);
  EXPECT_EQ(v1, v2);
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_NEAR(a[i], b[i], 1e-12 * std::max(1.0, std::abs(a[i]))) << "index " << i;
  }
}

TEST_P(ThreadCounts, BoxSumMatchesSerial) {
  std::mt19937_64 rng(53);
  for (int radius : {1, 2, 4, 9}) {
    const int w = 31, h = 17;
    const auto src = uniform(static_cast<std::size_t>(w) * h, rng, -1, 1);
    std::vector<double> a(src.size()), b(src.size());
    serial::box_sum({src, w, h, radius, a});
    omp::box_sum({src, w, h, radius, b});
    expect_close(a, b);
  }
}

TEST_P(ThreadCounts, ConvMatchesSerial) {
  std::mt19937_64 rng(54);
  const ConvGeometry cases[] = {
      {2, 3, 9, 11, 5, 3, 1, 1},
      {1, 7, 16, 16, 16, 3, 2, 1},
      {3, 4, 13, 7, 2, 1, 1, 0},
      {1, 16, 24, 24, 8, 3, 1, 1},
      {2, 2, 5, 6, 3, 3, 2, 1},
  };
  for (const ConvGeometry& g : cases) {
    const std::size_t nx = static_cast<std::size_t>(g.batch) * g.in_channels * g.in_height * g.in_width;
    const std::size_t nw = static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel;
    const std::size_t ny = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
    const auto x = uniform(nx, rng, -1, 1), w = uniform(nw, rng, -1, 1);
    const auto b = uniform(g.out_channels, rng, -1, 1), go = uniform(ny, rng, -1, 1);

    std::vector<double> y1(ny), y2(ny);
    serial::conv2d_forward(g, x, w, b, y1);
    omp::conv2d_forward(g, x, w, b, y2);
    expect_close(y1, y2);

    // Backward accumulates; start both from the same nonzero state.
    const auto gx0 = uniform(nx, rng, -1, 1), gw0 = uniform(nw, rng, -1, 1);
    const auto gb0 = uniform(g.out_channels, rng, -1, 1);
    std::vector<double> gx1 = gx0, gw1 = gw0, gb1 = gb0, gx2 = gx0, gw2 = gw0, gb2 = gb0;
    serial::conv2d_backward(g, x, w, go, gx1, gw1, gb1);
    omp::conv2d_backward(g, x, w, go, gx2, gw2, gb2);
    expect_close(gx1, gx2);
    expect_close(gw1, gw2);
    expect_close(gb1, gb2);

    // Any gradient output may be skipped.
    std::vector<double> gw3 = gw0;
    omp::conv2d_backward(g, x, w, go, {}, gw3, {});
    ASSERT_EQ(gw3, gw2);
  }
}

INSTANTIATE_TEST_SUITE_P(Kernels, ThreadCounts, ::testing::Values(1, 2, 3, 4));

TEST(Kernels, ConvIsIndependentOfThreadCount) {
  std::mt19937_64 rng(55);
  const ConvGeometry g{2, 8, 20, 20, 16, 3, 1, 1};
  const std::size_t nx = 2 * 8 * 20 * 20, nw = 16 * 8 * 9, ny = 2 * 16 * 20 * 20;
  const auto x = uniform(nx, rng, -1, 1), w = uniform(nw, rng, -1, 1);
  const auto b = uniform(16, rng, -1, 1), go = uniform(ny, rng, -1, 1);
  const int saved = omp_get_max_threads();
  std::vector<std::vector<double>> outs;
  for (int threads : {1, 2, 5}) {
    omp_set_num_threads(threads);
    std::vector<double> y(ny), gx(nx), gw(nw), gb(16);
    omp::conv2d_forward(g, x, w, b, y);
    omp::conv2d_backward(g, x, w, go, gx, gw, gb);
    y.insert(y.end(), gx.begin(), gx.end());
    y.insert(y.end(), gw.begin(), gw.end());
    y.insert(y.end(), gb.begin(), gb.end());
    outs.push_back(std::move(y));
  }
  omp_set_num_threads(saved);
  EXPECT_EQ(outs[0], outs[1]);
  EXPECT_EQ(outs[0], outs[2]);
}

TEST(Kernels, BoxSumIsIndependentOfThreadCount) {
  std::mt19937_64 rng(56);
  const int w = 45, h = 29;
  const auto src = uniform(static_cast<std::size_t>(w) * h, rng, -1, 1);
  const int saved = omp_get_max_threads();
  std::vector<std::vector<double>> outs;
  for (int threads : {1, 3, 4}) {
    omp_set_num_threads(threads);
    std::vector<double> out(src.size());
    omp::box_sum({src, w, h, 3, out});
    outs.push_back(std::move(out));
  }
  omp_set_num_threads(saved);
  EXPECT_EQ(outs[0], outs[1]);
  EXPECT_EQ(outs[0], outs[2]);
}

TEST(Kernels, ConvOutputSize) {
  const ConvGeometry g{1, 1, 7, 8, 1, 3, 2, 1};
  EXPECT_EQ(g.out_height(), 4);
  EXPECT_EQ(g.out_width(), 4);
  const ConvGeometry h{1, 1, 5, 5, 1, 1, 1, 0};
  EXPECT_EQ(h.out_height(), 5);
}

TEST(Kernels, BoxSumClipsAtBorders) {
  const std::vector<double> ones(12, 1.0);
  std::vector<double> out(12);
  serial::box_sum({ones, 4, 3, 1, out});
  EXPECT_EQ(out[0], 4.0);
  EXPECT_EQ(out[5], 9.0);
  EXPECT_EQ(out[3], 4.0);
  EXPECT_EQ(out[4], 6.0);
}

}  // namespace
}  // namespace flowfuse::kernels
