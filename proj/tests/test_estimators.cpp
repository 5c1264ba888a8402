#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <string>

#include "flowfuse/errors.hpp"
#include "flowfuse/estimators.hpp"
#include "flowfuse/flow_io.hpp"
#include "support.hpp"

namespace flowfuse {
namespace {

constexpr int kSize = 64;
constexpr int kBorder = 8;

// Frame pair related by a one-pixel shift to the right: I_b(x + 1) = I_a(x).
struct ShiftPair {
  ImageBuffer a, b;
};

ShiftPair shifted_pair(std::uint64_t seed, int channels = 1) {
  const ImageBuffer big = testing::noise_image(kSize + 4, kSize + 4, seed, channels);
  return {testing::crop_image(big, 1, 0, kSize, kSize), testing::crop_image(big, 0, 0, kSize, kSize)};
}

double interior_diff(const FlowField& a, const FlowField& b, int border, double sign = 1.0) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = border; y < a.height - border; ++y) {
    for (int x = border; x < a.width - border; ++x) {
      const std::size_t i = a.index(x, y);
      s += std::hypot(a.u[i] - sign * b.u[i], a.v[i] - sign * b.v[i]);
      ++n;
    }
  }
  return s / n;
}

class BothEstimators : public ::testing::TestWithParam<std::string> {
 protected:
  std::unique_ptr<TwoFrameEstimator> make() const {
    if (GetParam() == "hs") return std::make_unique<HornSchunckEstimator>();
    return std::make_unique<LucasKanadeEstimator>();
  }
};

TEST_P(BothEstimators, IdenticalFramesGiveZeroFlow) {
  const ImageBuffer I = testing::noise_image(kSize, kSize, 31);
  const FlowField f = make()->estimate(I, I);
  EXPECT_EQ(f.width, kSize);
  EXPECT_EQ(f.height, kSize);
  EXPECT_LT(testing::interior_aepe(f, 0.0, 0.0, 0), 0.05);
}

TEST_P(BothEstimators, OnePixelShift) {
  for (std::uint64_t seed : {32u, 33u, 34u}) {
    const ShiftPair p = shifted_pair(seed);
    const FlowField f = make()->estimate(p.a, p.b);
    EXPECT_LT(testing::interior_aepe(f, 1.0, 0.0, kBorder), 0.3) << "seed " << seed;
  }
}

TEST_P(BothEstimators, RgbInputIsConvertedToGray) {
  const ShiftPair p = shifted_pair(35, 3);
  const FlowField f = make()->estimate(p.a, p.b);
  EXPECT_LT(testing::interior_aepe(f, 1.0, 0.0, kBorder), 0.3);
}

TEST_P(BothEstimators, Deterministic) {
  const ShiftPair p = shifted_pair(36);
  const auto est = make();
  EXPECT_EQ(est->estimate(p.a, p.b), est->estimate(p.a, p.b));
}

TEST_P(BothEstimators, ShiftEquivariance) {
  const ImageBuffer big_a = testing::noise_image(kSize + 8, kSize + 8, 37);
  ImageBuffer big_b(kSize + 8, kSize + 8, 1);
  for (int y = 0; y < big_b.height; ++y) {
    for (int x = 0; x < big_b.width; ++x) big_b.at(x, y) = big_a.at((x + big_b.width - 1) % big_b.width, y);
  }
  const auto est = make();
  const FlowField f0 = est->estimate(testing::crop_image(big_a, 0, 0, kSize, kSize),
                                     testing::crop_image(big_b, 0, 0, kSize, kSize));
  const FlowField f1 = est->estimate(testing::crop_image(big_a, 3, 2, kSize, kSize),
                                     testing::crop_image(big_b, 3, 2, kSize, kSize));
  double s = 0.0;
  std::size_t n = 0;
  for (int y = kBorder; y < kSize - kBorder - 2; ++y) {
    for (int x = kBorder; x < kSize - kBorder - 3; ++x) {
      const std::size_t i0 = f0.index(x + 3, y + 2), i1 = f1.index(x, y);
      s += std::hypot(f0.u[i0] - f1.u[i1], f0.v[i0] - f1.v[i1]);
      ++n;
    }
  }
  EXPECT_LT(s / n, 0.1);
}

TEST_P(BothEstimators, SwappingInputsNegates) {
  const ShiftPair p = shifted_pair(38);
  const auto est = make();
  const FlowField ab = est->estimate(p.a, p.b);
  const FlowField ba = est->estimate(p.b, p.a);
  EXPECT_LT(interior_diff(ba, ab, kBorder, -1.0), 0.3);
}

TEST_P(BothEstimators, RejectsMismatchedFrames) {
  EXPECT_THROW(make()->estimate(ImageBuffer(8, 8, 1), ImageBuffer(9, 8, 1)), DimensionError);
  EXPECT_THROW(make()->estimate(ImageBuffer(8, 8, 1), ImageBuffer(8, 8, 3)), DimensionError);
}

TEST_P(BothEstimators, OutputAlwaysFinite) {
  for (std::uint64_t seed = 40; seed < 44; ++seed) {
    const ImageBuffer a = testing::noise_image(24, 20, seed);
    const ImageBuffer b = testing::noise_image(24, 20, seed + 100);
    const FlowField f = make()->estimate(a, b);
    for (std::size_t i = 0; i < f.pixels(); ++i) {
      ASSERT_TRUE(std::isfinite(f.u[i]) && std::isfinite(f.v[i]));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Estimators, BothEstimators, ::testing::Values("hs", "lk"));

TEST(HornSchunck, ConstantImagesConvergeToZero) {
  const ImageBuffer a(32, 32, 1, 0.3), b(32, 32, 1, 0.7);
  const FlowField f = horn_schunck(a, b);
  EXPECT_LT(testing::interior_aepe(f, 0.0, 0.0, 0), 1e-9);
}

TEST(HornSchunck, ParameterValidation) {
  HsParams p;
  p.alpha = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.iterations = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.pyramid_levels = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_NO_THROW(HsParams{}.validate());
}

TEST(LucasKanade, FlatRegionIsInvalid) {
  ImageBuffer a = testing::noise_image(48, 48, 45);
  for (int y = 0; y < 48; ++y) {
    for (int x = 24; x < 48; ++x) a.at(x, y) = 0.5;
  }
  const FlowField f = lucas_kanade(a, a);
  ASSERT_TRUE(f.has_valid());
  EXPECT_FALSE(f.is_valid(f.index(40, 24)));
  EXPECT_TRUE(f.is_valid(f.index(8, 24)));
  EXPECT_LT(std::hypot(f.u[f.index(8, 24)], f.v[f.index(8, 24)]), 0.05);
}

TEST(LucasKanade, ParameterValidation) {
  LkParams p;
  p.window_radius = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.min_eigen_threshold = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.iterations_per_level = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Precomputed, PassesStoredFieldThrough) {
  testing::TempDir dir("pre");
  const FlowField stored(8, 6, 0.5, -1.25);
  write_flo(dir / "flow_000001_000002.flo", stored);
  const auto src = precomputed_source(dir.path());
  const ImageBuffer frame(8, 6, 1);
  EXPECT_EQ(src->estimate(frame, frame, 1, 2), stored);
  EXPECT_EQ(src->name(), "precomputed");
}

TEST(Precomputed, KittiPattern) {
  testing::TempDir dir("pre");
  write_kitti_png(dir / "f_3_4.png", FlowField(5, 5, 2.0, 1.0));
  PrecomputedSource src(dir.path(), "f_%d_%d.png");
  const FlowField f = src.estimate(ImageBuffer(5, 5, 1), ImageBuffer(5, 5, 1), 3, 4);
  EXPECT_EQ(f.u[0], 2.0);
  EXPECT_EQ(f.v[24], 1.0);
}

TEST(Precomputed, MissingFileNamesPath) {
  testing::TempDir dir("pre");
  PrecomputedSource src(dir.path());
  const ImageBuffer frame(4, 4, 1);
  try {
    src.estimate(frame, frame, 7, 8);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("flow not found"), std::string::npos);
    EXPECT_NE(msg.find("flow_000007_000008.flo"), std::string::npos);
  }
}

TEST(Precomputed, SizeMismatch) {
  testing::TempDir dir("pre");
  write_flo(dir / "flow_000000_000001.flo", FlowField(4, 4));
  PrecomputedSource src(dir.path());
  EXPECT_THROW(src.estimate(ImageBuffer(5, 4, 1), ImageBuffer(5, 4, 1), 0, 1), DimensionError);
}

TEST(Pyramid, ResizeFlowScalesDisplacements) {
  const FlowField f = resize_flow(FlowField(8, 4, 1.0, -2.0), 16, 8);
  EXPECT_EQ(f.width, 16);
  EXPECT_EQ(f.height, 8);
  EXPECT_DOUBLE_EQ(f.u[f.index(7, 3)], 2.0);
  EXPECT_DOUBLE_EQ(f.v[f.index(7, 3)], -4.0);
  const ImageBuffer d = downsample2x(ImageBuffer(10, 6, 1, 0.4));
  EXPECT_EQ(d.width, 5);
  EXPECT_EQ(d.height, 3);
  EXPECT_NEAR(d.data[0], 0.4, 1e-15);
}

}  // namespace
}  // namespace flowfuse
