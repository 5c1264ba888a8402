#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <vector>

#include "flowfuse/errors.hpp"
#include "flowfuse/flow_io.hpp"
#include "support.hpp"

namespace flowfuse {
namespace {

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FlowField single_precision(FlowField f) {
  for (double& x : f.u) x = static_cast<float>(x);
  for (double& x : f.v) x = static_cast<float>(x);
  return f;
}

TEST(Flo, OnePixelByteLayout) {
  testing::TempDir dir("flo");
  FlowField f(1, 1, 1.5, -2.0);
  write_flo(dir / "a.flo", f);
  const std::vector<unsigned char> bytes = file_bytes(dir / "a.flo");
  ASSERT_EQ(bytes.size(), 20u);
  // Little-endian float32 202021.25, int32 1, int32 1, float32 1.5, float32 -2.
  const std::vector<unsigned char> expected = {0x50, 0x49, 0x45, 0x48, 1, 0, 0, 0, 1, 0, 0, 0,
                                               0x00, 0x00, 0xc0, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(bytes, expected);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PIEH");
}

TEST(Flo, RoundTripIsBitExact) {
  testing::TempDir dir("flo");
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const FlowField f = single_precision(testing::random_flow(dim(rng), dim(rng), rng, 300.0));
    write_flo(dir / "r.flo", f);
    const FlowField g = read_flo(dir / "r.flo");
    ASSERT_EQ(g.width, f.width);
    ASSERT_EQ(g.height, f.height);
    ASSERT_EQ(0, std::memcmp(g.u.data(), f.u.data(), f.u.size() * sizeof(double)));
    ASSERT_EQ(0, std::memcmp(g.v.data(), f.v.data(), f.v.size() * sizeof(double)));
  }
}

TEST(Flo, Diagnostics) {
  testing::TempDir dir("flo");
  write_flo(dir / "ok.flo", FlowField(2, 2, 1.0, 1.0));
  std::vector<unsigned char> bytes = file_bytes(dir / "ok.flo");

  auto kind_of = [&](const std::vector<unsigned char>& b) {
    put_bytes(dir / "bad.flo", b);
    try {
      read_flo(dir / "bad.flo");
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return FormatError::Kind::kIo;
  };

  std::vector<unsigned char> magic = bytes;
  magic[0] ^= 0xff;
  EXPECT_EQ(kind_of(magic), FormatError::Kind::kBadMagic);

  std::vector<unsigned char> truncated(bytes.begin(), bytes.end() - 3);
  EXPECT_EQ(kind_of(truncated), FormatError::Kind::kTruncated);

  std::vector<unsigned char> header_only(bytes.begin(), bytes.begin() + 6);
  EXPECT_EQ(kind_of(header_only), FormatError::Kind::kTruncated);

  std::vector<unsigned char> huge = bytes;
  const std::int32_t absurd = 200000;
  std::memcpy(huge.data() + 4, &absurd, 4);
  EXPECT_EQ(kind_of(huge), FormatError::Kind::kBadDimensions);

  std::vector<unsigned char> zero = bytes;
  std::memset(zero.data() + 8, 0, 4);
  EXPECT_EQ(kind_of(zero), FormatError::Kind::kBadDimensions);

  EXPECT_THROW(read_flo(dir / "missing.flo"), FormatError);
  FlowField nan(1, 1, std::nan(""), 0.0);
  EXPECT_THROW(write_flo(dir / "nan.flo", nan), std::invalid_argument);
}

TEST(Kitti, Quantisation) {
  EXPECT_DOUBLE_EQ(kitti_decode(kitti_encode(0.013)), std::round(0.013 * 64.0) / 64.0);
  EXPECT_DOUBLE_EQ(kitti_decode(kitti_encode(0.013)), 0.015625);
  // Half-steps round away from zero.
  EXPECT_EQ(kitti_encode(0.5 / 64.0), 32769);
  EXPECT_EQ(kitti_encode(-0.5 / 64.0), 32767);
  EXPECT_EQ(kitti_encode(0.0), 32768);
}

TEST(Kitti, ExamplesAndValidity) {
  testing::TempDir dir("kitti");
  FlowField f(2, 1);
  f.u = {1.0, 3.0};
  f.v = {-1.0, 4.0};
  f.valid = Mask(2, 1, true);
  f.valid.set(1, 0, false);
  write_kitti_png(dir / "k.png", f);
  const FlowField g = read_kitti_png(dir / "k.png");
  EXPECT_EQ(g.u[0], 1.0);
  EXPECT_EQ(g.v[0], -1.0);
  EXPECT_TRUE(g.is_valid(0));
  EXPECT_EQ(g.u[1], 0.0);
  EXPECT_EQ(g.v[1], 0.0);
  EXPECT_FALSE(g.is_valid(1));
}

TEST(Kitti, RoundTripWithinHalfStep) {
  testing::TempDir dir("kitti");
  std::mt19937_64 rng(22);
  std::bernoulli_distribution coin(0.8);
  for (int trial = 0; trial < 40; ++trial) {
    FlowField f = testing::random_flow(9, 7, rng, 500.0);
    f.valid = Mask(9, 7);
    for (auto& b : f.valid.data) b = coin(rng);
    write_kitti_png(dir / "k.png", f);
    const FlowField g = read_kitti_png(dir / "k.png");
    ASSERT_EQ(g.valid, f.valid);
    for (std::size_t i = 0; i < f.pixels(); ++i) {
      if (!f.is_valid(i)) continue;
      ASSERT_LE(std::abs(g.u[i] - f.u[i]), 1.0 / 128.0);
      ASSERT_LE(std::abs(g.v[i] - f.v[i]), 1.0 / 128.0);
    }
  }
}

TEST(Kitti, RejectsWrongRaster) {
  testing::TempDir dir("kitti");
  write_png(dir / "gray.png", ImageBuffer(3, 3, 1, 0.5), 16);
  EXPECT_THROW(read_kitti_png(dir / "gray.png"), FormatError);
  write_png(dir / "rgb8.png", ImageBuffer(3, 3, 3, 0.5), 8);
  EXPECT_THROW(read_kitti_png(dir / "rgb8.png"), FormatError);
  EXPECT_THROW(write_kitti_png(dir / "far.png", FlowField(1, 1, 600.0, 0.0)), std::invalid_argument);
}

TEST(ReadFlow, DispatchesOnExtension) {
  testing::TempDir dir("flow");
  const FlowField f(3, 2, 0.25, -0.5);
  write_flow(dir / "a.flo", f);
  write_flow(dir / "a.png", f);
  EXPECT_EQ(read_flow(dir / "a.flo").u, f.u);
  EXPECT_EQ(read_flow(dir / "a.png").v, f.v);
}

TEST(Images, PngAndPpmRoundTrip) {
  testing::TempDir dir("img");
  for (int channels : {1, 3}) {
    const ImageBuffer img = testing::noise_image(11, 6, 5, channels);
    write_png(dir / "a16.png", img, 16);
    const ImageBuffer a = read_image(dir / "a16.png");
    ASSERT_EQ(a.channels, channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(a.data[i], img.data[i], 0.5 / 65535.0 + 1e-12);
    write_png(dir / "a8.png", img, 8);
    const ImageBuffer b = read_image(dir / "a8.png");
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(b.data[i], img.data[i], 0.5 / 255.0 + 1e-12);
    const char* name = channels == 1 ? "a.pgm" : "a.ppm";
    write_ppm(dir / name, img);
    const ImageBuffer c = read_image(dir / name);
    ASSERT_EQ(c.channels, channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(c.data[i], img.data[i], 0.5 / 255.0 + 1e-12);
  }
}

TEST(Images, ClampedOnWrite) {
  testing::TempDir dir("img");
  ImageBuffer img(2, 1, 1);
  img.data = {-0.5, 1.5};
  write_png(dir / "c.png", img, 16);
  const ImageBuffer r = read_image(dir / "c.png");
  EXPECT_EQ(r.data[0], 0.0);
  EXPECT_EQ(r.data[1], 1.0);
}

TEST(Masks, RoundTrip) {
  testing::TempDir dir("mask");
  Mask m(5, 3);
  m.set(0, 0, true);
  m.set(4, 2, true);
  write_mask_png(dir / "m.png", m);
  EXPECT_EQ(read_mask_png(dir / "m.png"), m);
}

TEST(FlowColor, ZeroFlowIsWhite) {
  const ImageBuffer c = flow_to_color(FlowField(4, 3));
  for (double v : c.data) EXPECT_EQ(v, 1.0);
}

TEST(FlowColor, FullTurnKeepsColour) {
  for (int k = 0; k < 16; ++k) {
    const double theta = 0.37 + k * std::numbers::pi / 8.0;
    const double turned = theta + 2.0 * std::numbers::pi;
    const ImageBuffer a = flow_to_color(FlowField(1, 1, std::cos(theta), std::sin(theta)), 2.0);
    const ImageBuffer b = flow_to_color(FlowField(1, 1, std::cos(turned), std::sin(turned)), 2.0);
    EXPECT_EQ(a, b);
  }
}

TEST(FlowColor, MagnitudeChangesSaturationNotHue) {
  const double m = 3.0;
  for (int k = 0; k < 12; ++k) {
    const double theta = 0.1 + k * std::numbers::pi / 6.0;
    const double dx = std::cos(theta), dy = std::sin(theta);
    const ImageBuffer a = flow_to_color(FlowField(1, 1, m * dx, m * dy), 2.0 * m);
    const ImageBuffer b = flow_to_color(FlowField(1, 1, 2.0 * m * dx, 2.0 * m * dy), 2.0 * m);
    // Same hue: the departure from white scales with the radius (0.5 vs 1).
    double sat_a = 0.0, sat_b = 0.0;
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(2.0 * (1.0 - a.data[c]), 1.0 - b.data[c], 2.0 / 255.0);
      sat_a += 1.0 - a.data[c];
      sat_b += 1.0 - b.data[c];
    }
    EXPECT_GT(sat_b, sat_a);
  }
}

TEST(FlowColor, ScaleInvariance) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const FlowField f = testing::random_flow(8, 8, rng, 10.0);
    const double s = std::ldexp(1.0, trial % 7 - 3);
    FlowField g = f;
    for (double& x : g.u) x *= s;
    for (double& x : g.v) x *= s;
    EXPECT_EQ(flow_to_color(f, 7.0), flow_to_color(g, 7.0 * s));
    EXPECT_EQ(flow_to_color(f), flow_to_color(g));
  }
}

}  // namespace
}  // namespace flowfuse
