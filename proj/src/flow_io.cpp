#include "flowfuse/flow_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "flowfuse/errors.hpp"

namespace flowfuse {

namespace {

using Kind = FormatError::Kind;

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }
}

template <typename T>
void put(std::vector<unsigned char>& buf, T value) {
  value = to_little_endian(value);
  const auto* p = reinterpret_cast<const unsigned char*>(&value);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(const unsigned char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return to_little_endian(value);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::kIo, "cannot open " + quoted(path));
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(Kind::kIo, "cannot write " + quoted(path));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(Kind::kIo, "short write to " + quoted(path));
}

std::string extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// Raw PNG samples, interleaved, widened to 16 bits.
struct PngRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

PngRaster read_png_raw(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError(Kind::kIo, "cannot open " + quoted(path));
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
    throw FormatError(Kind::kBadMagic, "not a PNG file: " + quoted(path));
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(Kind::kIo, "libpng initialisation failed");
  }
  PngRaster r;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(Kind::kTruncated, "corrupt or truncated PNG: " + quoted(path));
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, static_cast<int>(sig.size()));
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (depth < 8) depth = 8;
  png_read_update_info(png, info);
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  r.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * r.height);
  rows.resize(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
  r.samples.resize(count);
  for (int y = 0; y < r.height; ++y) {
    const unsigned char* row = rows[y];
    for (std::size_t i = 0; i < static_cast<std::size_t>(r.width) * r.channels; ++i) {
      const std::size_t dst = static_cast<std::size_t>(y) * r.width * r.channels + i;
      r.samples[dst] = r.bit_depth == 16
                           ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                           : row[i];
    }
  }
  return r;
}

void write_png_raw(const std::filesystem::path& path, const PngRaster& r) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError(Kind::kIo, "cannot write " + quoted(path));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(Kind::kIo, "libpng initialisation failed");
  }
  const int bytes = r.bit_depth == 16 ? 2 : 1;
  const std::size_t stride = static_cast<std::size_t>(r.width) * r.channels * bytes;
  std::vector<unsigned char> pixels(stride * r.height);
  for (int y = 0; y < r.height; ++y) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(r.width) * r.channels; ++i) {
      const std::uint16_t s = r.samples[static_cast<std::size_t>(y) * r.width * r.channels + i];
      unsigned char* dst = pixels.data() + y * stride + i * bytes;
      if (bytes == 2) {
        dst[0] = static_cast<unsigned char>(s >> 8);
        dst[1] = static_cast<unsigned char>(s & 0xff);
      } else {
        dst[0] = static_cast<unsigned char>(s);
      }
    }
  }
  std::vector<png_bytep> rows(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = pixels.data() + y * stride;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(Kind::kIo, "PNG encoding failed: " + quoted(path));
  }
  png_init_io(png, fp.get());
  const int color = r.channels == 1   ? PNG_COLOR_TYPE_GRAY
                    : r.channels == 3 ? PNG_COLOR_TYPE_RGB
                                      : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, r.width, r.height, r.bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Binary PGM/PPM (P5/P6), maxval up to 65535.
ImageBuffer read_pnm(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = slurp(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") {
    throw FormatError(Kind::kBadMagic, "unsupported PNM type in " + quoted(path));
  }
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(Kind::kTruncated, "bad PNM header in " + quoted(path));
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw FormatError(Kind::kBadDimensions, "bad PNM header in " + quoted(path));
  }
  ++pos;  // single whitespace after maxval
  const int c = magic == "P6" ? 3 : 1;
  const int bps = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * c * bps;
  if (bytes.size() < pos + need) {
    throw FormatError(Kind::kTruncated, "truncated PNM payload in " + quoted(path));
  }
  ImageBuffer img(w, h, c);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const unsigned char* p = bytes.data() + pos + i * bps;
    const int s = bps == 2 ? (p[0] << 8) | p[1] : p[0];
    img.data[i] = clamp01(static_cast<double>(s) / maxval);
  }
  return img;
}

}  // namespace

FlowField read_flo(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = slurp(path);
  if (bytes.size() < 12) {
    throw FormatError(Kind::kTruncated, "truncated .flo header in " + quoted(path));
  }
  const float tag = get<float>(bytes.data());
  if (tag != kFloMagic) throw FormatError(Kind::kBadMagic, "bad magic in " + quoted(path));
  const std::int32_t w = get<std::int32_t>(bytes.data() + 4);
  const std::int32_t h = get<std::int32_t>(bytes.data() + 8);
  if (w < 1 || h < 1 || w > kMaxFloDimension || h > kMaxFloDimension) {
    throw FormatError(Kind::kBadDimensions, "absurd .flo dimensions " + std::to_string(w) +
                                                "x" + std::to_string(h) + " in " + quoted(path));
  }
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < 12 + n * 8) {
    throw FormatError(Kind::kTruncated, "truncated .flo payload in " + quoted(path));
  }
  FlowField flow(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    flow.u[i] = get<float>(bytes.data() + 12 + 8 * i);
    flow.v[i] = get<float>(bytes.data() + 16 + 8 * i);
  }
  return flow;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  if (flow.width < 1 || flow.height < 1 || flow.width > kMaxFloDimension ||
      flow.height > kMaxFloDimension) {
    throw FormatError(Kind::kBadDimensions, "cannot write .flo of size " +
                                                std::to_string(flow.width) + "x" +
                                                std::to_string(flow.height));
  }
  std::vector<unsigned char> buf;
  buf.reserve(12 + flow.pixels() * 8);
  put(buf, kFloMagic);
  put(buf, static_cast<std::int32_t>(flow.width));
  put(buf, static_cast<std::int32_t>(flow.height));
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
      throw std::invalid_argument("write_flo: non-finite displacement at pixel " +
                                  std::to_string(i));
    }
    put(buf, static_cast<float>(flow.u[i]));
    put(buf, static_cast<float>(flow.v[i]));
  }
  dump(path, buf);
}

std::uint16_t kitti_encode(double displacement) {
  const double scaled = std::round(displacement * 64.0);  // half away from zero
  const double code = std::clamp(scaled + 32768.0, 0.0, 65535.0);
  return static_cast<std::uint16_t>(code);
}

double kitti_decode(std::uint16_t code) { return (static_cast<double>(code) - 32768.0) / 64.0; }

FlowField read_kitti_png(const std::filesystem::path& path) {
  const PngRaster r = read_png_raw(path);
  if (r.bit_depth != 16 || r.channels != 3) {
    throw FormatError(Kind::kUnsupported,
                      "KITTI flow PNG must be 16-bit RGB, got " + std::to_string(r.bit_depth) +
                          "-bit with " + std::to_string(r.channels) + " channels: " +
                          quoted(path));
  }
  FlowField flow(r.width, r.height);
  flow.valid = Mask(r.width, r.height);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    const bool ok = r.samples[3 * i + 2] > 0;
    flow.valid.data[i] = ok ? 1 : 0;
    if (ok) {
      flow.u[i] = kitti_decode(r.samples[3 * i]);
      flow.v[i] = kitti_decode(r.samples[3 * i + 1]);
    }
  }
  return flow;
}

void write_kitti_png(const std::filesystem::path& path, const FlowField& flow) {
  PngRaster r{flow.width, flow.height, 3, 16, {}};
  r.samples.resize(flow.pixels() * 3);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    const bool ok = flow.is_valid(i);
    if (ok && (std::abs(flow.u[i]) >= 512.0 || std::abs(flow.v[i]) >= 512.0 ||
               !std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i]))) {
      throw std::invalid_argument("write_kitti_png: displacement outside the +-512 px range");
    }
    r.samples[3 * i] = ok ? kitti_encode(flow.u[i]) : 32768;
    r.samples[3 * i + 1] = ok ? kitti_encode(flow.v[i]) : 32768;
    r.samples[3 * i + 2] = ok ? 1 : 0;
  }
  write_png_raw(path, r);
}

FlowField read_flow(const std::filesystem::path& path) {
  return extension(path) == ".png" ? read_kitti_png(path) : read_flo(path);
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  if (extension(path) == ".png") {
    write_kitti_png(path, flow);
  } else {
    write_flo(path, flow);
  }
}

ImageBuffer read_image(const std::filesystem::path& path) {
  const std::string ext = extension(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  const PngRaster r = read_png_raw(path);
  const int keep = r.channels >= 3 ? 3 : 1;
  const double maxval = r.bit_depth == 16 ? 65535.0 : 255.0;
  ImageBuffer img(r.width, r.height, keep);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    for (int c = 0; c < keep; ++c) {
      img.data[i * keep + c] = clamp01(r.samples[i * r.channels + c] / maxval);
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  }
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("write_png: expected 1 or 3 channels");
  }
  const double maxval = bit_depth == 16 ? 65535.0 : 255.0;
  PngRaster r{img.width, img.height, img.channels, bit_depth, {}};
  r.samples.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    r.samples[i] = static_cast<std::uint16_t>(std::lround(clamp01(img.data[i]) * maxval));
  }
  write_png_raw(path, r);
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("write_ppm: expected 1 or 3 channels");
  }
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<unsigned char> buf(header.begin(), header.end());
  for (double v : img.data) buf.push_back(static_cast<unsigned char>(std::lround(clamp01(v) * 255.0)));
  dump(path, buf);
}

void write_image(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth) {
  const std::string ext = extension(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    write_ppm(path, img);
  } else {
    write_png(path, img, bit_depth);
  }
}

Mask read_mask_png(const std::filesystem::path& path) {
  const PngRaster r = read_png_raw(path);
  Mask m(r.width, r.height);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = r.samples[i * r.channels] > 0 ? 1 : 0;
  return m;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  PngRaster r{mask.width, mask.height, 1, 8, {}};
  r.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) r.samples[i] = mask.data[i] ? 255 : 0;
  write_png_raw(path, r);
}

namespace {

// Baker et al. colour wheel: RY 15, YG 6, GC 4, CB 11, BM 13, MR 6.
std::vector<std::array<double, 3>> make_color_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<double, 3>> wheel;
  for (int i = 0; i < RY; ++i) wheel.push_back({255, std::floor(255.0 * i / RY), 0});
  for (int i = 0; i < YG; ++i) wheel.push_back({255 - std::floor(255.0 * i / YG), 255, 0});
  for (int i = 0; i < GC; ++i) wheel.push_back({0, 255, std::floor(255.0 * i / GC)});
  for (int i = 0; i < CB; ++i) wheel.push_back({0, 255 - std::floor(255.0 * i / CB), 255});
  for (int i = 0; i < BM; ++i) wheel.push_back({std::floor(255.0 * i / BM), 0, 255});
  for (int i = 0; i < MR; ++i) wheel.push_back({255, 0, 255 - std::floor(255.0 * i / MR)});
  return wheel;
}

}  // namespace

ImageBuffer flow_to_color(const FlowField& flow, std::optional<double> max_mag) {
  static const std::vector<std::array<double, 3>> wheel = make_color_wheel();
  const int ncols = static_cast<int>(wheel.size());

  double norm = 0.0;
  if (max_mag) {
    norm = *max_mag;
  } else if (flow.pixels() > 0) {
    std::vector<double> mags(flow.pixels());
    for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::hypot(flow.u[i], flow.v[i]);
    const auto k = static_cast<std::ptrdiff_t>(0.99 * static_cast<double>(mags.size() - 1));
    std::nth_element(mags.begin(), mags.begin() + k, mags.end());
    norm = mags[k];
  }
  if (!(norm > 0.0)) norm = 1.0;

  ImageBuffer img(flow.width, flow.height, 3);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    const double fx = flow.u[i] / norm;
    const double fy = flow.v[i] / norm;
    const double rad = std::sqrt(fx * fx + fy * fy);
    const double a = std::atan2(-fy, -fx) / std::numbers::pi;
    const double fk = (a + 1.0) / 2.0 * (ncols - 1);
    const int k0 = static_cast<int>(fk);
    const int k1 = (k0 + 1) % ncols;
    const double f = fk - k0;
    for (int c = 0; c < 3; ++c) {
      const double col0 = wheel[k0][c] / 255.0;
      const double col1 = wheel[k1][c] / 255.0;
      double col = (1.0 - f) * col0 + f * col1;
      if (rad <= 1.0) {
        col = 1.0 - rad * (1.0 - col);
      } else {
        col *= 0.75;
      }
      img.data[3 * i + c] = std::floor(255.0 * col) / 255.0;
    }
  }
  return img;
}

}  // namespace flowfuse
