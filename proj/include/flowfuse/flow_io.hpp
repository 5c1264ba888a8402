#pragma once

// Flow and image codecs.
//
// Middlebury .flo (little-endian):
//   bytes 0-3   float32 202021.25 (ASCII "PIEH")
//   bytes 4-7   int32 width
//   bytes 8-11  int32 height
//   then width*height interleaved (u, v) float32 pairs, row-major, top row first.
//
// KITTI 2015 flow PNG: 16-bit RGB with
//   u = (R - 32768) / 64, v = (G - 32768) / 64, valid = (B > 0).

#include <filesystem>
#include <optional>

#include "flowfuse/flow_core.hpp"

namespace flowfuse {

inline constexpr float kFloMagic = 202021.25f;
inline constexpr int kMaxFloDimension = 100000;

FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);

FlowField read_kitti_png(const std::filesystem::path& path);
void write_kitti_png(const std::filesystem::path& path, const FlowField& flow);

// Quantises one displacement to the KITTI 1/64 grid (round half away from
// zero) and returns the stored 16-bit code.
std::uint16_t kitti_encode(double displacement);
double kitti_decode(std::uint16_t code);

// Reads .flo or KITTI .png by extension.
FlowField read_flow(const std::filesystem::path& path);
void write_flow(const std::filesystem::path& path, const FlowField& flow);

// 8- or 16-bit gray/RGB PNG and binary PPM/PGM. Values are clamped to [0, 1]
// on both read and write; gray+alpha and RGBA alpha channels are dropped.
ImageBuffer read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth = 8);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
void write_image(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth = 8);

// Masks are stored as 8-bit gray PNG (0 / 255); any nonzero reads as true.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

// Middlebury colour coding. Hue follows the 55-entry wheel, saturation the
// magnitude divided by max_mag (99th-percentile magnitude when absent).
// Zero flow is white; magnitudes beyond max_mag are darkened to 75%.
ImageBuffer flow_to_color(const FlowField& flow, std::optional<double> max_mag = std::nullopt);

}  // namespace flowfuse
