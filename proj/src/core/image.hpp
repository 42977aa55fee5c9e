#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vfpp {

/// 16-bit grayscale raster, row-major.
struct GrayImage16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;

  GrayImage16() = default;
  GrayImage16(int w, int h, std::uint16_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint16_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
  bool same_dims(const GrayImage16& o) const { return width == o.width && height == o.height; }
};

/// Double-precision raster used for phase, intensity and modulation maps.
struct RasterF64 {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  RasterF64() = default;
  RasterF64(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct Mask8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask8() = default;
  Mask8(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

enum class ImageFormat { Png, Pgm };

/// Format chosen by extension (.png / .pgm).
ImageFormat format_for_path(const std::filesystem::path& p);

/// 16-bit writers; `eight_bit` down-converts (v >> 8) for viewers.
void write_image(const std::filesystem::path& p, const GrayImage16& img, bool eight_bit = false);
GrayImage16 read_image(const std::filesystem::path& p);

void write_pgm16(const std::filesystem::path& p, const GrayImage16& img);
GrayImage16 read_pgm(const std::filesystem::path& p);
void write_png16(const std::filesystem::path& p, const GrayImage16& img, bool eight_bit = false);
GrayImage16 read_png(const std::filesystem::path& p);

void write_mask_pgm(const std::filesystem::path& p, const Mask8& mask);
Mask8 read_mask_pgm(const std::filesystem::path& p);

/// Raw little-endian float64 raster plus `<path>.json` sidecar.
void write_raster(const std::filesystem::path& p, const RasterF64& r, const std::string& field,
                  const std::string& units);
RasterF64 read_raster(const std::filesystem::path& p);

/// FNV-1a over the sample bytes; used for determinism checks and manifests.
std::uint64_t image_hash(const GrayImage16& img);
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace vfpp
