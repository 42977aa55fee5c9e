#include "image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <json.hpp>

#include "error.hpp"

namespace vfpp {
namespace fs = std::filesystem;

std::size_t Mask8::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

ImageFormat format_for_path(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return ImageFormat::Pgm;
  if (ext == ".png") return ImageFormat::Png;
  throw Error(ErrorCode::IoError, "unsupported image extension: " + p.string());
}

void write_image(const fs::path& p, const GrayImage16& img, bool eight_bit) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (format_for_path(p) == ImageFormat::Pgm) {
    if (!eight_bit) return write_pgm16(p, img);
    Mask8 m(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) m.data[i] = static_cast<std::uint8_t>(img.data[i] >> 8);
    return write_mask_pgm(p, m);
  }
  write_png16(p, img, eight_bit);
}

GrayImage16 read_image(const fs::path& p) {
  return format_for_path(p) == ImageFormat::Pgm ? read_pgm(p) : read_png(p);
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open for writing: " + p.string());
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open for reading: " + p.string());
  return f;
}

// Reads a PGM header token, skipping whitespace and comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

struct PgmData {
  int w = 0, h = 0, maxval = 0;
  std::vector<std::uint16_t> samples;
};

PgmData read_pgm_any(const fs::path& p) {
  auto in = open_in(p);
  PgmData d;
  if (pgm_token(in) != "P5") throw Error(ErrorCode::IoError, "not a binary PGM: " + p.string());
  try {
    d.w = std::stoi(pgm_token(in));
    d.h = std::stoi(pgm_token(in));
    d.maxval = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorCode::IoError, "malformed PGM header: " + p.string());
  }
  if (d.w <= 0 || d.h <= 0 || d.maxval <= 0 || d.maxval > 65535)
    throw Error(ErrorCode::IoError, "malformed PGM header: " + p.string());
  const std::size_t n = static_cast<std::size_t>(d.w) * d.h;
  d.samples.resize(n);
  if (d.maxval < 256) {
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!in) throw Error(ErrorCode::IoError, "truncated PGM: " + p.string());
    std::copy(buf.begin(), buf.end(), d.samples.begin());
  } else {
    std::vector<std::uint8_t> buf(2 * n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw Error(ErrorCode::IoError, "truncated PGM: " + p.string());
    for (std::size_t i = 0; i < n; ++i)
      d.samples[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  }
  return d;
}

}  // namespace

void write_pgm16(const fs::path& p, const GrayImage16& img) {
  auto f = open_out(p);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<std::uint8_t> buf(2 * img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    buf[2 * i] = static_cast<std::uint8_t>(img.data[i] >> 8);
    buf[2 * i + 1] = static_cast<std::uint8_t>(img.data[i] & 0xFF);
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + p.string());
}

GrayImage16 read_pgm(const fs::path& p) {
  auto d = read_pgm_any(p);
  GrayImage16 img(d.w, d.h);
  if (d.maxval == 65535) {
    img.data = std::move(d.samples);
  } else {
    for (std::size_t i = 0; i < img.size(); ++i)
      img.data[i] = static_cast<std::uint16_t>((static_cast<std::uint32_t>(d.samples[i]) * 65535 + d.maxval / 2) / d.maxval);
  }
  return img;
}

void write_mask_pgm(const fs::path& p, const Mask8& mask) {
  auto f = open_out(p);
  f << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + p.string());
}

Mask8 read_mask_pgm(const fs::path& p) {
  auto d = read_pgm_any(p);
  Mask8 m(d.w, d.h);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = d.samples[i] != 0 ? 255 : 0;
  return m;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png16(const fs::path& p, const GrayImage16& img, bool eight_bit) {
  FilePtr fp(std::fopen(p.c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::IoError, "cannot open for writing: " + p.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng write failed: " + p.string());
  }
  png_init_io(png, fp.get());
  const int depth = eight_bit ? 8 : 16;
  png_set_IHDR(png, info, img.width, img.height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed compression settings keep output byte-identical across runs.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const int bpp = depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * bpp);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint16_t v = img.at(x, y);
      if (eight_bit) {
        row[x] = static_cast<png_byte>(v >> 8);
      } else {
        row[2 * x] = static_cast<png_byte>(v >> 8);
        row[2 * x + 1] = static_cast<png_byte>(v & 0xFF);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

GrayImage16 read_png(const fs::path& p) {
  FilePtr fp(std::fopen(p.c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::IoError, "cannot open for reading: " + p.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng init failed");
  }
  GrayImage16 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng read failed: " + p.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> row(rowbytes);
  img = GrayImage16(w, h);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) {
      if (out_depth == 16) {
        img.at(x, y) = static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
      } else {
        img.at(x, y) = static_cast<std::uint16_t>(row[x] * 257);
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_raster(const fs::path& p, const RasterF64& r, const std::string& field, const std::string& units) {
  auto f = open_out(p);
  static_assert(std::endian::native == std::endian::little, "raster IO assumes little-endian host");
  f.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size() * sizeof(double)));
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + p.string());
  nlohmann::json side = {{"version", 1},   {"width", r.width}, {"height", r.height},
                         {"field", field}, {"units", units},   {"dtype", "float64-le"}};
  auto s = open_out(fs::path(p.string() + ".json"));
  s << side.dump(2) << "\n";
}

RasterF64 read_raster(const fs::path& p) {
  auto s = open_in(fs::path(p.string() + ".json"));
  nlohmann::json side;
  try {
    s >> side;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoError, "bad raster sidecar: " + std::string(e.what()));
  }
  RasterF64 r(side.at("width").get<int>(), side.at("height").get<int>());
  auto f = open_in(p);
  f.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size() * sizeof(double)));
  if (!f) throw Error(ErrorCode::IoError, "truncated raster: " + p.string());
  return r;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t image_hash(const GrayImage16& img) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(img.data.data());
  return fnv1a({p, img.data.size() * sizeof(std::uint16_t)});
}

}  // namespace vfpp
