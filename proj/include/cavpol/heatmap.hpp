#pragma once

#include <png.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavpol/tmm.hpp"

namespace cavpol {

namespace detail {

// Compact viridis approximation, linearly interpolated between anchors.
inline std::array<unsigned char, 3> viridis(double t) {
  static constexpr double anchors[5][3] = {{68, 1, 84},   {59, 82, 139}, {33, 145, 140},
                                           {94, 201, 98}, {253, 231, 37}};
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  const double x = t * 4.0;
  const int i = x >= 4.0 ? 3 : static_cast<int>(x);
  const double w = x - i;
  std::array<unsigned char, 3> rgb{};
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<unsigned char>(anchors[i][c] + w * (anchors[i + 1][c] - anchors[i][c]) + 0.5);
  return rgb;
}

}  // namespace detail

// Rasterizes a map to RGB PNG: momenta left-to-right, energy ascending upward,
// linear color scale over [0, 1]. Each grid cell spans `scale` pixels.
inline void write_heatmap_png(const std::filesystem::path& path, const DispersionMap& map,
                              int scale = 1) {
  if (scale < 1) throw std::invalid_argument("heatmap: scale must be >= 1");
  const std::size_t nrow = map.energies_ev.size(), ncol = map.momenta_um.size();
  if (nrow == 0 || ncol == 0) throw std::invalid_argument("heatmap: empty map");
  const std::size_t W = ncol * static_cast<std::size_t>(scale);
  const std::size_t H = nrow * static_cast<std::size_t>(scale);

  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  std::FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw std::runtime_error("heatmap: cannot open " + tmp.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("heatmap: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::error_code ec;
    fs::remove(tmp, ec);
    throw std::runtime_error("heatmap: libpng write failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> rowbuf(W * 3);
  for (std::size_t y = 0; y < H; ++y) {
    // Top pixel row shows the highest energy.
    const std::size_t i = nrow - 1 - y / static_cast<std::size_t>(scale);
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t j = x / static_cast<std::size_t>(scale);
      const auto rgb = detail::viridis(map.values[i][j]);
      rowbuf[3 * x] = rgb[0];
      rowbuf[3 * x + 1] = rgb[1];
      rowbuf[3 * x + 2] = rgb[2];
    }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  fs::rename(tmp, path);
}

}  // namespace cavpol
