#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invx/util.hpp"

namespace invx {

/// 8-bit grayscale raster, row-major, 0 = black, 255 = white.
struct PageImage {
  int width = 0;
  int height = 0;
  int dpi = 300;
  int page = 0;
  std::vector<std::uint8_t> pixels;
  /// Ground-truth fixture id carried through image metadata; only test
  /// engines read it.
  std::string fixture_id;

  PageImage() = default;
  PageImage(int w, int h, int dpi_, std::uint8_t fill = 255)
      : width(w), height(h), dpi(dpi_), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool same_pixels(const PageImage& o) const {
    return width == o.width && height == o.height && pixels == o.pixels;
  }
};

struct DecodedImage {
  PageImage image;
  bool dpi_known = false;
};

/// PNG (any bit depth / color type, converted to gray). Reads pHYs for DPI and
/// the "invx:fixture" tEXt chunk.
DecodedImage decode_png(std::span<const std::uint8_t> bytes);
/// 8-bit gray PNG with pHYs and, when set, the fixture tEXt chunk.
Bytes encode_png(const PageImage& img);

/// Baseline/progressive JPEG via libjpeg; JFIF density gives the DPI.
DecodedImage decode_jpeg(std::span<const std::uint8_t> bytes);

/// Draws `text` with the built-in 8x16 fixed-width glyphs magnified by
/// `scale`; `advance` is the pixel pitch between characters (default 8*scale).
void draw_text(PageImage& img, int left, int top, int scale, std::string_view text, double advance = 0);

/// Letter width (8.5 in) unless height/width > 1.4, then A4 width (8.27 in).
int estimate_dpi(int width, int height);

}  // namespace invx
