#include "invx/image.hpp"

namespace invx {
namespace {

const unsigned char kGlyphs[95][16] = {
#include "glyphs_8x16.inc"
};

}  // namespace

void draw_text(PageImage& img, int left, int top, int scale, std::string_view text, double advance) {
  if (advance <= 0) advance = 8.0 * scale;
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x20 || c > 0x7e) c = '?';
    int x0 = left + static_cast<int>(static_cast<double>(i) * advance + 0.5);
    const unsigned char* g = kGlyphs[c - 0x20];
    for (int gy = 0; gy < 16; ++gy)
      for (int gx = 0; gx < 8; ++gx) {
        if (!(g[gy] & (0x80 >> gx))) continue;
        for (int sy = 0; sy < scale; ++sy)
          for (int sx = 0; sx < scale; ++sx) {
            int x = x0 + gx * scale + sx, y = top + gy * scale + sy;
            if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = 0;
          }
      }
  }
}

}  // namespace invx
