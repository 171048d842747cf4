#include <cmath>
#include <algorithm>
#include <random>

#include "invx/error.hpp"
#include "invx/eval.hpp"
#include "invx/preprocess.hpp"
#include "support.hpp"

namespace invx {
namespace {

PageImage page_of(int index, int dpi) {
  auto inv = make_synthetic_invoice(7, index);
  return render_runs(inv.runs, dpi, inv.id);
}

// Exact Otsu by integer arithmetic: between-class variance is proportional to
// (N*S0 - n0*S)^2 / (n0*n1), compared by cross-multiplication.
int otsu_oracle(const PageImage& img) {
  std::array<long long, 256> h{};
  for (auto p : img.pixels) ++h[p];
  long long n = static_cast<long long>(img.pixels.size()), s = 0;
  for (int v = 0; v < 256; ++v) s += h[v] * v;
  int best_t = 0;
  __int128 best_num = -1, best_den = 1;
  long long n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += h[t];
    s0 += h[t] * t;
    long long n1 = n - n0;
    __int128 num = 0, den = 1;
    if (n0 > 0 && n1 > 0) {
      __int128 d = static_cast<__int128>(n) * s0 - static_cast<__int128>(n0) * s;
      num = d * d;
      den = static_cast<__int128>(n0) * n1;
    }
    if (num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_t = t;
    }
  }
  return best_t;
}

TEST(Quality, UniformGray) {
  PageImage img(64, 64, 300, 128);
  auto q = assess_quality(img);
  EXPECT_EQ(q.sharpness, 0.0);
  EXPECT_EQ(q.contrast, 0.0);
}

TEST(Quality, Checkerboard) {
  PageImage img(64, 64, 300);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) img.at(x, y) = (x + y) % 2 ? 255 : 0;
  EXPECT_NEAR(assess_quality(img).contrast, 1.0, 1e-9);
}

TEST(Quality, CleanPageIsUpright) {
  auto q = assess_quality(page_of(0, 150));
  EXPECT_NEAR(q.skew_deg, 0.0, 0.2);
}

TEST(Quality, TooSmall) {
  PageImage img(31, 100, 300);
  EXPECT_THROW(assess_quality(img), Error);
}

TEST(Quality, ScoreFormula) {
  EXPECT_DOUBLE_EQ(quality_score(1000, 1.0, 0), 1.0);
  EXPECT_DOUBLE_EQ(quality_score(250, 0.5, 7.5), 0.5 * 0.5 + 0.3 * 0.5 + 0.2 * 0.5);
  EXPECT_DOUBLE_EQ(quality_score(0, 0, 30), 0.0);
}

TEST(Denoise, Examples) {
  PageImage black(9, 9, 300, 0);
  black.at(4, 4) = 255;
  auto out = denoise_median(black);
  for (auto p : out.pixels) EXPECT_EQ(p, 0);
  PageImage flat(20, 20, 300, 77);
  EXPECT_TRUE(denoise_median(flat).same_pixels(flat));
  EXPECT_THROW(denoise_median(flat, 3), Error);
}

TEST(Denoise, RestoresSaltAndPepper) {
  auto clean = page_of(1, 100);
  auto noisy = degrade(clean, Degradation{0, 0.10}, 99);
  auto fixed = denoise_median(noisy);
  long long noise = 0, restored = 0;
  for (std::size_t i = 0; i < clean.pixels.size(); ++i) {
    if (noisy.pixels[i] == clean.pixels[i]) continue;
    ++noise;
    restored += fixed.pixels[i] == clean.pixels[i];
  }
  ASSERT_GT(noise, 0);
  EXPECT_GE(static_cast<double>(restored) / static_cast<double>(noise), 0.95);
}

TEST(DenoiseProperty, OutputDrawnFromNeighborhood) {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    PageImage img(17, 13, 300);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
    for (int r : {1, 2}) {
      auto out = denoise_median(img, r);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          std::vector<int> nb;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
              nb.push_back(img.at(std::clamp(x + dx, 0, img.width - 1), std::clamp(y + dy, 0, img.height - 1)));
          std::sort(nb.begin(), nb.end());
          ASSERT_EQ(out.at(x, y), nb[nb.size() / 2]);
        }
    }
  }
}

TEST(Skew, Examples) {
  auto page = page_of(2, 150);
  EXPECT_NEAR(estimate_skew_hough(page), 0.0, 0.2);
  EXPECT_NEAR(estimate_skew_hough(rotate(page, 3.0)), 3.0, 0.5);
  PageImage white(300, 300, 150, 255);
  try {
    estimate_skew_hough(white);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BlankPage);
  }
}

TEST(DeskewProperty, RecoversKnownRotations) {
  const double angles[] = {-10, -5, -2, -0.5, 0.5, 2, 5, 10};
  int total = 0, ok = 0;
  for (int i = 0; i < 4; ++i) {
    auto page = page_of(i, 150);
    for (double a : angles) {
      ++total;
      double est = estimate_skew_hough(rotate(page, a));
      if (std::abs(est - a) <= 0.5) ++ok;
      else ADD_FAILURE() << "page " << i << " angle " << a << " estimated " << est;
    }
  }
  EXPECT_GE(static_cast<double>(ok) / total, 0.95);
}

TEST(Rotate, Examples) {
  auto page = page_of(3, 60);
  EXPECT_TRUE(rotate(page, 0).same_pixels(page));
  auto r = rotate(page, 90);
  EXPECT_EQ(r.width, page.height);
  EXPECT_EQ(r.height, page.width);
}

TEST(Rotate, RoundTripWithinTolerance) {
  auto page = page_of(3, 300);
  auto back = rotate(rotate(page, 3), -3);
  int ox = (back.width - page.width) / 2, oy = (back.height - page.height) / 2;
  long long close = 0;
  for (int y = 0; y < page.height; ++y)
    for (int x = 0; x < page.width; ++x) close += std::abs(back.at(x + ox, y + oy) - page.at(x, y)) <= 16;
  EXPECT_GE(static_cast<double>(close) / static_cast<double>(page.pixels.size()), 0.99);
}

TEST(Otsu, Examples) {
  PageImage two(40, 40, 300);
  for (std::size_t i = 0; i < two.pixels.size(); ++i) two.pixels[i] = i % 2 ? 200 : 50;
  auto b = binarize_otsu(two);
  EXPECT_GE(b.threshold, 50);
  EXPECT_LE(b.threshold, 199);
  for (auto p : b.image.pixels) EXPECT_TRUE(p == 0 || p == 255);

  PageImage zero(40, 40, 300, 0);
  auto z = binarize_otsu(zero);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.threshold, 128);
  EXPECT_TRUE(z.image.same_pixels(zero));

  // Histogram counts follow the two densities (mu 60 and 190, sigma 10).
  std::vector<std::uint8_t> values;
  for (int v = 0; v < 256; ++v) {
    auto density = [&](double mu) { return std::exp(-0.5 * (v - mu) * (v - mu) / 100.0) / (10.0 * std::sqrt(2 * M_PI)); };
    auto n = std::lround(500'000 * (density(60) + density(190)));
    values.insert(values.end(), static_cast<std::size_t>(n), static_cast<std::uint8_t>(v));
  }
  PageImage gauss(static_cast<int>(values.size()), 1, 300);
  gauss.pixels = values;
  auto g = binarize_otsu(gauss);
  EXPECT_GE(g.threshold, 100);
  EXPECT_LE(g.threshold, 150);
}

TEST(OtsuProperty, EqualsBruteForce) {
  std::mt19937 rng(2024);
  int images = 0;
  for (int i = 0; i < 240; ++i) {
    int w = 32 + static_cast<int>(rng() % 33), h = 32 + static_cast<int>(rng() % 33);
    PageImage img(w, h, 300);
    int kind = i % 4;
    std::normal_distribution<double> a(40 + rng() % 60, 5 + rng() % 20), b(150 + rng() % 90, 5 + rng() % 20);
    int levels = 2 + static_cast<int>(rng() % 6);
    for (auto& p : img.pixels) {
      switch (kind) {
        case 0: p = static_cast<std::uint8_t>(rng() % 256); break;
        case 1: p = static_cast<std::uint8_t>(std::clamp(std::lround(rng() % 3 ? b(rng) : a(rng)), 0L, 255L)); break;
        case 2: p = static_cast<std::uint8_t>((rng() % levels) * (255 / levels)); break;
        default: p = rng() % 50 ? 255 : static_cast<std::uint8_t>(rng() % 80); break;
      }
    }
    auto hist = histogram(img);
    if (std::count_if(hist.begin(), hist.end(), [](long long c) { return c > 0; }) < 2) continue;
    ++images;
    ASSERT_EQ(binarize_otsu(img).threshold, otsu_oracle(img)) << "image " << i;
  }
  EXPECT_GE(images, 200);
}

TEST(Contrast, Examples) {
  PageImage img(50, 50, 300);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(100 + i % 51);
  auto out = contrast_stretch(img);
  EXPECT_EQ(*std::min_element(out.pixels.begin(), out.pixels.end()), 0);
  EXPECT_EQ(*std::max_element(out.pixels.begin(), out.pixels.end()), 255);
  PageImage flat(50, 50, 300, 90);
  EXPECT_THROW(contrast_stretch(flat), Error);
}

TEST(ContrastProperty, Monotone) {
  std::mt19937 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    PageImage img(64, 8, 300);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
    for (int v = 0; v < 256; ++v) img.pixels[static_cast<std::size_t>(v) % img.pixels.size()] = static_cast<std::uint8_t>(v);
    auto out = contrast_stretch(img);
    std::array<int, 256> map;
    map.fill(-1);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) map[img.pixels[i]] = out.pixels[i];
    for (int v = 1; v < 256; ++v)
      if (map[v] >= 0 && map[v - 1] >= 0) ASSERT_LE(map[v - 1], map[v]);
  }
}

TEST(NormalizeDpi, Examples) {
  PageImage img(1275, 1650, 150);
  auto up = normalize_dpi(img, 300);
  EXPECT_EQ(up.width, 2550);
  EXPECT_EQ(up.height, 3300);
  EXPECT_EQ(up.dpi, 300);
  PageImage same(100, 100, 300);
  EXPECT_TRUE(normalize_dpi(same, 300).same_pixels(same));
  PageImage hi(1200, 802, 600);
  auto back = normalize_dpi(normalize_dpi(hi, 300), 600);
  EXPECT_EQ(back.width, hi.width);
  EXPECT_EQ(back.height, hi.height);
}

TEST(Adaptive, CleanPage) {
  auto r = preprocess_adaptive(page_of(4, 300));
  EXPECT_EQ(r.applied, (std::vector<std::string>{"normalize_dpi", "binarize"}));
}

TEST(Adaptive, SkewedNoisyPage) {
  auto page = degrade(page_of(5, 150), Degradation{3.0, 0.05}, 1);
  PreprocessOptions o;
  o.target_dpi = 150;
  auto r = preprocess_adaptive(page, o);
  EXPECT_NE(std::find(r.applied.begin(), r.applied.end(), "denoise"), r.applied.end());
  EXPECT_NE(std::find(r.applied.begin(), r.applied.end(), "deskew"), r.applied.end());
  EXPECT_EQ(r.applied.back(), "binarize");
}

TEST(Adaptive, BlankPage) {
  PageImage white(600, 800, 300, 255);
  auto r = preprocess_adaptive(white);
  EXPECT_TRUE(r.blank);
  EXPECT_EQ(r.applied, (std::vector<std::string>{"normalize_dpi"}));
}

TEST(PreprocessProperty, OpsArePure) {
  auto page = degrade(page_of(6, 100), Degradation{2.0, 0.02}, 3);
  PreprocessOptions o;
  o.target_dpi = 100;
  auto a = preprocess_adaptive(page, o), b = preprocess_adaptive(page, o);
  EXPECT_TRUE(a.image.same_pixels(b.image));
  EXPECT_EQ(a.applied, b.applied);
  EXPECT_TRUE(denoise_median(page).same_pixels(denoise_median(page)));
  EXPECT_TRUE(rotate(page, 1.3).same_pixels(rotate(page, 1.3)));
}

}  // namespace
}  // namespace invx
