#include "invx/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "invx/error.hpp"

namespace invx {
namespace {

constexpr double kMaxSkewDeg = 15.0;
constexpr double kSkewStepDeg = 0.1;

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear sample with out-of-frame neighbors treated as `fill`.
double sample_bilinear(const PageImage& img, double sx, double sy, double fill) {
  int x0 = static_cast<int>(std::floor(sx));
  int y0 = static_cast<int>(std::floor(sy));
  double fx = sx - x0, fy = sy - y0;
  auto px = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return fill;
    return img.at(x, y);
  };
  double top = px(x0, y0) * (1 - fx) + px(x0 + 1, y0) * fx;
  double bottom = px(x0, y0 + 1) * (1 - fx) + px(x0 + 1, y0 + 1) * fx;
  return top * (1 - fy) + bottom * fy;
}

// Catmull-Rom (a = -0.5) weight.
double cubic_weight(double t) {
  t = std::abs(t);
  if (t < 1) return (1.5 * t - 2.5) * t * t + 1;
  if (t < 2) return ((-0.5 * t + 2.5) * t - 4) * t + 2;
  return 0;
}

double sample_bicubic(const PageImage& img, double sx, double sy, double fill) {
  int x0 = static_cast<int>(std::floor(sx));
  int y0 = static_cast<int>(std::floor(sy));
  double wx[4], wy[4];
  for (int i = 0; i < 4; ++i) {
    wx[i] = cubic_weight(sx - (x0 + i - 1));
    wy[i] = cubic_weight(sy - (y0 + i - 1));
  }
  double sum = 0;
  for (int j = 0; j < 4; ++j) {
    int y = y0 + j - 1;
    double row = 0;
    for (int i = 0; i < 4; ++i) {
      int x = x0 + i - 1;
      double v = (x < 0 || y < 0 || x >= img.width || y >= img.height) ? fill : img.at(x, y);
      row += wx[i] * v;
    }
    sum += wy[j] * row;
  }
  return sum;
}

inline void sort2(std::uint8_t& a, std::uint8_t& b) {
  if (a > b) std::swap(a, b);
}

inline std::uint8_t median3(std::uint8_t a, std::uint8_t b, std::uint8_t c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

double quality_score(double sharpness, double contrast, double skew_deg, const PreprocessOptions& opts) {
  double s = opts.w_sharpness * std::min(sharpness / 500.0, 1.0) + opts.w_contrast * contrast +
             opts.w_skew * (1.0 - std::min(std::abs(skew_deg) / 15.0, 1.0));
  return std::clamp(s, 0.0, 1.0);
}

double laplacian_variance(const PageImage& img) {
  if (img.width < 3 || img.height < 3) return 0.0;
  double sum = 0, sum2 = 0;
  long long n = 0;
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      int v = img.at(x, y - 1) + img.at(x, y + 1) + img.at(x - 1, y) + img.at(x + 1, y) - 4 * img.at(x, y);
      sum += v;
      sum2 += static_cast<double>(v) * v;
      ++n;
    }
  }
  double mean = sum / n;
  return std::max(0.0, sum2 / n - mean * mean);
}

std::vector<long long> histogram(const PageImage& img) {
  std::vector<long long> h(256, 0);
  for (auto p : img.pixels) ++h[p];
  return h;
}

int percentile(const PageImage& img, double p) {
  auto h = histogram(img);
  auto n = static_cast<long long>(img.pixels.size());
  auto need = static_cast<long long>(std::ceil(p / 100.0 * static_cast<double>(n)));
  need = std::clamp(need, 1LL, n);
  long long cum = 0;
  for (int v = 0; v < 256; ++v) {
    cum += h[v];
    if (cum >= need) return v;
  }
  return 255;
}

double isolated_pixel_fraction(const PageImage& img) {
  if (img.width < 3 || img.height < 3) return 0.0;
  long long count = 0;
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      int c = img.at(x, y);
      int lo = 255, hi = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          int v = img.at(x + dx, y + dy);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      if (c + 100 < lo || c > hi + 100) ++count;
    }
  }
  return static_cast<double>(count) / static_cast<double>(img.pixels.size());
}

QualityReport assess_quality(const PageImage& img, const PreprocessOptions& opts) {
  if (img.width < 32 || img.height < 32)
    throw Error(ErrorCode::ImageTooSmall, std::to_string(img.width) + "x" + std::to_string(img.height));
  QualityReport q;
  q.sharpness = laplacian_variance(img);
  q.contrast = (percentile(img, 98) - percentile(img, 2)) / 255.0;
  q.noise = isolated_pixel_fraction(img);
  try {
    q.skew_deg = estimate_skew_hough(img);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BlankPage) throw;
    q.skew_deg = 0.0;
  }
  q.score = quality_score(q.sharpness, q.contrast, q.skew_deg, opts);
  return q;
}

PageImage denoise_median(const PageImage& img, int radius) {
  if (radius != 1 && radius != 2) throw Error(ErrorCode::InvalidArgument, "median radius must be 1 or 2");
  PageImage out = img;
  const int w = img.width, h = img.height;
  auto clampx = [w](int x) { return std::clamp(x, 0, w - 1); };
  auto clampy = [h](int y) { return std::clamp(y, 0, h - 1); };
  if (radius == 1) {
    // Sorted column triples, then the classic median-of-9 from sorted columns.
    std::vector<std::array<std::uint8_t, 3>> cols(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
      int ya = clampy(y - 1), yb = y, yc = clampy(y + 1);
      for (int x = 0; x < w; ++x) {
        std::uint8_t a = img.at(x, ya), b = img.at(x, yb), c = img.at(x, yc);
        sort2(a, b);
        sort2(b, c);
        sort2(a, b);
        cols[x] = {a, b, c};
      }
      for (int x = 0; x < w; ++x) {
        const auto& l = cols[clampx(x - 1)];
        const auto& m = cols[x];
        const auto& r = cols[clampx(x + 1)];
        std::uint8_t max_of_min = std::max({l[0], m[0], r[0]});
        std::uint8_t med_of_med = median3(l[1], m[1], r[1]);
        std::uint8_t min_of_max = std::min({l[2], m[2], r[2]});
        out.at(x, y) = median3(max_of_min, med_of_med, min_of_max);
      }
    }
    return out;
  }
  std::array<std::uint8_t, 25> window{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int k = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) window[k++] = img.at(clampx(x + dx), clampy(y + dy));
      std::nth_element(window.begin(), window.begin() + 12, window.end());
      out.at(x, y) = window[12];
    }
  }
  return out;
}

double estimate_skew_hough(const PageImage& img) {
  Binarized bin = binarize_otsu(img);
  if (bin.degenerate) throw Error(ErrorCode::BlankPage, "constant image");
  const int w = img.width, h = img.height;
  std::vector<std::pair<int, int>> edges;
  long long dark = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (bin.image.at(x, y) != 0) continue;
      ++dark;
      if (y + 1 == h || bin.image.at(x, y + 1) != 0) edges.emplace_back(x, y);
    }
  }
  if (static_cast<double>(dark) < 0.001 * static_cast<double>(img.pixels.size()))
    throw Error(ErrorCode::BlankPage, "fewer than 0.1% dark pixels");

  const int steps = static_cast<int>(std::lround(2 * kMaxSkewDeg / kSkewStepDeg));
  const int rho_offset = w;  // rho = x sin + y cos lies in [-w, w + h]
  const int rho_bins = 2 * w + h + 2;
  std::vector<int> acc(static_cast<std::size_t>(rho_bins));
  int best_count = -1;
  double best_theta = 0;
  for (int k = 0; k <= steps; ++k) {
    double theta = -kMaxSkewDeg + k * kSkewStepDeg;
    double rad = theta * std::numbers::pi / 180.0;
    double s = std::sin(rad), c = std::cos(rad);
    std::fill(acc.begin(), acc.end(), 0);
    int peak = 0;
    for (auto [x, y] : edges) {
      int rho = static_cast<int>(std::lround(x * s + y * c)) + rho_offset;
      int v = ++acc[static_cast<std::size_t>(rho)];
      peak = std::max(peak, v);
    }
    // Rounding keeps the grid values exact (e.g. -0.5, not -0.50000001).
    theta = std::round(theta * 10.0) / 10.0;
    bool better = peak > best_count;
    if (peak == best_count) {
      double a = std::abs(theta), b = std::abs(best_theta);
      better = a < b || (a == b && theta < best_theta);
    }
    if (better) {
      best_count = peak;
      best_theta = theta;
    }
  }
  return best_theta == 0.0 ? 0.0 : best_theta;
}

PageImage rotate(const PageImage& img, double degrees) {
  if (std::abs(degrees) > 360.0) throw Error(ErrorCode::InvalidArgument, "rotation beyond one turn");
  if (degrees == 0.0) return img;
  double rad = degrees * std::numbers::pi / 180.0;
  double s = std::sin(rad), c = std::cos(rad);
  // Exact values at quarter turns keep 90-degree rotations lossless.
  double quarter = degrees / 90.0;
  if (quarter == std::round(quarter)) {
    int q = ((static_cast<int>(std::round(quarter)) % 4) + 4) % 4;
    constexpr int kSin[] = {0, 1, 0, -1}, kCos[] = {1, 0, -1, 0};
    s = kSin[q];
    c = kCos[q];
  }
  double nw = std::abs(img.width * c) + std::abs(img.height * s);
  double nh = std::abs(img.width * s) + std::abs(img.height * c);
  int out_w = std::max(1, static_cast<int>(std::ceil(nw - 1e-6)));
  int out_h = std::max(1, static_cast<int>(std::ceil(nh - 1e-6)));
  if (quarter != std::round(quarter)) {
    // Same parity as the input keeps the centers on a shared pixel grid.
    out_w += (out_w - img.width) & 1;
    out_h += (out_h - img.height) & 1;
  }
  PageImage out(out_w, out_h, img.dpi, 255);
  out.page = img.page;
  out.fixture_id = img.fixture_id;
  double icx = img.width / 2.0, icy = img.height / 2.0;
  double ocx = out_w / 2.0, ocy = out_h / 2.0;
  for (int y = 0; y < out_h; ++y) {
    double v = y + 0.5 - ocy;
    for (int x = 0; x < out_w; ++x) {
      double u = x + 0.5 - ocx;
      double su = u * c - v * s;
      double sv = u * s + v * c;
      out.at(x, y) = clamp_u8(sample_bicubic(img, icx + su - 0.5, icy + sv - 0.5, 255.0));
    }
  }
  return out;
}

double otsu_between_class_variance(const std::vector<long long>& hist, int t) {
  long double n0 = 0, s0 = 0, n = 0, s = 0;
  for (int v = 0; v < 256; ++v) {
    n += hist[v];
    s += static_cast<long double>(hist[v]) * v;
    if (v <= t) {
      n0 += hist[v];
      s0 += static_cast<long double>(hist[v]) * v;
    }
  }
  long double n1 = n - n0;
  if (n0 == 0 || n1 == 0) return 0.0;
  // w0*w1*(mu0-mu1)^2 == (n*s0 - n0*s)^2 / (n^2 * n0 * n1)
  long double d = n * s0 - n0 * s;
  return static_cast<double>(d * d / (n * n * n0 * n1));
}

Binarized binarize_otsu(const PageImage& img) {
  auto hist = histogram(img);
  Binarized out;
  int distinct = static_cast<int>(std::count_if(hist.begin(), hist.end(), [](long long c) { return c > 0; }));
  if (distinct <= 1) {
    out.image = img;
    out.threshold = 128;
    out.degenerate = true;
    return out;
  }
  // Incremental sums; same closed form as otsu_between_class_variance.
  long double n = static_cast<long double>(img.pixels.size()), s = 0;
  for (int v = 0; v < 256; ++v) s += static_cast<long double>(hist[v]) * v;
  long double n0 = 0, s0 = 0, best = -1;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += static_cast<long double>(hist[t]) * t;
    long double n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    long double d = n * s0 - n0 * s;
    long double var = d * d / (n * n * n0 * n1);
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  out.threshold = best_t;
  out.image = img;
  for (auto& p : out.image.pixels) p = p <= best_t ? 0 : 255;
  return out;
}

PageImage contrast_stretch(const PageImage& img, double p_low, double p_high) {
  if (!(p_low < p_high)) throw Error(ErrorCode::InvalidArgument, "p_low must be below p_high");
  int lo = percentile(img, p_low), hi = percentile(img, p_high);
  if (lo == hi) throw Error(ErrorCode::DegenerateHistogram, "percentiles coincide at " + std::to_string(lo));
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[v] = clamp_u8((v - lo) * 255.0 / (hi - lo));
  PageImage out = img;
  for (auto& p : out.pixels) p = lut[p];
  return out;
}

PageImage normalize_dpi(const PageImage& img, int target) {
  if (img.dpi <= 0) throw Error(ErrorCode::InvalidArgument, "image DPI unknown");
  if (target <= 0) throw Error(ErrorCode::InvalidArgument, "target DPI must be positive");
  if (img.dpi == target) return img;
  double scale = static_cast<double>(target) / img.dpi;
  int out_w = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  int out_h = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  PageImage out(out_w, out_h, target, 255);
  out.page = img.page;
  out.fixture_id = img.fixture_id;
  double sx_scale = static_cast<double>(img.width) / out_w;
  double sy_scale = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double sy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, img.height - 1.0);
    for (int x = 0; x < out_w; ++x) {
      double sx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, img.width - 1.0);
      out.at(x, y) = clamp_u8(sample_bilinear(img, sx, sy, 255.0));
    }
  }
  return out;
}

AdaptiveResult preprocess_adaptive(const PageImage& img, const PreprocessOptions& opts) {
  AdaptiveResult r;
  r.image = normalize_dpi(img, opts.target_dpi);
  r.applied.push_back("normalize_dpi");
  if (r.image.width < 32 || r.image.height < 32)
    throw Error(ErrorCode::ImageTooSmall, std::to_string(r.image.width) + "x" + std::to_string(r.image.height));

  r.quality.sharpness = laplacian_variance(r.image);
  r.quality.contrast = (percentile(r.image, 98) - percentile(r.image, 2)) / 255.0;
  r.quality.noise = isolated_pixel_fraction(r.image);
  try {
    r.quality.skew_deg = estimate_skew_hough(r.image);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BlankPage) throw;
    r.blank = true;
    r.quality.score = quality_score(r.quality.sharpness, r.quality.contrast, 0.0, opts);
    return r;
  }
  r.quality.score = quality_score(r.quality.sharpness, r.quality.contrast, r.quality.skew_deg, opts);

  double skew = r.quality.skew_deg;
  double contrast = r.quality.contrast;
  if (r.quality.sharpness < opts.sharpness_gate || r.quality.noise > opts.noise_gate) {
    r.image = denoise_median(r.image, 1);
    r.applied.push_back("denoise");
    // Noise distorts the accumulator; measure again on the cleaned page.
    try {
      skew = estimate_skew_hough(r.image);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BlankPage) throw;
      r.blank = true;
      return r;
    }
    contrast = (percentile(r.image, 98) - percentile(r.image, 2)) / 255.0;
  }
  if (std::abs(skew) > opts.skew_gate_deg) {
    r.image = rotate(r.image, -skew);
    r.applied.push_back("deskew");
  }
  // A sparse page can have under 2% ink, leaving p2 == p98 and nothing to stretch.
  if (contrast < opts.contrast_gate && percentile(r.image, 2) != percentile(r.image, 98)) {
    r.image = contrast_stretch(r.image);
    r.applied.push_back("contrast_stretch");
  }
  r.image = binarize_otsu(r.image).image;
  r.applied.push_back("binarize");
  return r;
}

}  // namespace invx
