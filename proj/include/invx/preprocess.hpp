#pragma once

#include <string>
#include <vector>

#include "invx/image.hpp"

namespace invx {

struct QualityReport {
  double sharpness = 0;  // variance of the 3x3 Laplacian response
  double contrast = 0;   // (p98 - p2) / 255
  double skew_deg = 0;
  double noise = 0;      // fraction of isolated outlier pixels
  double score = 0;
};

/// Tunables for the adaptive chain. The defaults are the documented gates.
struct PreprocessOptions {
  int target_dpi = 300;
  double sharpness_gate = 200;  // denoise below this
  double noise_gate = 0.01;     // or above this isolated-pixel fraction
  double skew_gate_deg = 0.3;   // deskew above this |skew|
  double contrast_gate = 0.5;   // stretch below this
  double w_sharpness = 0.5;
  double w_contrast = 0.3;
  double w_skew = 0.2;
};

/// clamp(ws*min(sharpness/500,1) + wc*contrast + wk*(1-min(|skew|/15,1)), 0, 1)
double quality_score(double sharpness, double contrast, double skew_deg, const PreprocessOptions& opts = {});

/// Throws ImageTooSmall below 32x32. A blank page reports skew 0.
QualityReport assess_quality(const PageImage& img, const PreprocessOptions& opts = {});

/// Variance of the 3x3 Laplacian over interior pixels.
double laplacian_variance(const PageImage& img);
/// Smallest value v with at least p% of pixels <= v.
int percentile(const PageImage& img, double p);
double isolated_pixel_fraction(const PageImage& img);

/// Median of the (2r+1)^2 edge-clamped neighborhood; radius must be 1 or 2.
PageImage denoise_median(const PageImage& img, int radius = 1);

/// Angle in [-15, 15] degrees (0.1 degree steps) whose Hough accumulator over
/// bottom-edge pixels of the Otsu-binarized page peaks. Positive means the
/// content is rotated counter-clockwise. Throws BlankPage.
double estimate_skew_hough(const PageImage& img);

/// Bicubic rotation about the center, counter-clockwise for positive angles,
/// canvas grown to the rotated bounding box, background 255.
PageImage rotate(const PageImage& img, double degrees);

struct Binarized {
  PageImage image;
  int threshold = 128;
  bool degenerate = false;
};

/// Otsu threshold (ties to the smallest t); pixels <= t become 0, others 255.
/// A constant image is returned unchanged with threshold 128 and `degenerate`.
Binarized binarize_otsu(const PageImage& img);
/// Between-class variance w0*w1*(mu0-mu1)^2 for threshold t (class 0 = v<=t).
double otsu_between_class_variance(const std::vector<long long>& histogram, int t);
std::vector<long long> histogram(const PageImage& img);

/// Linear map of [P(p_low), P(p_high)] onto [0,255], clamped. Throws
/// DegenerateHistogram when both percentiles coincide.
PageImage contrast_stretch(const PageImage& img, double p_low = 2, double p_high = 98);

/// Bilinear rescale by target/dpi; identity when equal.
PageImage normalize_dpi(const PageImage& img, int target = 300);

struct AdaptiveResult {
  PageImage image;
  std::vector<std::string> applied;
  QualityReport quality;
  bool blank = false;
};

/// normalize_dpi -> denoise (gated) -> deskew (gated) -> contrast_stretch
/// (gated) -> binarize. A blank page stops after normalize_dpi.
AdaptiveResult preprocess_adaptive(const PageImage& img, const PreprocessOptions& opts = {});

}  // namespace invx
