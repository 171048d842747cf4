#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "invx/image.hpp"
#include "invx/model.hpp"
#include "invx/pipeline.hpp"

namespace invx {

struct Degradation {
  double skew_deg = 0;
  double noise = 0;  // salt-and-pepper probability per pixel

  /// "none", "skew:<deg>", "noise:<p>", "both:<deg>:<p>".
  static Degradation parse(std::string_view text);
};

struct CorpusOptions {
  std::uint64_t seed = 7;
  int n = 10;
  Degradation degradation;
  bool images = true;             // page.png per invoice
  bool image_only_pdf = false;    // also invoice_image.pdf wrapping page.png
  double llm_error_rate = 0.04;   // fixtures with one wrong required field
  double llm_refusal_rate = 0.02; // fixtures that are not JSON at all
  int dpi = 300;
};

/// A positioned run of text on the fixed character grid.
struct TextRun {
  int row = 0;
  int col = 0;
  std::string text;
};

struct SyntheticInvoice {
  std::string id;
  int template_id = 0;
  std::map<CanonicalField, std::string> truth;    // normalized canonical strings
  std::map<CanonicalField, std::string> printed;  // as printed on the page
  std::vector<RawLineItem> line_items;            // printed strings
  std::vector<TextRun> runs;
  std::vector<std::vector<int>> blocks;           // run indices per logical block
};

SyntheticInvoice make_synthetic_invoice(std::uint64_t seed, int index);

/// Courier 10 pt, uncompressed content stream, one text object per run.
std::string write_text_pdf(const std::vector<TextRun>& runs);
/// Single DeviceGray Flate image filling a Letter page.
std::string write_image_pdf(const PageImage& page);
PageImage render_runs(const std::vector<TextRun>& runs, int dpi, const std::string& fixture_id);
/// Word tokens of the rendered page, bboxes in pixels at `dpi`.
std::vector<Token> truth_tokens(const std::vector<TextRun>& runs, int dpi);
PageImage degrade(const PageImage& img, const Degradation& d, std::uint64_t seed);

/// Writes <dir>/<id>/{truth.json, invoice.pdf, page.png} and
/// <dir>/llm_fixtures/<sha256(prompt)>.txt. Returns the invoice ids.
std::vector<std::string> gen_corpus(const std::filesystem::path& dir, const CorpusOptions& opts);

/// 1 - levenshtein(ref, hyp) / |ref| over bytes, floored at 0. Throws EmptyReference.
double char_accuracy(std::string_view ref, std::string_view hyp);
std::size_t levenshtein(std::string_view a, std::string_view b);

struct FieldCount {
  int correct = 0;
  int total = 0;
  double rate() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct LatencyStats {
  double p50 = 0, p95 = 0, mean = 0;
};
LatencyStats latency_stats(std::vector<double> ms);

struct MetricsReport {
  int invoices = 0;
  int processed = 0;
  int failed = 0;
  double char_accuracy = 0;
  std::map<std::string, FieldCount> per_field;
  FieldCount required_micro;
  FieldCount all_micro;
  FieldCount invoice_level;  // all required fields correct
  int needs_review = 0;
  double intervention_rate = 0;
  LatencyStats latency;
  std::vector<double> latencies_ms;

  std::string to_json() const;
  std::string to_csv() const;
};

/// Runs the pipeline over every <dir>/<id>/invoice.pdf and compares with
/// truth.json. Writes metrics.json and metrics.csv into `report_dir` when set.
MetricsReport score_run(const std::filesystem::path& corpus, const PipelineConfig& cfg, const PipelineDeps& deps,
                        const std::optional<std::filesystem::path>& report_dir = std::nullopt);

struct OcrScore {
  double mean_char_accuracy = 0;
  std::vector<double> per_page;
  std::vector<std::vector<std::string>> applied;
};

/// page.png -> preprocess_adaptive -> OCR cascade, scored against the truth text.
OcrScore score_ocr(const std::filesystem::path& corpus, const EngineRegistry& engines, const PipelineConfig& cfg,
                   const PreprocessOptions& popts = {});

/// Text of the truth tokens in reading order, as the pipeline would see it.
std::string truth_text(const std::filesystem::path& invoice_dir);

}  // namespace invx
