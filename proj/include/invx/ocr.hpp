#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "invx/image.hpp"
#include "invx/ingest.hpp"
#include "invx/model.hpp"
#include "invx/preprocess.hpp"

namespace invx {

class OcrEngine {
 public:
  virtual ~OcrEngine() = default;
  virtual std::string id() const = 0;
  /// Tokens with confidence in [0,1] and valid bboxes in the image's pixels.
  virtual std::vector<Token> recognize(const PageImage& img) = 0;
  /// Serial engines get their pages one at a time.
  virtual bool serial() const { return false; }
};

inline constexpr const char* kEmbeddedSource = "embedded";

struct CascadeStep {
  std::string source;  // "embedded" or an engine id
  double gate = 0.0;   // minimum mean confidence to stop here

  friend bool operator==(const CascadeStep&, const CascadeStep&) = default;
};

struct CascadePlan {
  std::vector<CascadeStep> steps;
};

struct OcrAttempt {
  std::string source;
  std::size_t token_count = 0;
  double mean_confidence = 0.0;
  bool accepted = false;
  double elapsed_ms = 0.0;
  std::string error;
};

struct OcrTrace {
  std::vector<OcrAttempt> attempts;
  const OcrAttempt* accepted() const;
};

/// Holds the registered engines and which ones act as primary/secondary.
class EngineRegistry {
 public:
  void add(std::shared_ptr<OcrEngine> engine);
  void set_order(std::string primary, std::string secondary = {});
  std::shared_ptr<OcrEngine> find(const std::string& id) const;
  bool empty() const { return engines_.empty(); }
  const std::string& primary() const { return primary_; }
  const std::string& secondary() const { return secondary_; }

 private:
  std::map<std::string, std::shared_ptr<OcrEngine>> engines_;
  std::string primary_;
  std::string secondary_;
};

inline constexpr std::size_t kEmbeddedCharsPerPage = 32;

/// Embedded text with >= 32 chars/page wins outright; otherwise the primary
/// engine gated at `escalation_threshold`, then the secondary at gate 0. Poor
/// quality (score < 0.4) puts the secondary first.
CascadePlan select_plan(const RawDocument& doc, const std::vector<std::vector<Token>>& embedded,
                        const QualityReport& quality, double escalation_threshold,
                        const EngineRegistry& engines);

struct CascadeResult {
  std::vector<Token> tokens;
  OcrTrace trace;
};

/// Executes the plan in order; the first step meeting its gate is accepted.
/// When no step meets its gate (a later step errored) the best successful
/// attempt is accepted. Throws AllEnginesFailed when every step errored.
CascadeResult run_cascade(const CascadePlan& plan, const std::vector<PageImage>& pages,
                          const std::vector<std::vector<Token>>& embedded, const EngineRegistry& engines);

/// Arithmetic mean of token confidences, 0 for no tokens.
double mean_confidence(const std::vector<Token>& tokens);

/// Emits the ground-truth tokens of the fixture named in the image metadata,
/// at confidence 1.0. Sidecars live at <dir>/<fixture_id>/truth.json.
class MockPerfectEngine : public OcrEngine {
 public:
  explicit MockPerfectEngine(std::filesystem::path sidecar_dir, std::string id = "mock-perfect");
  std::string id() const override { return id_; }
  std::vector<Token> recognize(const PageImage& img) override;

 private:
  std::filesystem::path dir_;
  std::string id_;
};

/// Ground-truth tokens with each character replaced (seeded) with probability
/// `rate`; every token reports confidence 1 - rate.
class MockNoisyEngine : public OcrEngine {
 public:
  MockNoisyEngine(std::filesystem::path sidecar_dir, double rate, std::uint64_t seed = 1,
                  std::string id = "mock-noisy");
  std::string id() const override { return id_; }
  std::vector<Token> recognize(const PageImage& img) override;

 private:
  std::filesystem::path dir_;
  double rate_;
  std::uint64_t seed_;
  std::string id_;
};

/// Runs an external OCR command. The template may use {input.png},
/// {output.tsv} and {output_base} (the tsv path without extension, which is
/// what the Tesseract CLI expects).
class ExternalProcessEngine : public OcrEngine {
 public:
  ExternalProcessEngine(std::string command_template, std::string id = "external");
  std::string id() const override { return id_; }
  std::vector<Token> recognize(const PageImage& img) override;
  bool serial() const override { return true; }

 private:
  std::string template_;
  std::string id_;
};

/// Parses either the 12-column Tesseract TSV (level..text, word rows only) or
/// the 7-column page/x0/y0/x1/y1/conf/text layout. conf 0-100 maps to 0-1.
std::vector<Token> parse_ocr_tsv(std::string_view tsv, const std::string& source);

/// Ground-truth tokens stored in a corpus sidecar, scaled to `dpi`.
std::vector<Token> load_sidecar_tokens(const std::filesystem::path& sidecar_dir, const std::string& fixture_id,
                                       int page, int dpi);

}  // namespace invx
