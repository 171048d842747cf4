#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "invx/ingest.hpp"
#include "invx/layout.hpp"
#include "invx/llm.hpp"
#include "invx/model.hpp"
#include "invx/ocr.hpp"
#include "invx/preprocess.hpp"
#include "invx/validate.hpp"

namespace invx {

struct PipelineDeps {
  LlmClient* llm = nullptr;  // null runs the regex + layout path only
  const EngineRegistry* engines = nullptr;
  Lexicon lexicon = Lexicon::builtin();
  RasterOptions raster;
  PreprocessOptions preprocess;
  ScoringConstants scoring;
  LayoutParams layout;
};

struct StageTiming {
  std::string stage;
  double ms = 0;
};

struct ProcessResult {
  std::string source_path;
  std::string raw_hash;
  ExtractedInvoice invoice;
  std::vector<Token> tokens;
  std::string text;
  OcrTrace ocr_trace;
  std::vector<std::string> preprocess_applied;
  std::vector<LlmAttempt> llm_attempts;
  std::string llm_error;  // "Code: message" when the LLM step produced nothing
  std::vector<StageTiming> timings;
  double total_ms = 0;
};

/// Ingest through scoring; no dedup, anomaly or status decision. `on_stage`
/// hears "preprocessed" after OCR, "extracted" after field fusion and
/// "validated" after scoring.
ProcessResult extract_document(const RawDocument& doc, const PipelineConfig& cfg, const PipelineDeps& deps,
                               const std::function<void(std::string_view)>& on_stage = {});

/// Line items read from a detected table using its header row keywords.
std::vector<RawLineItem> table_line_items(const TableRegion& table, std::span<const Token> tokens);

struct Decision {
  DedupResult dedup = DedupResult::fresh;
  AnomalyResult anomaly;
  AuditEvent event;
};

/// Dedup, anomaly and finalize; records hashes and vendor history for
/// non-duplicates. Callers serialize access to the index and history.
Decision decide(ExtractedInvoice& inv, const std::string& raw_hash, DedupIndex& index, VendorHistory& history,
                double tau);

/// Regular files of each directory (sorted) plus plain file arguments.
std::vector<std::filesystem::path> expand_inputs(const std::vector<std::string>& inputs);

struct BatchError {
  std::string path;
  std::string message;
};

struct BatchOutcome {
  std::vector<ProcessResult> results;  // decided, in input order
  std::vector<BatchError> errors;
};

BatchOutcome run_batch(const std::vector<std::filesystem::path>& files, const PipelineConfig& cfg,
                       const PipelineDeps& deps, DedupIndex& index, VendorHistory& history,
                       const std::function<void(const BatchError&)>& on_error = {});

}  // namespace invx
