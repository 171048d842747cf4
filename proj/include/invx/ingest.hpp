#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invx/image.hpp"
#include "invx/model.hpp"
#include "invx/util.hpp"

namespace invx {

enum class DocFormat { pdf, png, jpeg, tiff, unknown };
std::string_view to_string(DocFormat f) noexcept;

struct RawDocument {
  Bytes bytes;
  DocFormat format = DocFormat::unknown;
  std::string source_path;
  std::string content_hash;  // SHA-256 hex of bytes
};

/// Magic-byte sniffing over the first 16 bytes. Throws UnknownFormat (also for
/// inputs shorter than 8 bytes).
DocFormat detect_format(std::span<const std::uint8_t> bytes);

RawDocument make_document(Bytes bytes, std::string source_path);
RawDocument load_document(const std::filesystem::path& path);

/// Embedded text per page in reading order, bboxes in pixels at `dpi`. Token
/// ids are unique across the document. A PDF without text operators yields an
/// empty list for every page.
std::vector<std::vector<Token>> extract_embedded_text(const RawDocument& doc, int dpi = 300);

/// Sorts tokens by (page, line band, x0) and renumbers ids from `first_id`.
void sort_reading_order(std::vector<Token>& tokens, int first_id = 0);

/// Line band index of each token after `sort_reading_order`.
std::vector<int> line_bands(const std::vector<Token>& tokens);

/// Plain text of tokens: one output line per line band, words joined by one
/// space, pages separated by a form feed line.
std::string tokens_to_text(const std::vector<Token>& tokens);

struct RasterOptions {
  /// Template with {input} {dpi} {outdir}; empty falls back to the
  /// RASTERIZER_CMD environment variable.
  std::string rasterizer_cmd;
};

/// One grayscale page per input page. Image files pass through with their DPI
/// metadata (or an estimate). PDF pages that draw a single embedded image are
/// decoded directly; other PDFs need an external rasterizer.
std::vector<PageImage> rasterize(const RawDocument& doc, int dpi, const RasterOptions& opts = {});

}  // namespace invx
