#include "invx/ingest.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "invx/error.hpp"
#include "invx/pdf.hpp"

namespace invx {

std::string_view to_string(DocFormat f) noexcept {
  switch (f) {
    case DocFormat::pdf: return "pdf";
    case DocFormat::png: return "png";
    case DocFormat::jpeg: return "jpeg";
    case DocFormat::tiff: return "tiff";
    case DocFormat::unknown: return "unknown";
  }
  return "unknown";
}

DocFormat detect_format(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(ErrorCode::UnknownFormat, "fewer than 8 bytes");
  auto head = bytes.first(std::min<std::size_t>(bytes.size(), 16));
  auto starts = [&](std::initializer_list<std::uint8_t> magic) {
    return std::equal(magic.begin(), magic.end(), head.begin());
  };
  if (starts({'%', 'P', 'D', 'F', '-'})) return DocFormat::pdf;
  if (starts({0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A})) return DocFormat::png;
  if (starts({0xFF, 0xD8, 0xFF})) return DocFormat::jpeg;
  if (starts({'I', 'I', 0x2A, 0x00}) || starts({'M', 'M', 0x00, 0x2A})) return DocFormat::tiff;
  throw Error(ErrorCode::UnknownFormat, "unrecognized magic bytes");
}

RawDocument make_document(Bytes bytes, std::string source_path) {
  RawDocument doc;
  doc.format = detect_format(bytes);
  doc.content_hash = sha256_hex(bytes);
  doc.bytes = std::move(bytes);
  doc.source_path = std::move(source_path);
  return doc;
}

RawDocument load_document(const std::filesystem::path& path) {
  return make_document(read_file(path), path.string());
}

namespace {

// Assigns line bands to tokens ordered by center-y. A token joins the current
// band when its vertical overlap with the band is at least half the shorter
// height.
std::vector<int> band_assignment(const std::vector<Token>& tokens, const std::vector<std::size_t>& order) {
  std::vector<int> band(tokens.size(), 0);
  int current = -1;
  double b0 = 0, b1 = 0;
  int page = -1;
  for (std::size_t idx : order) {
    const Token& t = tokens[idx];
    double overlap = std::min(b1, t.bbox.y1) - std::max(b0, t.bbox.y0);
    double shorter = std::min(b1 - b0, t.bbox.height());
    if (current < 0 || t.page != page || overlap < 0.5 * shorter) {
      ++current;
      b0 = t.bbox.y0;
      b1 = t.bbox.y1;
      page = t.page;
    } else {
      b0 = std::min(b0, t.bbox.y0);
      b1 = std::max(b1, t.bbox.y1);
    }
    band[idx] = current;
  }
  return band;
}

std::vector<std::size_t> center_order(const std::vector<Token>& tokens) {
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tokens[a].page != tokens[b].page) return tokens[a].page < tokens[b].page;
    if (tokens[a].bbox.cy() != tokens[b].bbox.cy()) return tokens[a].bbox.cy() < tokens[b].bbox.cy();
    return tokens[a].bbox.x0 < tokens[b].bbox.x0;
  });
  return order;
}

}  // namespace

std::vector<int> line_bands(const std::vector<Token>& tokens) {
  return band_assignment(tokens, center_order(tokens));
}

void sort_reading_order(std::vector<Token>& tokens, int first_id) {
  std::vector<int> band = line_bands(tokens);
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tokens[a].page != tokens[b].page) return tokens[a].page < tokens[b].page;
    if (band[a] != band[b]) return band[a] < band[b];
    return tokens[a].bbox.x0 < tokens[b].bbox.x0;
  });
  std::vector<Token> sorted;
  sorted.reserve(tokens.size());
  for (std::size_t i : order) sorted.push_back(std::move(tokens[i]));
  for (std::size_t i = 0; i < sorted.size(); ++i) sorted[i].id = first_id + static_cast<int>(i);
  tokens = std::move(sorted);
}

std::string tokens_to_text(const std::vector<Token>& tokens) {
  std::vector<int> band = line_bands(tokens);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) {
      if (tokens[i].page != tokens[i - 1].page)
        out += "\n\f\n";
      else if (band[i] != band[i - 1])
        out += "\n";
      else
        out += " ";
    }
    out += tokens[i].text;
  }
  return out;
}

std::vector<std::vector<Token>> extract_embedded_text(const RawDocument& doc, int dpi) {
  if (doc.format != DocFormat::pdf)
    throw Error(ErrorCode::InvalidArgument, "embedded text extraction requires a PDF");
  pdf::Reader reader(doc.bytes);
  std::vector<std::vector<Token>> pages(reader.page_count());
  int next_id = 0;
  for (std::size_t p = 0; p < reader.page_count(); ++p) {
    pages[p] = reader.page_tokens(p, dpi);
    sort_reading_order(pages[p], next_id);
    next_id += static_cast<int>(pages[p].size());
  }
  return pages;
}

namespace {

std::vector<PageImage> run_external_rasterizer(const RawDocument& doc, int dpi, const std::string& tmpl) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / ("invx-raster-" + make_uuid());
  fs::create_directories(dir / "out");
  fs::path input = dir / "input.pdf";
  write_file_atomic(input, std::string_view(reinterpret_cast<const char*>(doc.bytes.data()), doc.bytes.size()));
  std::string cmd = tmpl;
  auto replace = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = cmd.find(key)) != std::string::npos;) cmd.replace(pos, key.size(), value);
  };
  replace("{input}", input.string());
  replace("{dpi}", std::to_string(dpi));
  replace("{outdir}", (dir / "out").string());
  int rc = std::system(cmd.c_str());
  std::vector<PageImage> pages;
  if (rc == 0) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "out"))
      if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Bytes b = read_file(f);
      DecodedImage d = decode_png(b);
      d.image.dpi = dpi;
      d.image.page = static_cast<int>(pages.size());
      pages.push_back(std::move(d.image));
    }
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (rc != 0) throw Error(ErrorCode::DecodeError, "rasterizer command exited with status " + std::to_string(rc));
  if (pages.empty()) throw Error(ErrorCode::DecodeError, "rasterizer produced no pages");
  return pages;
}

}  // namespace

std::vector<PageImage> rasterize(const RawDocument& doc, int dpi, const RasterOptions& opts) {
  switch (doc.format) {
    case DocFormat::png: {
      DecodedImage d = decode_png(doc.bytes);
      return {std::move(d.image)};
    }
    case DocFormat::jpeg: {
      DecodedImage d = decode_jpeg(doc.bytes);
      return {std::move(d.image)};
    }
    case DocFormat::tiff:
      throw Error(ErrorCode::DecodeError, "TIFF input requires an external converter (not built in)");
    case DocFormat::pdf: {
      pdf::Reader reader(doc.bytes);
      std::vector<PageImage> pages;
      bool all_images = true;
      for (std::size_t p = 0; p < reader.page_count() && all_images; ++p) {
        auto img = reader.page_image(p);
        if (!img) {
          all_images = false;
          break;
        }
        pages.push_back(std::move(img->image));
      }
      if (all_images) return pages;
      std::string tmpl = opts.rasterizer_cmd;
      if (tmpl.empty())
        if (const char* env = std::getenv("RASTERIZER_CMD")) tmpl = env;
      if (tmpl.empty())
        throw Error(ErrorCode::RasterizerUnavailable, "PDF page rendering needs RASTERIZER_CMD");
      return run_external_rasterizer(doc, dpi, tmpl);
    }
    case DocFormat::unknown: break;
  }
  throw Error(ErrorCode::UnknownFormat, "cannot rasterize unknown format");
}

}  // namespace invx
