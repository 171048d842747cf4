#include <set>

#include "invx/error.hpp"
#include "invx/eval.hpp"
#include "invx/image.hpp"
#include "invx/ingest.hpp"
#include "support.hpp"

namespace invx {
namespace {

using test::as_bytes;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

TEST(DetectFormat, MagicBytes) {
  EXPECT_EQ(detect_format(as_bytes("%PDF-1.4\nxxxxxxxx")), DocFormat::pdf);
  EXPECT_EQ(detect_format(as_bytes("\x89PNG\r\n\x1a\nxxxxxxxx")), DocFormat::png);
  EXPECT_EQ(detect_format(as_bytes("\xFF\xD8\xFFxxxxxxxxxxxx")), DocFormat::jpeg);
  EXPECT_EQ(detect_format(as_bytes(std::string("II*\0xxxxxxxx", 12))), DocFormat::tiff);
  EXPECT_EQ(code_of([] { detect_format(Bytes(1024, 0)); }), ErrorCode::UnknownFormat);
  EXPECT_EQ(code_of([] { detect_format(as_bytes("%PDF")); }), ErrorCode::UnknownFormat);
}

TEST(DetectFormatProperty, DependsOnlyOnFirst16Bytes) {
  std::string head = "%PDF-1.7\n%abcdefg";
  head.resize(16);
  for (int tail = 0; tail < 50; ++tail) {
    std::string a = head + std::string(static_cast<std::size_t>(tail), 'x');
    std::string b = head + std::string(static_cast<std::size_t>(tail), '\0');
    EXPECT_EQ(detect_format(as_bytes(a)), detect_format(as_bytes(b)));
  }
}

TEST(Document, HashMatchesBytes) {
  auto doc = make_document(as_bytes("%PDF-1.4 hello world"), "x.pdf");
  EXPECT_EQ(doc.content_hash, sha256_hex(doc.bytes));
  EXPECT_EQ(doc.format, DocFormat::pdf);
  // Published SHA-256 test vector.
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(EmbeddedText, GeneratorRoundTrip) {
  std::vector<TextRun> runs{{0, 0, "INVOICE No: 42"}, {2, 10, "Total: 5.00"}};
  auto pdf = write_text_pdf(runs);
  auto pages = extract_embedded_text(make_document(as_bytes(pdf), "a.pdf"), 300);
  ASSERT_EQ(pages.size(), 1u);
  auto truth = truth_tokens(runs, 300);
  ASSERT_EQ(pages[0].size(), truth.size());
  std::vector<std::string> first;
  for (std::size_t i = 0; i < 3; ++i) first.push_back(pages[0][i].text);
  EXPECT_EQ(first, (std::vector<std::string>{"INVOICE", "No:", "42"}));
  EXPECT_LT(pages[0][0].bbox.x0, pages[0][1].bbox.x0);
  EXPECT_LT(pages[0][1].bbox.x0, pages[0][2].bbox.x0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_EQ(pages[0][i].text, truth[i].text);
    EXPECT_NEAR(pages[0][i].bbox.x0, truth[i].bbox.x0, 1.0);
    EXPECT_EQ(pages[0][i].confidence, 1.0);
    EXPECT_EQ(pages[0][i].source, "embedded");
    EXPECT_TRUE(pages[0][i].bbox.valid());
  }
}

TEST(EmbeddedText, CorpusTokensMatchTruth) {
  const auto& corpus = test::shared_corpus();
  for (int i = 0; i < 3; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "inv-%04d", i);
    auto doc = load_document(corpus / id / "invoice.pdf");
    auto pages = extract_embedded_text(doc, 300);
    ASSERT_EQ(pages.size(), 1u);
    std::vector<Token> flat = pages[0];
    EXPECT_EQ(tokens_to_text(flat), truth_text(corpus / id));
  }
}

TEST(EmbeddedText, ImageOnlyPdfHasNoText) {
  PageImage img(85, 110, 10, 255);
  auto pdf = write_image_pdf(img);
  auto pages = extract_embedded_text(make_document(as_bytes(pdf), "i.pdf"), 300);
  for (const auto& p : pages) EXPECT_TRUE(p.empty());
}

TEST(EmbeddedText, TruncatedPdfIsCorrupt) {
  auto pdf = write_text_pdf({{0, 0, "hello"}});
  std::string cut = pdf.substr(0, pdf.size() / 3);
  EXPECT_EQ(code_of([&] { extract_embedded_text(make_document(as_bytes(cut), "t.pdf")); }), ErrorCode::CorruptPdf);
}

TEST(EmbeddedText, EncryptedPdfRejected) {
  auto pdf = write_text_pdf({{0, 0, "hello"}});
  auto pos = pdf.find("/Root 1 0 R");
  pdf.insert(pos, "/Encrypt 9 0 R ");
  EXPECT_EQ(code_of([&] { extract_embedded_text(make_document(as_bytes(pdf), "e.pdf")); }), ErrorCode::EncryptedPdf);
}

TEST(ReadingOrderProperty, SortingOutputIsNoOp) {
  const auto& corpus = test::shared_corpus();
  for (const auto& e : std::filesystem::directory_iterator(corpus)) {
    if (!std::filesystem::exists(e.path() / "invoice.pdf")) continue;
    auto pages = extract_embedded_text(load_document(e.path() / "invoice.pdf"), 300);
    for (const auto& p : pages) {
      auto sorted = p;
      sort_reading_order(sorted, p.empty() ? 0 : p.front().id);
      ASSERT_EQ(sorted, p) << e.path();
    }
  }
}

TEST(ContentHashProperty, DistinctFilesHashDistinctly) {
  std::set<std::string> hashes;
  int pdfs = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(test::shared_corpus()))
    if (e.path().filename() == "invoice.pdf") {
      ++pdfs;
      auto doc = load_document(e.path());
      EXPECT_EQ(doc.content_hash, sha256_hex(read_file(e.path())));
      hashes.insert(doc.content_hash);
    }
  EXPECT_EQ(static_cast<int>(hashes.size()), pdfs);
  EXPECT_GT(pdfs, 0);
}

TEST(Rasterize, PngKeepsDpi) {
  PageImage img(200, 100, 300, 255);
  img.at(5, 5) = 0;
  auto png = encode_png(img);
  auto pages = rasterize(make_document(png, "p.png"), 300);
  ASSERT_EQ(pages.size(), 1u);
  EXPECT_EQ(pages[0].dpi, 300);
  EXPECT_EQ(pages[0].at(5, 5), 0);
}

TEST(Rasterize, EstimatesLetterDpi) {
  EXPECT_EQ(estimate_dpi(2550, 3300), 300);
  EXPECT_EQ(estimate_dpi(2481, 3508), 300);  // A4 at 300 dpi
}

TEST(Rasterize, TextPdfNeedsRasterizer) {
  auto pdf = write_text_pdf({{0, 0, "hello"}});
  RasterOptions none;
  ::unsetenv("RASTERIZER_CMD");
  EXPECT_EQ(code_of([&] { rasterize(make_document(as_bytes(pdf), "t.pdf"), 300, none); }),
            ErrorCode::RasterizerUnavailable);
}

TEST(Rasterize, ImageOnlyPdfDecodesDirectly) {
  PageImage img(850, 1100, 100, 255);
  img.fixture_id = "inv-0042";
  for (int x = 100; x < 200; ++x) img.at(x, 50) = 0;
  auto pdf = write_image_pdf(img);
  auto pages = rasterize(make_document(as_bytes(pdf), "i.pdf"), 100);
  ASSERT_EQ(pages.size(), 1u);
  EXPECT_TRUE(pages[0].same_pixels(img));
  EXPECT_EQ(pages[0].dpi, 100);
  EXPECT_EQ(pages[0].fixture_id, "inv-0042");
}

TEST(Rasterize, CorruptPngIsDecodeError) {
  std::string png = "\x89PNG\r\n\x1a\n garbage garbage";
  EXPECT_EQ(code_of([&] { rasterize(make_document(as_bytes(png), "c.png"), 300); }), ErrorCode::DecodeError);
}

}  // namespace
}  // namespace invx
