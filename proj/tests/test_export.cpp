#include <zlib.h>

#include <json.hpp>
#include <random>
#include <set>

#include "invx/error.hpp"
#include "invx/export.hpp"
#include "support.hpp"

namespace invx {
namespace {

using F = CanonicalField;

FieldValue fv(F f, NormalizedValue v) {
  FieldValue x;
  x.field = f;
  x.raw_text = normalized_to_string(v);
  x.normalized = std::move(v);
  x.confidence = 0.9;
  return x;
}

ExtractedInvoice sample(const std::string& vendor = "Acme, Inc.") {
  ExtractedInvoice inv;
  inv.fields[F::invoice_number] = fv(F::invoice_number, std::string("INV-1"));
  inv.fields[F::invoice_date] = fv(F::invoice_date, Date{2024, 3, 4});
  inv.fields[F::vendor_name] = fv(F::vendor_name, vendor);
  inv.fields[F::total_amount] = fv(F::total_amount, Money{16500, "USD"});
  inv.fields[F::subtotal] = fv(F::subtotal, Money{15000, "USD"});
  inv.fields[F::tax_amount] = fv(F::tax_amount, Money{1500, "USD"});
  inv.fields[F::weight_kg] = fv(F::weight_kg, Decimal{2'500'000'000});
  inv.line_items = {LineItem{"Bolt \"M6\"", Decimal{2'000'000}, Money{5000, "USD"}, Money{10000, "USD"}}};
  inv.overall_confidence = 0.9125;
  inv.status = InvoiceStatus::auto_approved;
  return inv;
}

// RFC 4180 reader, written independently of the writer.
std::vector<std::vector<std::string>> parse_csv(std::string_view s) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  std::size_t i = 0;
  bool quoted = false, any = false;
  while (i < s.size()) {
    char c = s[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
    } else if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') {
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      ++i;
    } else {
      field += c;
    }
    ++i;
  }
  EXPECT_FALSE(quoted);
  EXPECT_TRUE(field.empty() && row.empty()) << "missing final CRLF";
  (void)any;
  return rows;
}

std::vector<std::vector<std::string>> source_grid(std::span<const ExtractedInvoice> invs) {
  auto schema = ExportSchema::standard();
  std::vector<std::vector<std::string>> grid{schema.columns};
  for (const auto& inv : invs) {
    std::vector<std::string> r;
    for (const auto& c : export_row(inv, schema)) r.push_back(c.text);
    grid.push_back(r);
  }
  return grid;
}

std::uint32_t u16(const std::string& b, std::size_t at) {
  return static_cast<unsigned char>(b[at]) | static_cast<unsigned char>(b[at + 1]) << 8;
}
std::uint32_t u32(const std::string& b, std::size_t at) { return u16(b, at) | u16(b, at + 2) << 16; }

// Walks the central directory, checks each local header and CRC.
std::map<std::string, std::string> unzip(const Bytes& bytes) {
  std::string b(bytes.begin(), bytes.end());
  std::map<std::string, std::string> out;
  if (b.size() < 22) {
    ADD_FAILURE() << "too short";
    return out;
  }
  std::size_t eocd = b.size() - 22;
  EXPECT_EQ(u32(b, eocd), 0x06054b50u);
  std::uint32_t count = u16(b, eocd + 10), cd_size = u32(b, eocd + 12), cd = u32(b, eocd + 16);
  EXPECT_EQ(cd + cd_size, eocd);
  for (std::uint32_t i = 0; i < count; ++i) {
    EXPECT_EQ(u32(b, cd), 0x02014b50u);
    std::uint32_t method = u16(b, cd + 10), crc = u32(b, cd + 16), csize = u32(b, cd + 20), usize = u32(b, cd + 24);
    std::uint32_t nlen = u16(b, cd + 28), xlen = u16(b, cd + 30), clen = u16(b, cd + 32), local = u32(b, cd + 42);
    std::string name = b.substr(cd + 46, nlen);
    EXPECT_EQ(method, 0u) << name;
    EXPECT_EQ(csize, usize);
    EXPECT_EQ(u32(b, local), 0x04034b50u);
    EXPECT_EQ(b.substr(local + 30, u16(b, local + 26)), name);
    std::size_t data = local + 30 + u16(b, local + 26) + u16(b, local + 28);
    std::string content = b.substr(data, usize);
    EXPECT_EQ(crc32(0L, reinterpret_cast<const Bytef*>(content.data()), static_cast<uInt>(content.size())), crc) << name;
    out[name] = content;
    cd += 46 + nlen + xlen + clen;
  }
  return out;
}

struct XmlNode {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::vector<XmlNode> children;
  std::string text;

  const XmlNode* child(const std::string& n) const {
    for (const auto& c : children)
      if (c.name == n) return &c;
    return nullptr;
  }
};

class XmlReader {
 public:
  explicit XmlReader(std::string_view s) : s_(s) {}
  XmlNode document() {
    skip_misc();
    XmlNode root = element();
    skip_misc();
    if (pos_ != s_.size()) fail("trailing content");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& why) { throw std::runtime_error("xml: " + why + " at " + std::to_string(pos_)); }
  void ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool starts(std::string_view t) const { return s_.substr(pos_, t.size()) == t; }
  void skip_misc() {
    for (;;) {
      ws();
      if (starts("<?")) {
        auto e = s_.find("?>", pos_);
        if (e == std::string_view::npos) fail("open declaration");
        pos_ = e + 2;
      } else {
        return;
      }
    }
  }
  std::string name() {
    std::size_t b = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == ':' || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '.'))
      ++pos_;
    if (b == pos_) fail("expected name");
    return std::string(s_.substr(b, pos_ - b));
  }
  std::string unescape(std::string_view raw) {
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      auto semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail("bad entity");
      auto ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") out += '&';
      else if (ent == "lt") out += '<';
      else if (ent == "gt") out += '>';
      else if (ent == "quot") out += '"';
      else if (ent == "apos") out += '\'';
      else if (!ent.empty() && ent[0] == '#') {
        long code = ent.size() > 1 && ent[1] == 'x' ? std::stol(std::string(ent.substr(2)), nullptr, 16)
                                                    : std::stol(std::string(ent.substr(1)));
        if (code >= 0x80) fail("non-ascii char ref");
        out += static_cast<char>(code);
      } else {
        fail("unknown entity");
      }
      i = semi;
    }
    return out;
  }
  XmlNode element() {
    if (!starts("<")) fail("expected element");
    ++pos_;
    XmlNode n;
    n.name = name();
    for (;;) {
      ws();
      if (starts("/>")) {
        pos_ += 2;
        return n;
      }
      if (starts(">")) {
        ++pos_;
        break;
      }
      std::string key = name();
      ws();
      if (!starts("=")) fail("expected =");
      ++pos_;
      ws();
      char q = s_[pos_];
      if (q != '"' && q != '\'') fail("expected quote");
      auto end = s_.find(q, pos_ + 1);
      if (end == std::string_view::npos) fail("open attribute");
      n.attrs[key] = unescape(s_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
    }
    for (;;) {
      if (pos_ >= s_.size()) fail("unclosed " + n.name);
      if (starts("</")) {
        pos_ += 2;
        if (name() != n.name) fail("mismatched close of " + n.name);
        ws();
        if (!starts(">")) fail("expected >");
        ++pos_;
        return n;
      }
      if (starts("<")) {
        n.children.push_back(element());
        continue;
      }
      auto next = s_.find('<', pos_);
      if (next == std::string_view::npos) fail("text runs off the end");
      n.text += unescape(s_.substr(pos_, next - pos_));
      pos_ = next;
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

int column_index(const std::string& ref) {
  int col = 0;
  for (char c : ref) {
    if (!std::isalpha(static_cast<unsigned char>(c))) break;
    col = col * 26 + (c - 'A' + 1);
  }
  return col - 1;
}

std::string canonical_number(std::string s) {
  if (s.find('.') != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  return s;
}

struct Sheet {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::vector<bool>> numeric;
  std::set<std::string> parts;
  std::string sheet_name;
};

Sheet read_xlsx(const Bytes& bytes) {
  auto files = unzip(bytes);
  Sheet out;
  for (const auto& [k, v] : files) {
    out.parts.insert(k);
    XmlReader(v).document();
  }
  auto wb = XmlReader(files.at("xl/workbook.xml")).document();
  out.sheet_name = wb.child("sheets")->child("sheet")->attrs.at("name");
  auto ws = XmlReader(files.at("xl/worksheets/sheet1.xml")).document();
  for (const auto& row : ws.child("sheetData")->children) {
    std::size_t r = std::stoul(row.attrs.at("r")) - 1;
    EXPECT_EQ(r, out.grid.size());
    std::vector<std::string> cells;
    std::vector<bool> num;
    for (const auto& c : row.children) {
      int col = column_index(c.attrs.at("r"));
      cells.resize(static_cast<std::size_t>(col) + 1);
      num.resize(static_cast<std::size_t>(col) + 1);
      auto t = c.attrs.find("t");
      if (t != c.attrs.end() && t->second == "inlineStr") {
        cells[static_cast<std::size_t>(col)] = c.child("is")->child("t")->text;
      } else {
        cells[static_cast<std::size_t>(col)] = c.child("v")->text;
        num[static_cast<std::size_t>(col)] = true;
      }
    }
    out.grid.push_back(cells);
    out.numeric.push_back(num);
  }
  return out;
}

void expect_same_grid(const Sheet& sheet, const std::vector<std::vector<std::string>>& want) {
  ASSERT_EQ(sheet.grid.size(), want.size());
  for (std::size_t r = 0; r < want.size(); ++r) {
    auto got = sheet.grid[r];
    got.resize(want[r].size());
    for (std::size_t c = 0; c < want[r].size(); ++c) {
      bool num = c < sheet.numeric[r].size() && sheet.numeric[r][c];
      if (num)
        EXPECT_EQ(canonical_number(got[c]), canonical_number(want[r][c])) << r << "," << c;
      else
        EXPECT_EQ(got[c], want[r][c]) << r << "," << c;
    }
  }
}

TEST(Json, MinimalInvoiceHasNulls) {
  ExtractedInvoice inv;
  inv.fields[F::invoice_number] = fv(F::invoice_number, std::string("42"));
  inv.fields[F::invoice_date] = fv(F::invoice_date, Date{2024, 1, 2});
  inv.fields[F::vendor_name] = fv(F::vendor_name, std::string("V"));
  inv.fields[F::total_amount] = fv(F::total_amount, Money{16500, "USD"});
  auto j = nlohmann::ordered_json::parse(to_canonical_json(inv));
  EXPECT_EQ(j["total_amount"], "165.00");
  EXPECT_TRUE(j["due_date"].is_null());
  EXPECT_TRUE(j["weight_kg"].is_null());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys.front(), "invoice_number");
  EXPECT_EQ(keys[13], "weight_kg");
}

TEST(JsonProperty, RoundTripFixpoint) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 300; ++i) {
    auto inv = sample("Vendor \"" + std::to_string(rng() % 1000) + "\"\né");
    inv.fields[F::total_amount] = fv(F::total_amount, Money{static_cast<std::int64_t>(rng() % 2'000'000'000'000) - 1'000'000'000'000,
                                                            rng() % 2 ? "USD" : "INR"});
    if (rng() % 2) inv.fields[F::tax_rate] = fv(F::tax_rate, Decimal{static_cast<std::int64_t>(rng() % 1'000'000)});
    auto text = to_canonical_json(inv);
    auto back = invoice_from_json(text);
    ASSERT_EQ(to_canonical_json(back), text);
    for (const auto& [f, v] : inv.fields)
      ASSERT_EQ(normalized_to_string(back.get(f)->normalized), normalized_to_string(v.normalized));
  }
}

TEST(Csv, Examples) {
  std::vector<ExtractedInvoice> none;
  auto header = to_csv(none);
  EXPECT_EQ(std::count(header.begin(), header.end(), '\n'), 1);
  std::vector<ExtractedInvoice> two{sample(), sample("Plain")};
  auto csv = to_csv(two);
  EXPECT_NE(csv.find(",\"Acme, Inc.\","), std::string::npos);
  EXPECT_EQ(parse_csv(csv).size(), 3u);
  EXPECT_EQ(csv_quote("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_quote("plain"), "plain");
}

std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet = "abcXYZ019 ,;\"'\n\t<>&#%-_./";
  std::string s(rng() % 12, ' ');
  for (auto& c : s) c = alphabet[rng() % alphabet.size()];
  if (rng() % 5 == 0) s += "ü€";
  return s;
}

TEST(CsvProperty, ReparseRecoversGrid) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ExtractedInvoice> invs;
    int n = static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      auto inv = sample(random_text(rng));
      inv.fields[F::invoice_number] = fv(F::invoice_number, random_text(rng));
      if (rng() % 2) inv.fields.erase(F::weight_kg);
      invs.push_back(inv);
    }
    ASSERT_EQ(parse_csv(to_csv(invs)), source_grid(invs));
  }
}

TEST(Xlsx, Structure) {
  std::vector<ExtractedInvoice> one{sample()};
  auto sheet = read_xlsx(to_xlsx_bytes(one));
  for (const char* part : {"[Content_Types].xml", "_rels/.rels", "xl/workbook.xml", "xl/worksheets/sheet1.xml",
                           "xl/_rels/workbook.xml.rels"})
    EXPECT_TRUE(sheet.parts.count(part)) << part;
  EXPECT_EQ(sheet.sheet_name, "Invoices");
  expect_same_grid(sheet, source_grid(one));
  auto total_col = std::find(sheet.grid[0].begin(), sheet.grid[0].end(), "total_amount") - sheet.grid[0].begin();
  EXPECT_TRUE(sheet.numeric[1][static_cast<std::size_t>(total_col)]);
  EXPECT_EQ(sheet.grid[1][static_cast<std::size_t>(total_col)], "165");

  std::vector<ExtractedInvoice> none;
  auto empty = read_xlsx(to_xlsx_bytes(none));
  EXPECT_EQ(empty.grid.size(), 1u);
}

TEST(XlsxProperty, ReparseRecoversGrid) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ExtractedInvoice> invs;
    int n = static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      auto inv = sample(random_text(rng));
      inv.fields[F::total_amount] = fv(F::total_amount, Money{static_cast<std::int64_t>(rng() % 100'000'000) - 50'000'000, "USD"});
      if (rng() % 2) inv.fields.erase(F::due_date);
      invs.push_back(inv);
    }
    expect_same_grid(read_xlsx(to_xlsx_bytes(invs)), source_grid(invs));
  }
}

TEST(Xlsx, WriteFileAndIoError) {
  test::TempDir dir;
  std::vector<ExtractedInvoice> one{sample()};
  write_export(one, dir / "out.xlsx");
  auto bytes = read_file(dir / "out.xlsx");
  EXPECT_EQ(bytes, to_xlsx_bytes(one));
  try {
    write_file_atomic(dir / "plain", "x");
    to_xlsx(one, dir / "plain" / "out.xlsx");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

TEST(Sql, Script) {
  std::vector<ExtractedInvoice> two{sample("O'Brien"), sample()};
  two[1].fields.erase(F::weight_kg);
  auto sql = to_sql(two);
  EXPECT_EQ(sql.rfind("CREATE TABLE invoices (", 0), 0u);
  EXPECT_NE(sql.find("'O''Brien'"), std::string::npos);
  EXPECT_NE(sql.find("DATE '2024-03-04'"), std::string::npos);
  EXPECT_NE(sql.find("NULL"), std::string::npos);
  std::size_t inserts = 0;
  for (auto p = sql.find("INSERT INTO invoices VALUES"); p != std::string::npos; p = sql.find("INSERT INTO", p + 1))
    ++inserts;
  EXPECT_EQ(inserts, 2u);
}

TEST(Schema, RenameKeepsOrder) {
  auto s = ExportSchema::standard();
  s.rename["total_amount"] = "Total";
  std::vector<ExtractedInvoice> none;
  auto rows = parse_csv(to_csv(none, s));
  EXPECT_EQ(rows[0][7], "Total");
  EXPECT_EQ(rows[0].size(), 11u);
}

}  // namespace
}  // namespace invx
