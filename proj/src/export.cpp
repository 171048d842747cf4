#include "invx/export.hpp"

#include <zlib.h>

#include <cstdio>
#include <json.hpp>

#include "invx/error.hpp"
#include "invx/validate.hpp"

namespace invx {
namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

std::string column_letters(std::size_t index) {
  std::string s;
  ++index;
  while (index > 0) {
    s.insert(s.begin(), static_cast<char>('A' + (index - 1) % 26));
    index = (index - 1) / 26;
  }
  return s;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    unsigned char u = static_cast<unsigned char>(c);
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default:
        if (u < 0x20 && c != '\t' && c != '\n' && c != '\r') break;  // not representable in XML 1.0
        out.push_back(c);
    }
  }
  return out;
}

std::string sql_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "''";
    else out.push_back(c);
  }
  return out + "'";
}

void put_u16(std::string& b, unsigned v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& b, unsigned long v) {
  put_u16(b, static_cast<unsigned>(v & 0xffff));
  put_u16(b, static_cast<unsigned>((v >> 16) & 0xffff));
}

std::string money_numeric(const Money& m) { return decimal_format(Decimal{m.minor_units * 10'000}); }

ojson field_json(const FieldValue& fv) {
  ojson j;
  j["raw"] = fv.raw_text;
  j["confidence"] = fv.confidence;
  j["provenance"] = to_string(fv.provenance);
  j["validation"] = to_string(fv.validation);
  j["agreement"] = fv.agreement;
  j["conflict"] = fv.conflict;
  j["support"] = fv.support;
  if (auto* m = std::get_if<Money>(&fv.normalized)) j["currency"] = m->currency;
  return j;
}

}  // namespace

ExportSchema ExportSchema::standard() {
  return ExportSchema{{"invoice_number", "invoice_date", "due_date", "vendor_name", "currency", "subtotal", "tax_amount",
                       "total_amount", "weight_kg", "status", "overall_confidence"},
                      {}};
}

std::string ExportSchema::header(const std::string& column) const {
  auto it = rename.find(column);
  return it == rename.end() ? column : it->second;
}

std::vector<Cell> export_row(const ExtractedInvoice& inv, const ExportSchema& schema) {
  std::vector<Cell> row;
  for (const auto& col : schema.columns) {
    Cell cell;
    if (col == "status") {
      cell.text = std::string(to_string(inv.status));
    } else if (col == "overall_confidence") {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", inv.overall_confidence);
      cell.text = buf;
      cell.numeric = true;
    } else if (col == "currency") {
      const FieldValue* fv = inv.get(CanonicalField::currency);
      if (fv && std::holds_alternative<std::string>(fv->normalized))
        cell.text = std::get<std::string>(fv->normalized);
      else if (auto total = inv.money(CanonicalField::total_amount))
        cell.text = total->currency;
    } else if (auto f = field_from_name(col)) {
      const FieldValue* fv = inv.get(*f);
      if (fv && !std::holds_alternative<std::monostate>(fv->normalized)) {
        cell.text = normalized_to_string(fv->normalized);
        cell.money = std::holds_alternative<Money>(fv->normalized);
        cell.numeric = cell.money || std::holds_alternative<Decimal>(fv->normalized);
      }
    } else {
      throw Error(ErrorCode::UnknownField, col);
    }
    row.push_back(std::move(cell));
  }
  return row;
}

std::string to_canonical_json(const ExtractedInvoice& inv) {
  ojson j;
  for (auto f : kAllFields) {
    const FieldValue* fv = inv.get(f);
    if (fv && !std::holds_alternative<std::monostate>(fv->normalized))
      j[std::string(field_name(f))] = normalized_to_string(fv->normalized);
    else
      j[std::string(field_name(f))] = nullptr;
  }
  ojson items = ojson::array();
  for (const auto& li : inv.line_items) {
    items.push_back({{"description", li.description},
                     {"quantity", decimal_format(li.quantity)},
                     {"unit_price", money_format(li.unit_price)},
                     {"amount", money_format(li.amount)},
                     {"currency", li.amount.currency}});
  }
  j["line_items"] = items;
  j["status"] = to_string(inv.status);
  j["overall_confidence"] = inv.overall_confidence;
  j["anomaly_flagged"] = inv.anomaly_flagged;
  j["anomaly_z"] = inv.anomaly_z ? ojson(*inv.anomaly_z) : ojson(nullptr);
  ojson fields = ojson::object();
  for (auto f : kAllFields)
    if (const FieldValue* fv = inv.get(f)) fields[std::string(field_name(f))] = field_json(*fv);
  j["fields"] = fields;
  ojson checks = ojson::array();
  for (const auto& c : inv.validation_report.checks) {
    ojson involved = ojson::array();
    for (auto f : c.fields_involved) involved.push_back(field_name(f));
    checks.push_back({{"id", c.id},
                      {"passed", c.passed},
                      {"skipped", c.skipped},
                      {"detail", c.detail},
                      {"fields_involved", involved}});
  }
  j["validation_report"] = checks;
  return j.dump(2);
}

ExtractedInvoice invoice_from_json(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "invoice JSON is not an object");
  try {
    ExtractedInvoice inv;
    const json& details = j.contains("fields") ? j["fields"] : json::object();
    for (auto f : kAllFields) {
      std::string name(field_name(f));
      bool has_value = j.contains(name) && j[name].is_string();
      bool has_detail = details.contains(name);
      if (!has_value && !has_detail) continue;
      FieldValue fv;
      fv.field = f;
      if (has_detail) {
        const json& d = details[name];
        fv.raw_text = d.value("raw", "");
        fv.confidence = d.value("confidence", 0.0);
        fv.provenance = provenance_from_string(d.value("provenance", "llm")).value_or(Provenance::llm);
        std::string v = d.value("validation", "unchecked");
        fv.validation = v == "passed" ? Validation::passed : v == "failed" ? Validation::failed : Validation::unchecked;
        fv.agreement = d.value("agreement", false);
        fv.conflict = d.value("conflict", false);
        if (d.contains("support")) fv.support = d["support"].get<std::vector<int>>();
      }
      if (has_value) {
        std::string v = j[name].get<std::string>();
        switch (field_kind(f)) {
          case FieldKind::date: fv.normalized = normalize_date(v, DatePolicy::day_first); break;
          case FieldKind::money: {
            std::string cur = has_detail ? details[name].value("currency", "USD") : "USD";
            fv.normalized = money_parse(v, cur);
            break;
          }
          case FieldKind::decimal: fv.normalized = decimal_parse(v); break;
          case FieldKind::text: fv.normalized = v; break;
        }
        if (!has_detail) fv.raw_text = v;
      }
      inv.fields.emplace(f, std::move(fv));
    }
    if (j.contains("line_items"))
      for (const auto& li : j["line_items"]) {
        std::string cur = li.value("currency", "USD");
        inv.line_items.push_back({li.value("description", ""), decimal_parse(li.value("quantity", "1")),
                                  money_parse(li.value("unit_price", "0"), cur), money_parse(li.value("amount", "0"), cur)});
      }
    inv.status = status_from_string(j.value("status", "needs_review")).value_or(InvoiceStatus::needs_review);
    inv.overall_confidence = j.value("overall_confidence", 0.0);
    inv.anomaly_flagged = j.value("anomaly_flagged", false);
    if (j.contains("anomaly_z") && j["anomaly_z"].is_number()) inv.anomaly_z = j["anomaly_z"].get<double>();
    if (j.contains("validation_report"))
      for (const auto& c : j["validation_report"]) {
        CheckResult r{c.value("id", ""), c.value("passed", true), c.value("skipped", false), c.value("detail", ""), {}};
        for (const auto& f : c.value("fields_involved", json::array()))
          if (auto cf = field_from_name(f.get<std::string>())) r.fields_involved.push_back(*cf);
        inv.validation_report.checks.push_back(std::move(r));
      }
    return inv;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("invoice JSON: ") + e.what());
  }
}

std::string to_json_array(std::span<const ExtractedInvoice> invoices) {
  std::string out = "[";
  for (std::size_t i = 0; i < invoices.size(); ++i) {
    out += i ? ",\n" : "\n";
    out += to_canonical_json(invoices[i]);
  }
  out += invoices.empty() ? "]\n" : "\n]\n";
  return out;
}

std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

std::string to_csv(std::span<const ExtractedInvoice> invoices, const ExportSchema& schema) {
  std::string out;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i) out += ',';
    out += csv_quote(schema.header(schema.columns[i]));
  }
  out += "\r\n";
  for (const auto& inv : invoices) {
    auto row = export_row(inv, schema);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_quote(row[i].text);
    }
    out += "\r\n";
  }
  return out;
}

Bytes zip_store(std::span<const ZipEntry> entries) {
  std::string out, central;
  const unsigned dos_time = 0, dos_date = (0 << 9) | (1 << 5) | 1;  // 1980-01-01 00:00
  for (const auto& e : entries) {
    unsigned long crc = crc32(0L, reinterpret_cast<const Bytef*>(e.data.data()), static_cast<uInt>(e.data.size()));
    unsigned long offset = out.size();
    put_u32(out, 0x04034b50);
    put_u16(out, 20);
    put_u16(out, 0x0800);  // UTF-8 names
    put_u16(out, 0);       // stored
    put_u16(out, dos_time);
    put_u16(out, dos_date);
    put_u32(out, crc);
    put_u32(out, e.data.size());
    put_u32(out, e.data.size());
    put_u16(out, static_cast<unsigned>(e.name.size()));
    put_u16(out, 0);
    out += e.name;
    out += e.data;

    put_u32(central, 0x02014b50);
    put_u16(central, 20);
    put_u16(central, 20);
    put_u16(central, 0x0800);
    put_u16(central, 0);
    put_u16(central, dos_time);
    put_u16(central, dos_date);
    put_u32(central, crc);
    put_u32(central, e.data.size());
    put_u32(central, e.data.size());
    put_u16(central, static_cast<unsigned>(e.name.size()));
    put_u16(central, 0);
    put_u16(central, 0);
    put_u16(central, 0);
    put_u16(central, 0);
    put_u32(central, 0);
    put_u32(central, offset);
    central += e.name;
  }
  unsigned long cd_offset = out.size();
  out += central;
  put_u32(out, 0x06054b50);
  put_u16(out, 0);
  put_u16(out, 0);
  put_u16(out, static_cast<unsigned>(entries.size()));
  put_u16(out, static_cast<unsigned>(entries.size()));
  put_u32(out, central.size());
  put_u32(out, cd_offset);
  put_u16(out, 0);
  return Bytes(out.begin(), out.end());
}

Bytes to_xlsx_bytes(std::span<const ExtractedInvoice> invoices, const ExportSchema& schema) {
  const char* decl = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n";
  std::string sheet = decl;
  sheet +=
      "<worksheet xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\"><sheetData>";
  auto text_cell = [](const std::string& ref, const std::string& text) {
    bool edge_space = !text.empty() && (text.front() == ' ' || text.back() == ' ' || text.find('\n') != std::string::npos);
    return "<c r=\"" + ref + "\" t=\"inlineStr\"><is><t" + (edge_space ? " xml:space=\"preserve\"" : "") + ">" +
           xml_escape(text) + "</t></is></c>";
  };
  sheet += "<row r=\"1\">";
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    sheet += text_cell(column_letters(c) + "1", schema.header(schema.columns[c]));
  sheet += "</row>";
  for (std::size_t r = 0; r < invoices.size(); ++r) {
    auto row = export_row(invoices[r], schema);
    std::string rn = std::to_string(r + 2);
    sheet += "<row r=\"" + rn + "\">";
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c].empty()) continue;
      std::string ref = column_letters(c) + rn;
      if (row[c].numeric) {
        std::string v = row[c].text;
        if (row[c].money) v = money_numeric(money_parse(v, "USD"));
        sheet += "<c r=\"" + ref + "\"" + (row[c].money ? " s=\"1\"" : "") + "><v>" + v + "</v></c>";
      } else {
        sheet += text_cell(ref, row[c].text);
      }
    }
    sheet += "</row>";
  }
  sheet += "</sheetData></worksheet>";

  std::vector<ZipEntry> entries{
      {"[Content_Types].xml",
       std::string(decl) +
           "<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">"
           "<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>"
           "<Default Extension=\"xml\" ContentType=\"application/xml\"/>"
           "<Override PartName=\"/xl/workbook.xml\" "
           "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>"
           "<Override PartName=\"/xl/worksheets/sheet1.xml\" "
           "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>"
           "<Override PartName=\"/xl/styles.xml\" "
           "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.styles+xml\"/>"
           "</Types>"},
      {"_rels/.rels",
       std::string(decl) +
           "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
           "<Relationship Id=\"rId1\" "
           "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument\" "
           "Target=\"xl/workbook.xml\"/></Relationships>"},
      {"xl/workbook.xml",
       std::string(decl) +
           "<workbook xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\" "
           "xmlns:r=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships\">"
           "<sheets><sheet name=\"Invoices\" sheetId=\"1\" r:id=\"rId1\"/></sheets></workbook>"},
      {"xl/_rels/workbook.xml.rels",
       std::string(decl) +
           "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
           "<Relationship Id=\"rId1\" "
           "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet\" "
           "Target=\"worksheets/sheet1.xml\"/>"
           "<Relationship Id=\"rId2\" "
           "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/styles\" "
           "Target=\"styles.xml\"/></Relationships>"},
      {"xl/styles.xml",
       std::string(decl) +
           "<styleSheet xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\">"
           "<fonts count=\"1\"><font><sz val=\"11\"/><name val=\"Calibri\"/></font></fonts>"
           "<fills count=\"2\"><fill><patternFill patternType=\"none\"/></fill>"
           "<fill><patternFill patternType=\"gray125\"/></fill></fills>"
           "<borders count=\"1\"><border><left/><right/><top/><bottom/><diagonal/></border></borders>"
           "<cellStyleXfs count=\"1\"><xf numFmtId=\"0\" fontId=\"0\" fillId=\"0\" borderId=\"0\"/></cellStyleXfs>"
           "<cellXfs count=\"2\"><xf numFmtId=\"0\" fontId=\"0\" fillId=\"0\" borderId=\"0\" xfId=\"0\"/>"
           "<xf numFmtId=\"2\" fontId=\"0\" fillId=\"0\" borderId=\"0\" xfId=\"0\" applyNumberFormat=\"1\"/></cellXfs>"
           "</styleSheet>"},
      {"xl/worksheets/sheet1.xml", sheet},
  };
  return zip_store(entries);
}

void to_xlsx(std::span<const ExtractedInvoice> invoices, const std::filesystem::path& out, const ExportSchema& schema) {
  Bytes bytes = to_xlsx_bytes(invoices, schema);
  write_file_atomic(out, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string to_sql(std::span<const ExtractedInvoice> invoices, const ExportSchema& schema) {
  auto type_of = [](const std::string& col) -> std::string {
    if (col == "invoice_date" || col == "due_date") return "DATE";
    if (col == "currency") return "CHAR(3)";
    if (col == "overall_confidence") return "DECIMAL(6,4)";
    if (col == "weight_kg" || col == "tax_rate") return "DECIMAL(18,6)";
    if (auto f = field_from_name(col); f && field_kind(*f) == FieldKind::money) return "DECIMAL(18,2)";
    if (col == "status") return "VARCHAR(32)";
    return "VARCHAR(1024)";
  };
  std::string out = "CREATE TABLE invoices (\n";
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    out += "  \"" + schema.header(schema.columns[i]) + "\" " + type_of(schema.columns[i]);
    out += i + 1 < schema.columns.size() ? ",\n" : "\n";
  }
  out += ");\n";
  for (const auto& inv : invoices) {
    auto row = export_row(inv, schema);
    out += "INSERT INTO invoices VALUES (";
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ", ";
      const auto& col = schema.columns[i];
      if (row[i].empty()) out += "NULL";
      else if (row[i].numeric) out += row[i].text;
      else if (col == "invoice_date" || col == "due_date") out += "DATE " + sql_quote(row[i].text);
      else out += sql_quote(row[i].text);
    }
    out += ");\n";
  }
  return out;
}

void write_export(std::span<const ExtractedInvoice> invoices, const std::filesystem::path& out,
                  const ExportSchema& schema) {
  std::string ext = to_lower(out.extension().string());
  if (ext == ".csv") write_file_atomic(out, to_csv(invoices, schema));
  else if (ext == ".json") write_file_atomic(out, to_json_array(invoices));
  else if (ext == ".sql") write_file_atomic(out, to_sql(invoices, schema));
  else to_xlsx(invoices, out, schema);
}

}  // namespace invx
