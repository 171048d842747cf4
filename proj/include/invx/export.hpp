#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "invx/model.hpp"
#include "invx/util.hpp"

namespace invx {

struct ExportSchema {
  std::vector<std::string> columns;
  std::map<std::string, std::string> rename;  // column -> header text

  static ExportSchema standard();
  std::string header(const std::string& column) const;
};

struct Cell {
  std::string text;
  bool numeric = false;
  bool money = false;  // rendered with two decimals in spreadsheets
  bool empty() const { return text.empty(); }
};

std::vector<Cell> export_row(const ExtractedInvoice& inv, const ExportSchema& schema = ExportSchema::standard());

/// Schema-ordered keys, nulls for absent fields, money as two-digit strings.
std::string to_canonical_json(const ExtractedInvoice& inv);
ExtractedInvoice invoice_from_json(std::string_view text);
std::string to_json_array(std::span<const ExtractedInvoice> invoices);

std::string to_csv(std::span<const ExtractedInvoice> invoices, const ExportSchema& schema = ExportSchema::standard());
std::string csv_quote(std::string_view field);

struct ZipEntry {
  std::string name;
  std::string data;
};
/// Stored (uncompressed) archive with fixed timestamps.
Bytes zip_store(std::span<const ZipEntry> entries);

Bytes to_xlsx_bytes(std::span<const ExtractedInvoice> invoices, const ExportSchema& schema = ExportSchema::standard());
void to_xlsx(std::span<const ExtractedInvoice> invoices, const std::filesystem::path& out,
             const ExportSchema& schema = ExportSchema::standard());

/// CREATE TABLE invoices plus one INSERT per invoice, ANSI quoting.
std::string to_sql(std::span<const ExtractedInvoice> invoices, const ExportSchema& schema = ExportSchema::standard());

/// Format chosen by extension: .csv, .json, .sql, otherwise xlsx.
void write_export(std::span<const ExtractedInvoice> invoices, const std::filesystem::path& out,
                  const ExportSchema& schema = ExportSchema::standard());

}  // namespace invx
