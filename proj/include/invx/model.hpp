#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "invx/money.hpp"

namespace invx {

enum class CanonicalField {
  invoice_number,
  invoice_date,
  due_date,
  vendor_name,
  vendor_address,
  billing_address,
  shipping_address,
  currency,
  subtotal,
  tax_rate,
  tax_amount,
  discount_amount,
  total_amount,
  weight_kg,
};

inline constexpr std::array<CanonicalField, 14> kAllFields{
    CanonicalField::invoice_number,   CanonicalField::invoice_date,    CanonicalField::due_date,
    CanonicalField::vendor_name,      CanonicalField::vendor_address,  CanonicalField::billing_address,
    CanonicalField::shipping_address, CanonicalField::currency,        CanonicalField::subtotal,
    CanonicalField::tax_rate,         CanonicalField::tax_amount,      CanonicalField::discount_amount,
    CanonicalField::total_amount,     CanonicalField::weight_kg,
};

inline constexpr std::array<CanonicalField, 4> kRequiredFields{
    CanonicalField::invoice_number, CanonicalField::invoice_date, CanonicalField::vendor_name,
    CanonicalField::total_amount};

std::string_view field_name(CanonicalField f) noexcept;
std::optional<CanonicalField> field_from_name(std::string_view name) noexcept;
bool is_required(CanonicalField f) noexcept;

enum class FieldKind { text, date, money, decimal };
FieldKind field_kind(CanonicalField f) noexcept;

struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double cx() const { return (x0 + x1) / 2; }
  double cy() const { return (y0 + y1) / 2; }
  bool valid() const { return x0 < x1 && y0 < y1; }
  BBox united(const BBox& o) const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Positioned unit of text. `source` is "embedded" or "ocr:<engine-id>".
struct Token {
  int id = 0;
  std::string text;
  BBox bbox;
  int page = 0;
  double confidence = 1.0;
  std::string source = "embedded";

  friend bool operator==(const Token&, const Token&) = default;
};

enum class Provenance { embedded, ocr, llm, regex, layout, human };
std::string_view to_string(Provenance p) noexcept;
std::optional<Provenance> provenance_from_string(std::string_view s) noexcept;

enum class Validation { unchecked, passed, failed };
std::string_view to_string(Validation v) noexcept;

using NormalizedValue = std::variant<std::monostate, std::string, Date, Money, Decimal>;

std::string normalized_to_string(const NormalizedValue& v);

struct FieldValue {
  CanonicalField field = CanonicalField::invoice_number;
  std::string raw_text;
  NormalizedValue normalized;
  double confidence = 0.0;
  Provenance provenance = Provenance::llm;
  std::vector<int> support;
  Validation validation = Validation::unchecked;
  bool agreement = false;
  bool conflict = false;
};

struct LineItem {
  std::string description;
  Decimal quantity;
  Money unit_price;
  Money amount;
};

struct CheckResult {
  std::string id;
  bool passed = true;
  bool skipped = false;
  std::string detail;
  std::vector<CanonicalField> fields_involved;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  const CheckResult* find(std::string_view id) const;
  bool all_passed() const;
  std::vector<std::string> failing() const;
};

enum class InvoiceStatus { auto_approved, needs_review, corrected, rejected_duplicate };
std::string_view to_string(InvoiceStatus s) noexcept;
std::optional<InvoiceStatus> status_from_string(std::string_view s) noexcept;

struct ExtractedInvoice {
  std::map<CanonicalField, FieldValue> fields;
  std::vector<LineItem> line_items;
  ValidationReport validation_report;
  double overall_confidence = 0.0;
  InvoiceStatus status = InvoiceStatus::needs_review;
  bool anomaly_flagged = false;
  std::optional<double> anomaly_z;

  const FieldValue* get(CanonicalField f) const;
  std::optional<Money> money(CanonicalField f) const;
  std::string currency_or(std::string_view fallback) const;
};

/// min over required-field confidences; a missing required field counts as 0.
double overall_confidence(const ExtractedInvoice& inv);

enum class DatePolicy { day_first, month_first };

struct PipelineConfig {
  std::vector<std::string> input_paths;
  std::string llm_auth_key;
  std::string output_path;
  double review_threshold = 0.85;
  double ocr_escalation_threshold = 0.80;
  int target_dpi = 300;
  DatePolicy date_policy = DatePolicy::day_first;
  std::string default_currency = "USD";
  std::size_t llm_max_chars = 100'000;

  /// Throws InvalidArgument when a threshold or the DPI is out of range.
  void validate() const;
};

}  // namespace invx
