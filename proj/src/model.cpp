#include "invx/model.hpp"

#include <algorithm>

#include "invx/error.hpp"

namespace invx {

namespace {
constexpr std::array<std::string_view, 14> kFieldNames{
    "invoice_number",  "invoice_date", "due_date", "vendor_name",     "vendor_address",
    "billing_address", "shipping_address", "currency", "subtotal", "tax_rate",
    "tax_amount",      "discount_amount",  "total_amount", "weight_kg"};
}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedAmount: return "MalformedAmount";
    case ErrorCode::CurrencyMismatch: return "CurrencyMismatch";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::CorruptPdf: return "CorruptPdf";
    case ErrorCode::EncryptedPdf: return "EncryptedPdf";
    case ErrorCode::RasterizerUnavailable: return "RasterizerUnavailable";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::BlankPage: return "BlankPage";
    case ErrorCode::DegenerateHistogram: return "DegenerateHistogram";
    case ErrorCode::NoEngineConfigured: return "NoEngineConfigured";
    case ErrorCode::AllEnginesFailed: return "AllEnginesFailed";
    case ErrorCode::EngineError: return "EngineError";
    case ErrorCode::LlmUnavailable: return "LlmUnavailable";
    case ErrorCode::MissingAuthKey: return "MissingAuthKey";
    case ErrorCode::FixtureMiss: return "FixtureMiss";
    case ErrorCode::Unrepairable: return "Unrepairable";
    case ErrorCode::NotAnObject: return "NotAnObject";
    case ErrorCode::UnparseableDate: return "UnparseableDate";
    case ErrorCode::ImpossibleDate: return "ImpossibleDate";
    case ErrorCode::UnknownUnit: return "UnknownUnit";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::JobNotReviewable: return "JobNotReviewable";
    case ErrorCode::UnknownField: return "UnknownField";
    case ErrorCode::NormalizationFailed: return "NormalizationFailed";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::EmptyReference: return "EmptyReference";
  }
  return "Unknown";
}

std::string_view field_name(CanonicalField f) noexcept { return kFieldNames[static_cast<int>(f)]; }

std::optional<CanonicalField> field_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kFieldNames.size(); ++i)
    if (kFieldNames[i] == name) return static_cast<CanonicalField>(i);
  return std::nullopt;
}

bool is_required(CanonicalField f) noexcept {
  return std::find(kRequiredFields.begin(), kRequiredFields.end(), f) != kRequiredFields.end();
}

FieldKind field_kind(CanonicalField f) noexcept {
  switch (f) {
    case CanonicalField::invoice_date:
    case CanonicalField::due_date: return FieldKind::date;
    case CanonicalField::subtotal:
    case CanonicalField::tax_amount:
    case CanonicalField::discount_amount:
    case CanonicalField::total_amount: return FieldKind::money;
    case CanonicalField::tax_rate:
    case CanonicalField::weight_kg: return FieldKind::decimal;
    default: return FieldKind::text;
  }
}

BBox BBox::united(const BBox& o) const {
  return BBox{std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
}

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::embedded: return "embedded";
    case Provenance::ocr: return "ocr";
    case Provenance::llm: return "llm";
    case Provenance::regex: return "regex";
    case Provenance::layout: return "layout";
    case Provenance::human: return "human";
  }
  return "llm";
}

std::optional<Provenance> provenance_from_string(std::string_view s) noexcept {
  for (auto p : {Provenance::embedded, Provenance::ocr, Provenance::llm, Provenance::regex,
                 Provenance::layout, Provenance::human})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

std::string_view to_string(Validation v) noexcept {
  switch (v) {
    case Validation::unchecked: return "unchecked";
    case Validation::passed: return "passed";
    case Validation::failed: return "failed";
  }
  return "unchecked";
}

std::string normalized_to_string(const NormalizedValue& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(const Date& d) const { return to_iso(d); }
    std::string operator()(const Money& m) const { return money_format(m); }
    std::string operator()(const Decimal& d) const { return decimal_format(d); }
  };
  return std::visit(Visitor{}, v);
}

const CheckResult* ValidationReport::find(std::string_view id) const {
  for (const auto& c : checks)
    if (c.id == id) return &c;
  return nullptr;
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<std::string> ValidationReport::failing() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(c.id);
  return out;
}

std::string_view to_string(InvoiceStatus s) noexcept {
  switch (s) {
    case InvoiceStatus::auto_approved: return "auto_approved";
    case InvoiceStatus::needs_review: return "needs_review";
    case InvoiceStatus::corrected: return "corrected";
    case InvoiceStatus::rejected_duplicate: return "rejected_duplicate";
  }
  return "needs_review";
}

std::optional<InvoiceStatus> status_from_string(std::string_view s) noexcept {
  for (auto v : {InvoiceStatus::auto_approved, InvoiceStatus::needs_review, InvoiceStatus::corrected,
                 InvoiceStatus::rejected_duplicate})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

const FieldValue* ExtractedInvoice::get(CanonicalField f) const {
  auto it = fields.find(f);
  return it == fields.end() ? nullptr : &it->second;
}

std::optional<Money> ExtractedInvoice::money(CanonicalField f) const {
  const FieldValue* v = get(f);
  if (!v) return std::nullopt;
  if (const auto* m = std::get_if<Money>(&v->normalized)) return *m;
  return std::nullopt;
}

std::string ExtractedInvoice::currency_or(std::string_view fallback) const {
  if (const FieldValue* v = get(CanonicalField::currency))
    if (const auto* s = std::get_if<std::string>(&v->normalized); s && is_currency_code(*s)) return *s;
  if (auto m = money(CanonicalField::total_amount)) return m->currency;
  return std::string(fallback);
}

double overall_confidence(const ExtractedInvoice& inv) {
  double lowest = 1.0;
  for (auto f : kRequiredFields) {
    const FieldValue* v = inv.get(f);
    lowest = std::min(lowest, v ? v->confidence : 0.0);
  }
  return lowest;
}

void PipelineConfig::validate() const {
  auto in_unit = [](double t) { return t > 0.0 && t <= 1.0; };
  if (!in_unit(review_threshold))
    throw Error(ErrorCode::InvalidArgument, "review_threshold must lie in (0,1]");
  if (!in_unit(ocr_escalation_threshold))
    throw Error(ErrorCode::InvalidArgument, "ocr_escalation_threshold must lie in (0,1]");
  if (target_dpi < 72 || target_dpi > 1200)
    throw Error(ErrorCode::InvalidArgument, "target_dpi must lie in [72,1200]");
  if (!is_currency_code(default_currency))
    throw Error(ErrorCode::InvalidArgument, "default_currency must be a 3-letter code");
}

}  // namespace invx
