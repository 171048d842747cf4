#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "invx/layout.hpp"
#include "invx/llm.hpp"
#include "invx/model.hpp"
#include "invx/ner.hpp"

namespace invx {

/// Throws UnparseableDate or ImpossibleDate.
Date normalize_date(std::string_view raw, DatePolicy policy);

/// Kilograms. "qtl" anywhere in the text scales by 100, then "ton" by 1000;
/// "kg" or no unit leaves the value. Throws UnknownUnit otherwise.
Decimal normalize_weight(std::string_view raw);

struct NormalizeOptions {
  DatePolicy date_policy = DatePolicy::day_first;
  std::string default_currency = "USD";
};

/// Per-kind normalization. Throws NormalizationFailed carrying the cause.
NormalizedValue normalize_field(CanonicalField f, std::string_view raw, const NormalizeOptions& opts);

LineItem normalize_line_item(const RawLineItem& raw, std::string_view currency);

/// LINE_MATH, SUBTOTAL, TAX and TOTAL, each skipped with a note when an input is absent.
ValidationReport check_arithmetic(const ExtractedInvoice& inv, std::int64_t tol_minor = 1);

enum class Agreement { agree, none, conflict };
enum class Arithmetic { passed, failed, not_applicable };

struct ScoringConstants {
  double embedded = 0.95;
  double llm_ungrounded = 0.60;
  double regex = 0.75;
  double layout = 0.70;
  double agreement_factor = 0.5;  // remaining doubt kept on agreement
  double conflict_factor = 0.5;
  double arithmetic_floor = 0.90;
  double arithmetic_failure_factor = 0.5;
};

double score_confidence(double source_conf, Agreement agreement, Arithmetic arithmetic,
                        const ScoringConstants& k = {});

/// Base confidence from provenance and the supporting tokens.
double source_confidence(Provenance p, std::span<const Token> support, const ScoringConstants& k = {});

/// Consecutive tokens (reading order) whose texts spell the value's words.
std::vector<int> ground_value(std::string_view value, std::span<const Token> tokens);

struct FuseInputs {
  const PartialInvoice* llm = nullptr;
  std::map<CanonicalField, RegexCandidate> regex;
  std::vector<LabelLink> layout;
  std::span<const Token> tokens;
};

std::map<CanonicalField, FieldValue> fuse_fields(const FuseInputs& in, const NormalizeOptions& opts);

/// Field-level arithmetic verdict derived from the report.
Arithmetic arithmetic_for(CanonicalField f, const ValidationReport& report);

/// Applies scoring to every fused field and sets its validation flag.
void score_fields(ExtractedInvoice& inv, std::span<const Token> tokens, const ScoringConstants& k = {});

enum class DedupResult { fresh, duplicate_exact, duplicate_logical };
std::string_view to_string(DedupResult r) noexcept;

/// Absent when a required field is missing.
std::optional<std::string> logical_hash(const ExtractedInvoice& inv);

class DedupIndex {
 public:
  DedupResult check(const std::string& raw_hash, const std::optional<std::string>& logical) const;
  /// Insert-only; idempotent.
  void record(const std::string& raw_hash, const std::optional<std::string>& logical);
  const std::set<std::string>& raw_hashes() const { return raw_; }
  const std::set<std::string>& canonical_hashes() const { return logical_; }
  std::string serialize() const;
  static DedupIndex parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static DedupIndex load(const std::filesystem::path& path);

 private:
  std::set<std::string> raw_, logical_;
};

DedupResult dedup_check(const ExtractedInvoice& inv, std::span<const std::uint8_t> raw_doc, const DedupIndex& index);

struct AnomalyResult {
  bool flagged = false;
  std::optional<double> z;
};

class VendorHistory {
 public:
  static std::string vendor_key(std::string_view vendor);
  const std::vector<std::int64_t>* totals(std::string_view vendor) const;
  void append(std::string_view vendor, std::int64_t total_minor);
  std::string serialize() const;
  static VendorHistory parse(std::string_view text);

 private:
  std::map<std::string, std::vector<std::int64_t>> totals_;
};

AnomalyResult detect_anomaly(const VendorHistory& history, std::string_view vendor, const Money& total);

struct AuditEvent {
  std::string timestamp;
  std::string actor = "system";
  std::string action;
  std::string subject;
  std::optional<std::string> before, after;
};

std::string audit_to_json(const AuditEvent& e);
AuditEvent audit_from_json(std::string_view line);

/// Append-only newline-delimited log; appends are serialized and timestamps
/// never decrease for a subject.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path);
  AuditEvent append(AuditEvent e);
  std::vector<AuditEvent> read(std::string_view subject = {}) const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> last_ts_;
};

/// Sets overall_confidence and status; returns the decision event (unstamped).
AuditEvent finalize(ExtractedInvoice& inv, double tau, DedupResult dedup, const AnomalyResult& anomaly);

struct Correction {
  std::string field;
  std::string new_value;
  std::string note;
};

/// Human corrections on a needs_review invoice. Every correction is
/// normalized before anything changes, so a rejected batch leaves `inv`
/// untouched. Status becomes corrected when the overall confidence reaches
/// `tau` and every check passes. Returns one event per field (unstamped).
/// Throws JobNotReviewable, UnknownField or NormalizationFailed.
std::vector<AuditEvent> apply_corrections(ExtractedInvoice& inv, std::span<const Correction> corrections,
                                          const std::string& reviewer, double tau, const NormalizeOptions& opts,
                                          std::span<const Token> tokens, const ScoringConstants& k = {});

}  // namespace invx
