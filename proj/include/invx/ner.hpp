#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "invx/model.hpp"

namespace invx {

struct RegexCandidate {
  CanonicalField field = CanonicalField::invoice_number;
  std::string raw;
  std::size_t start = 0, end = 0;  // raw == text.substr(start, end - start)
  std::string pattern_id;
  std::string label;  // lower-cased anchor label, empty when symbol-anchored
};

struct DateCandidate {
  std::string raw;
  std::size_t start = 0, end = 0;
  std::vector<Date> parsed;  // two entries for an ambiguous d/m order
  std::string nearest_label;
  std::optional<CanonicalField> field;  // from nearest_label
};

std::vector<RegexCandidate> extract_invoice_number(std::string_view text);
std::vector<DateCandidate> extract_dates(std::string_view text);
/// Totals first (largest labeled total leading), then other amount fields.
std::vector<RegexCandidate> extract_amounts(std::string_view text);
std::vector<RegexCandidate> extract_weights(std::string_view text);
std::vector<RegexCandidate> extract_tax_rates(std::string_view text);

/// Runs every extractor; keeps the first candidate per field.
std::map<CanonicalField, RegexCandidate> regex_fields(std::string_view text);

class ConfusionMap {
 public:
  static ConfusionMap builtin();
  /// "from<TAB>to" per line, single characters.
  static ConfusionMap from_file(const std::string& path);
  void set(char from, char to) { map_[static_cast<unsigned char>(from)] = to; }
  std::optional<char> lookup(char c) const;

 private:
  std::map<unsigned char, char> map_;
};

/// At least half of the alphanumerics are digits.
bool is_numeric_context(std::string_view raw);

/// Rewrites runs made only of confusable characters when they sit next to
/// digits or currency punctuation. Length-preserving and idempotent.
std::string correct_numeric_ocr(std::string_view raw, const ConfusionMap& map = ConfusionMap::builtin());

}  // namespace invx
