#include "invx/ner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>

#include "invx/error.hpp"
#include "invx/money.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

constexpr auto kIcase = std::regex::ECMAScript | std::regex::icase;

const char* kMonths =
    "(jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|"
    "oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)";

int month_number(std::string_view name) {
  static const char* prefixes[] = {"jan", "feb", "mar", "apr", "may", "jun",
                                   "jul", "aug", "sep", "oct", "nov", "dec"};
  std::string l = to_lower(name.substr(0, 3));
  for (int i = 0; i < 12; ++i)
    if (l == prefixes[i]) return i + 1;
  return 0;
}

const char* kCurrency = "(?:US\\$|\\$|€|£|¥|₹|Rs\\.?|USD|EUR|GBP|INR|JPY|CAD|AUD|CHF|CNY|KRW|SGD|NZD|SEK|HKD)";

struct AmountLabel {
  const char* phrase;
  CanonicalField field;
};

const AmountLabel kAmountLabels[] = {
    {"grand total", CanonicalField::total_amount},   {"invoice total", CanonicalField::total_amount},
    {"total amount", CanonicalField::total_amount},  {"total due", CanonicalField::total_amount},
    {"amount due", CanonicalField::total_amount},    {"balance due", CanonicalField::total_amount},
    {"subtotal", CanonicalField::subtotal},          {"sub total", CanonicalField::subtotal},
    {"sub-total", CanonicalField::subtotal},         {"net amount", CanonicalField::subtotal},
    {"sales tax", CanonicalField::tax_amount},       {"tax amount", CanonicalField::tax_amount},
    {"tax", CanonicalField::tax_amount},             {"vat", CanonicalField::tax_amount},
    {"gst", CanonicalField::tax_amount},             {"less discount", CanonicalField::discount_amount},
    {"discount", CanonicalField::discount_amount},   {"total", CanonicalField::total_amount},
};

std::optional<CanonicalField> amount_label_field(std::string_view label) {
  std::string l = collapse_ws_lower(label);
  for (const auto& a : kAmountLabels)
    if (l == a.phrase) return a.field;
  return std::nullopt;
}

bool is_currency_punct(char c) { return c == '.' || c == ',' || c == '$' || c == '-' || c == '/' || c == ':'; }

}  // namespace

std::vector<RegexCandidate> extract_invoice_number(std::string_view text) {
  static const std::regex re(
      "\\b(?:inv(?:oice)?|bill)\\s*(?:no\\b\\.?|#|num(?:ber)?\\b\\.?|id\\b)\\s*[:.#]?\\s*([A-Z0-9][A-Z0-9/-]{1,24})",
      kIcase);
  std::vector<RegexCandidate> out;
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    std::string value = m[1].str();
    if (std::none_of(value.begin(), value.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
    auto start = static_cast<std::size_t>(m.position(1));
    out.push_back({CanonicalField::invoice_number, value, start, start + value.size(), "invoice_label",
                   collapse_ws_lower(m.str().substr(0, static_cast<std::size_t>(m.position(1) - m.position(0))))});
  }
  return out;
}

std::vector<DateCandidate> extract_dates(std::string_view text) {
  static const std::regex iso("\\b(\\d{4})-(\\d{1,2})-(\\d{1,2})\\b");
  static const std::regex numeric("\\b(\\d{1,2})[/.-](\\d{1,2})[/.-](\\d{4})\\b");
  static const std::regex day_month(std::string("\\b(\\d{1,2})(?:st|nd|rd|th)?\\s+") + kMonths +
                                        "\\.?,?\\s+(\\d{4})\\b",
                                    kIcase);
  static const std::regex month_day(std::string("\\b") + kMonths + "\\.?\\s+(\\d{1,2})(?:st|nd|rd|th)?,?\\s+(\\d{4})\\b",
                                    kIcase);
  static const struct {
    const char* phrase;
    CanonicalField field;
  } labels[] = {
      {"invoice date", CanonicalField::invoice_date}, {"date of issue", CanonicalField::invoice_date},
      {"issue date", CanonicalField::invoice_date},   {"due date", CanonicalField::due_date},
      {"payment due", CanonicalField::due_date},      {"due by", CanonicalField::due_date},
      {"pay by", CanonicalField::due_date},           {"dated", CanonicalField::invoice_date},
      {"date", CanonicalField::invoice_date},
  };

  std::string s(text);
  std::vector<DateCandidate> out;
  auto add = [&](const std::smatch& m, std::vector<Date> parsed) {
    if (parsed.empty()) return;
    auto start = static_cast<std::size_t>(m.position(0));
    for (const auto& d : out)
      if (start < d.end && d.start < start + m.length(0)) return;  // overlaps an earlier form
    DateCandidate c{m.str(), start, start + static_cast<std::size_t>(m.length(0)), std::move(parsed), "", {}};
    std::size_t lo = start >= 40 ? start - 40 : 0;
    std::string window = to_lower(s.substr(lo, start - lo));
    std::size_t best_end = 0;
    for (const auto& l : labels) {
      std::string_view phrase = l.phrase;
      auto pos = window.rfind(phrase);
      if (pos == std::string::npos) continue;
      std::size_t end = pos + phrase.size();
      if (c.nearest_label.empty() || end > best_end) {
        best_end = end;
        c.nearest_label = l.phrase;
        c.field = l.field;
      }
    }
    out.push_back(std::move(c));
  };

  for (auto it = std::sregex_iterator(s.begin(), s.end(), iso); it != std::sregex_iterator(); ++it) {
    std::vector<Date> p;
    if (auto d = make_date(std::stoi((*it)[1]), std::stoi((*it)[2]), std::stoi((*it)[3]))) p.push_back(*d);
    add(*it, p);
  }
  for (auto it = std::sregex_iterator(s.begin(), s.end(), day_month); it != std::sregex_iterator(); ++it) {
    std::vector<Date> p;
    if (auto d = make_date(std::stoi((*it)[3]), month_number((*it)[2].str()), std::stoi((*it)[1]))) p.push_back(*d);
    add(*it, p);
  }
  for (auto it = std::sregex_iterator(s.begin(), s.end(), month_day); it != std::sregex_iterator(); ++it) {
    std::vector<Date> p;
    if (auto d = make_date(std::stoi((*it)[3]), month_number((*it)[1].str()), std::stoi((*it)[2]))) p.push_back(*d);
    add(*it, p);
  }
  for (auto it = std::sregex_iterator(s.begin(), s.end(), numeric); it != std::sregex_iterator(); ++it) {
    int a = std::stoi((*it)[1]), b = std::stoi((*it)[2]), y = std::stoi((*it)[3]);
    std::vector<Date> p;
    if (auto d = make_date(y, b, a)) p.push_back(*d);  // day first
    if (auto d = make_date(y, a, b); d && (p.empty() || !(p.front() == *d))) p.push_back(*d);
    add(*it, p);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return out;
}

std::vector<RegexCandidate> extract_amounts(std::string_view text) {
  static const std::regex labeled(
      std::string("\\b(grand total|invoice total|total amount|total due|amount due|balance due|sub[- ]?total|"
                  "net amount|sales tax|tax amount|(?:tax|vat|gst)(?!\\s*(?:rate|id|no\\b|number|reg))|"
                  "less discount|discount|total(?!\\s*(?:weight|qty|quantity|items?)))\\b"
                  "(?:\\s*\\([^)\\n]{0,12}\\))?[ \\t:.#]*(") +
          kCurrency + "?[ \\t]*-?\\(?\\d[\\d,]*(?:\\.\\d{1,2})?\\)?)",
      kIcase);
  static const std::regex symbol(std::string("(?:US\\$|\\$|€|£|¥|₹)\\s*\\d[\\d,]*(?:\\.\\d{1,2})?"));

  std::string s(text);
  std::vector<RegexCandidate> labeled_out, symbol_out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), labeled); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto field = amount_label_field(m[1].str());
    if (!field) continue;
    auto start = static_cast<std::size_t>(m.position(2));
    labeled_out.push_back(
        {*field, m[2].str(), start, start + static_cast<std::size_t>(m.length(2)), "amount_label", collapse_ws_lower(m[1].str())});
  }
  for (auto it = std::sregex_iterator(s.begin(), s.end(), symbol); it != std::sregex_iterator(); ++it) {
    auto start = static_cast<std::size_t>(it->position(0));
    auto end = start + static_cast<std::size_t>(it->length(0));
    bool covered = std::any_of(labeled_out.begin(), labeled_out.end(),
                               [&](const RegexCandidate& c) { return start < c.end && c.start < end; });
    if (!covered) symbol_out.push_back({CanonicalField::total_amount, it->str(), start, end, "currency_symbol", ""});
  }
  auto value = [](const RegexCandidate& c) {
    try {
      return money_parse(c.raw, "USD").minor_units;
    } catch (const Error&) {
      return std::numeric_limits<std::int64_t>::min();
    }
  };
  std::stable_sort(labeled_out.begin(), labeled_out.end(), [&](const auto& a, const auto& b) {
    bool ta = a.field == CanonicalField::total_amount, tb = b.field == CanonicalField::total_amount;
    if (ta != tb) return ta;
    if (ta) return value(a) > value(b);
    return false;
  });
  labeled_out.insert(labeled_out.end(), symbol_out.begin(), symbol_out.end());
  return labeled_out;
}

std::vector<RegexCandidate> extract_weights(std::string_view text) {
  static const std::regex re("\\b((?:net |gross |total )?weight)\\b[ \\t:.#]*(\\d[\\d,]*(?:\\.\\d+)?[ \\t]*[A-Za-z]*)",
                             kIcase);
  std::string s(text);
  std::vector<RegexCandidate> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    auto start = static_cast<std::size_t>(it->position(2));
    out.push_back({CanonicalField::weight_kg, (*it)[2].str(), start, start + static_cast<std::size_t>(it->length(2)),
                   "weight_label", collapse_ws_lower((*it)[1].str())});
  }
  return out;
}

std::vector<RegexCandidate> extract_tax_rates(std::string_view text) {
  static const std::regex re(
      "\\b((?:tax|vat|gst)(?:\\s*rate)?)\\b\\s*\\(?[ \\t:]*(\\d{1,2}(?:\\.\\d+)?\\s*%)", kIcase);
  std::string s(text);
  std::vector<RegexCandidate> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    auto start = static_cast<std::size_t>(it->position(2));
    out.push_back({CanonicalField::tax_rate, (*it)[2].str(), start, start + static_cast<std::size_t>(it->length(2)),
                   "rate_label", collapse_ws_lower((*it)[1].str())});
  }
  return out;
}

std::map<CanonicalField, RegexCandidate> regex_fields(std::string_view text) {
  std::map<CanonicalField, RegexCandidate> out;
  auto keep = [&](const RegexCandidate& c) { out.emplace(c.field, c); };
  for (const auto& c : extract_invoice_number(text)) keep(c);
  std::optional<DateCandidate> unlabeled;
  for (const auto& d : extract_dates(text)) {
    if (d.field) {
      keep({*d.field, d.raw, d.start, d.end, "date", d.nearest_label});
    } else if (!unlabeled) {
      unlabeled = d;
    }
  }
  if (unlabeled) keep({CanonicalField::invoice_date, unlabeled->raw, unlabeled->start, unlabeled->end, "date", ""});
  for (const auto& c : extract_amounts(text)) keep(c);
  for (const auto& c : extract_weights(text)) keep(c);
  for (const auto& c : extract_tax_rates(text)) keep(c);
  return out;
}

ConfusionMap ConfusionMap::builtin() {
  ConfusionMap m;
  for (auto [from, to] : {std::pair{'O', '0'}, {'o', '0'}, {'l', '1'}, {'I', '1'}, {'|', '1'}, {'S', '5'},
                          {'B', '8'}, {'Z', '2'}, {'G', '6'}})
    m.set(from, to);
  return m;
}

ConfusionMap ConfusionMap::from_file(const std::string& path) {
  ConfusionMap m;
  int lineno = 0;
  for (auto line : split(read_text_file(path), '\n')) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.size() != 3 || line[1] != '\t')
      throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(lineno) + ": expected from<TAB>to");
    m.set(line[0], line[2]);
  }
  return m;
}

std::optional<char> ConfusionMap::lookup(char c) const {
  auto it = map_.find(static_cast<unsigned char>(c));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

bool is_numeric_context(std::string_view raw) {
  int digits = 0, alnum = 0;
  for (unsigned char c : raw) {
    if (std::isdigit(c)) ++digits;
    if (std::isalnum(c)) ++alnum;
  }
  return alnum > 0 && digits * 2 >= alnum;
}

std::string correct_numeric_ocr(std::string_view raw, const ConfusionMap& map) {
  std::string out(raw);
  auto in_run = [&](char c) { return std::isalpha(static_cast<unsigned char>(c)) || map.lookup(c).has_value(); };
  auto anchor = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || is_currency_punct(c); };
  std::size_t i = 0;
  while (i < raw.size()) {
    if (!in_run(raw[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && in_run(raw[j])) ++j;
    bool all_mapped = true;
    for (std::size_t k = i; k < j; ++k) all_mapped = all_mapped && map.lookup(raw[k]).has_value();
    bool left_edge = i == 0, right_edge = j == raw.size();
    bool left_ok = left_edge || anchor(raw[i - 1]);
    bool right_ok = right_edge || anchor(raw[j]);
    bool anchored = (!left_edge && anchor(raw[i - 1])) || (!right_edge && anchor(raw[j]));
    if (all_mapped && left_ok && right_ok && anchored)
      for (std::size_t k = i; k < j; ++k) out[k] = *map.lookup(raw[k]);
    i = j;
  }
  return out;
}

}  // namespace invx
