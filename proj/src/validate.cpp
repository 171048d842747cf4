#include "invx/validate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <regex>

#include "invx/error.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using json = nlohmann::json;

int month_from_name(std::string_view name) {
  static const char* prefixes[] = {"jan", "feb", "mar", "apr", "may", "jun",
                                   "jul", "aug", "sep", "oct", "nov", "dec"};
  std::string l = to_lower(name.substr(0, 3));
  for (int i = 0; i < 12; ++i)
    if (l == prefixes[i]) return i + 1;
  return 0;
}

Date checked_date(int y, int m, int d, std::string_view raw) {
  if (auto date = make_date(y, m, d)) return *date;
  throw Error(ErrorCode::ImpossibleDate, std::string(raw));
}

std::string normalize_text(std::string_view raw) {
  std::string out;
  for (const auto& line : split(raw, '\n')) {
    std::string collapsed;
    for (char c : line) {
      bool ws = std::isspace(static_cast<unsigned char>(c));
      if (ws) {
        if (!collapsed.empty() && collapsed.back() != ' ') collapsed.push_back(' ');
      } else {
        collapsed.push_back(c);
      }
    }
    collapsed = trim(collapsed);
    if (collapsed.empty()) continue;
    if (!out.empty()) out += ", ";
    out += collapsed;
  }
  return out;
}

// Trim punctuation and currency bytes from both ends for token matching.
std::string match_key(std::string_view s) {
  auto strip = [](unsigned char c) { return c >= 0x80 || (std::ispunct(c) && c != '#' && c != '%' && c != '-'); };
  std::size_t a = 0, b = s.size();
  while (a < b && strip(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && strip(static_cast<unsigned char>(s[b - 1]))) --b;
  return to_lower(s.substr(a, b - a));
}

std::vector<std::string> words_of(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string comparable(CanonicalField f, std::string_view raw, const NormalizeOptions& opts) {
  try {
    auto v = normalize_field(f, raw, opts);
    if (auto* m = std::get_if<Money>(&v)) return std::to_string(m->minor_units);
    return to_lower(normalized_to_string(v));
  } catch (const Error&) {
    return "raw:" + collapse_ws_lower(raw);
  }
}

std::string abs_detail(const char* what, long long expected, long long got) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s expected %lld got %lld", what, expected, got);
  return buf;
}

}  // namespace

Date normalize_date(std::string_view raw, DatePolicy policy) {
  static const std::regex ymd("(\\d{4})[-/.](\\d{1,2})[-/.](\\d{1,2})");
  static const std::regex numeric("(\\d{1,2})[/.-](\\d{1,2})[/.-](\\d{4})");
  static const std::regex day_month(
      "(\\d{1,2})(?:st|nd|rd|th)?\\s+([a-z]{3,9})\\.?,?\\s+(\\d{4})", std::regex::ECMAScript | std::regex::icase);
  static const std::regex month_day(
      "([a-z]{3,9})\\.?\\s+(\\d{1,2})(?:st|nd|rd|th)?,?\\s+(\\d{4})", std::regex::ECMAScript | std::regex::icase);
  std::string s = trim(raw);
  std::smatch m;
  for (int pass = 0; pass < 2; ++pass) {
    auto match = [&](const std::regex& re) {
      return pass == 0 ? std::regex_match(s, m, re) : std::regex_search(s, m, re);
    };
    if (match(ymd)) return checked_date(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), raw);
    if (match(numeric)) {
      int a = std::stoi(m[1]), b = std::stoi(m[2]), y = std::stoi(m[3]);
      bool day_first = policy == DatePolicy::day_first;
      if (a > 12 && b <= 12) day_first = true;
      if (b > 12 && a <= 12) day_first = false;
      return day_first ? checked_date(y, b, a, raw) : checked_date(y, a, b, raw);
    }
    if (match(day_month)) {
      int mon = month_from_name(m[2].str());
      if (mon) return checked_date(std::stoi(m[3]), mon, std::stoi(m[1]), raw);
    }
    if (match(month_day)) {
      int mon = month_from_name(m[1].str());
      if (mon) return checked_date(std::stoi(m[3]), mon, std::stoi(m[2]), raw);
    }
  }
  throw Error(ErrorCode::UnparseableDate, std::string(raw));
}

Decimal normalize_weight(std::string_view raw) {
  static const std::regex number("-?\\d[\\d,]*(?:\\.\\d+)?");
  std::string s(raw);
  std::smatch m;
  if (!std::regex_search(s, m, number)) throw Error(ErrorCode::MalformedAmount, "no number in weight: " + s);
  std::string digits = m.str();
  digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
  Decimal value = decimal_parse(digits);
  std::string unit = to_lower(trim(m.prefix().str() + " " + m.suffix().str()));
  if (unit.find("qtl") != std::string::npos) return decimal_mul_int(value, 100);
  if (unit.find("ton") != std::string::npos) return decimal_mul_int(value, 1000);
  if (unit.empty() || unit.find("kg") != std::string::npos || unit.find("kilo") != std::string::npos) return value;
  throw Error(ErrorCode::UnknownUnit, unit);
}

NormalizedValue normalize_field(CanonicalField f, std::string_view raw, const NormalizeOptions& opts) {
  try {
    std::string text = trim(raw);
    if (text.empty()) throw Error(ErrorCode::InvalidArgument, "empty value");
    switch (field_kind(f)) {
      case FieldKind::date:
        return normalize_date(text, opts.date_policy);
      case FieldKind::money: {
        std::string fixed = is_numeric_context(text) ? correct_numeric_ocr(text) : text;
        return money_parse(fixed, opts.default_currency);
      }
      case FieldKind::decimal: {
        if (f == CanonicalField::weight_kg) return normalize_weight(text);
        std::string fixed = is_numeric_context(text) ? correct_numeric_ocr(text) : text;
        Decimal rate = decimal_parse(fixed);
        if (rate.micros < 0) throw Error(ErrorCode::InvalidArgument, "negative rate");
        if (rate.micros > Decimal::kScale) rate.micros /= 100;  // "10" means 10%
        return rate;
      }
      case FieldKind::text:
        break;
    }
    if (f == CanonicalField::currency) {
      std::string up;
      for (char c : text) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (is_currency_code(up)) return up;
      if (auto c = detect_currency(text)) return *c;
      throw Error(ErrorCode::InvalidArgument, "unknown currency " + text);
    }
    std::string norm = normalize_text(text);
    if (f == CanonicalField::invoice_number) {
      while (!norm.empty() && (norm.front() == '#' || norm.front() == ':' || norm.front() == ' ')) norm.erase(0, 1);
      if (norm.empty()) throw Error(ErrorCode::InvalidArgument, "empty invoice number");
    }
    return norm;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NormalizationFailed) throw;
    throw Error(ErrorCode::NormalizationFailed, std::string(field_name(f)) + ": " + e.what());
  }
}

LineItem normalize_line_item(const RawLineItem& raw, std::string_view currency) {
  auto money = [&](const std::string& s) {
    std::string t = trim(s);
    return money_parse(is_numeric_context(t) ? correct_numeric_ocr(t) : t, currency);
  };
  LineItem li;
  li.description = normalize_text(raw.description);
  std::string q = trim(raw.quantity);
  li.quantity = q.empty() ? Decimal::from_int(1) : decimal_parse(is_numeric_context(q) ? correct_numeric_ocr(q) : q);
  li.unit_price = money(raw.unit_price);
  li.amount = money(raw.amount);
  return li;
}

ValidationReport check_arithmetic(const ExtractedInvoice& inv, std::int64_t tol) {
  using F = CanonicalField;
  ValidationReport r;
  auto skipped = [](std::string id, std::string note, std::vector<F> fields) {
    return CheckResult{std::move(id), true, true, std::move(note), std::move(fields)};
  };
  auto subtotal = inv.money(F::subtotal);
  auto tax = inv.money(F::tax_amount);
  auto discount = inv.money(F::discount_amount);
  auto total = inv.money(F::total_amount);
  const FieldValue* rate_fv = inv.get(F::tax_rate);
  const Decimal* rate = rate_fv ? std::get_if<Decimal>(&rate_fv->normalized) : nullptr;

  if (inv.line_items.empty()) {
    r.checks.push_back(skipped("LINE_MATH", "no line items", {}));
  } else {
    CheckResult c{"LINE_MATH", true, false, "", {}};
    for (std::size_t i = 0; i < inv.line_items.size(); ++i) {
      const auto& li = inv.line_items[i];
      __int128 expected = mul_round_half_up(li.quantity, li.unit_price.minor_units);
      __int128 diff = expected - li.amount.minor_units;
      if (diff < 0) diff = -diff;
      if (diff > tol) {
        c.passed = false;
        if (!c.detail.empty()) c.detail += "; ";
        c.detail += "line " + std::to_string(i + 1) + ": " +
                    abs_detail("", static_cast<long long>(expected), li.amount.minor_units).substr(1);
      }
    }
    r.checks.push_back(std::move(c));
  }

  if (inv.line_items.empty() || !subtotal) {
    r.checks.push_back(skipped("SUBTOTAL", inv.line_items.empty() ? "no line items" : "subtotal absent", {F::subtotal}));
  } else {
    __int128 sum = 0;
    bool currency_ok = true;
    for (const auto& li : inv.line_items) {
      sum += li.amount.minor_units;
      currency_ok = currency_ok && li.amount.currency == subtotal->currency;
    }
    __int128 diff = sum - subtotal->minor_units;
    if (diff < 0) diff = -diff;
    bool ok = currency_ok && diff <= static_cast<__int128>(tol) * static_cast<__int128>(inv.line_items.size());
    r.checks.push_back({"SUBTOTAL", ok, false,
                        ok ? "" : (currency_ok ? abs_detail("subtotal", static_cast<long long>(sum), subtotal->minor_units)
                                               : std::string("currency mismatch between lines and subtotal")),
                        {F::subtotal}});
  }

  if (!rate || !subtotal || !tax) {
    r.checks.push_back(skipped("TAX", "needs subtotal, tax_rate and tax_amount", {F::tax_rate, F::tax_amount}));
  } else {
    __int128 expected = mul_round_half_up(*rate, subtotal->minor_units);
    __int128 diff = expected - tax->minor_units;
    if (diff < 0) diff = -diff;
    bool ok = diff <= tol && subtotal->currency == tax->currency;
    r.checks.push_back({"TAX", ok, false,
                        ok ? "" : abs_detail("tax", static_cast<long long>(expected), tax->minor_units),
                        {F::subtotal, F::tax_rate, F::tax_amount}});
  }

  if (!subtotal || !total) {
    r.checks.push_back(skipped("TOTAL", "needs subtotal and total_amount", {F::total_amount}));
  } else {
    __int128 expected = subtotal->minor_units;
    bool currency_ok = total->currency == subtotal->currency;
    std::vector<F> involved{F::subtotal, F::total_amount};
    if (tax) {
      expected += tax->minor_units;
      currency_ok = currency_ok && tax->currency == subtotal->currency;
      involved.push_back(F::tax_amount);
    }
    if (discount) {
      expected -= discount->minor_units;
      currency_ok = currency_ok && discount->currency == subtotal->currency;
      involved.push_back(F::discount_amount);
    }
    __int128 diff = expected - total->minor_units;
    if (diff < 0) diff = -diff;
    bool ok = currency_ok && diff <= tol;
    r.checks.push_back({"TOTAL", ok, false,
                        ok ? "" : (currency_ok ? abs_detail("total", static_cast<long long>(expected), total->minor_units)
                                               : std::string("currency mismatch among amounts")),
                        involved});
  }
  return r;
}

double score_confidence(double c, Agreement agreement, Arithmetic arithmetic, const ScoringConstants& k) {
  c = std::clamp(c, 0.0, 1.0);
  if (agreement == Agreement::agree) c = 1.0 - (1.0 - c) * k.agreement_factor;
  if (agreement == Agreement::conflict) c *= k.conflict_factor;
  if (arithmetic == Arithmetic::passed) c = std::max(c, k.arithmetic_floor);
  if (arithmetic == Arithmetic::failed) c *= k.arithmetic_failure_factor;
  return std::clamp(c, 0.0, 1.0);
}

double source_confidence(Provenance p, std::span<const Token> support, const ScoringConstants& k) {
  if (p == Provenance::human) return 1.0;
  if (!support.empty()) {
    double sum = 0;
    for (const auto& t : support) sum += t.source == "embedded" ? k.embedded : t.confidence;
    return sum / static_cast<double>(support.size());
  }
  switch (p) {
    case Provenance::embedded: return k.embedded;
    case Provenance::regex: return k.regex;
    case Provenance::layout: return k.layout;
    default: return k.llm_ungrounded;
  }
}

std::vector<int> ground_value(std::string_view value, std::span<const Token> tokens) {
  auto words = words_of(value);
  if (words.empty()) return {};
  std::vector<std::string> want, have;
  for (const auto& w : words) want.push_back(match_key(w));
  for (const auto& t : tokens) have.push_back(match_key(t.text));
  for (std::size_t i = 0; i + want.size() <= have.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < want.size() && ok; ++j) ok = have[i + j] == want[j] && !want[j].empty();
    if (ok) {
      std::vector<int> ids;
      for (std::size_t j = 0; j < want.size(); ++j) ids.push_back(tokens[i + j].id);
      return ids;
    }
  }
  // Words in order but not adjacent, e.g. an address broken across lines.
  std::vector<int> ids;
  std::size_t j = 0;
  for (std::size_t i = 0; i < have.size() && j < want.size(); ++i)
    if (!want[j].empty() && have[i] == want[j]) {
      ids.push_back(tokens[i].id);
      ++j;
    }
  return j == want.size() && want.size() > 1 ? ids : std::vector<int>{};
}

std::map<CanonicalField, FieldValue> fuse_fields(const FuseInputs& in, const NormalizeOptions& base_opts) {
  std::map<CanonicalField, const LabelLink*> layout;
  for (const auto& l : in.layout) layout.emplace(l.field, &l);
  NormalizeOptions opts = base_opts;
  std::map<CanonicalField, FieldValue> out;

  // A symbol or code printed on an amount stands in for a missing currency label.
  std::optional<std::string> inferred_currency;
  for (auto f : {CanonicalField::total_amount, CanonicalField::subtotal, CanonicalField::tax_amount}) {
    if (auto it = in.regex.find(f); it != in.regex.end()) inferred_currency = detect_currency(it->second.raw);
    if (!inferred_currency)
      if (auto it = layout.find(f); it != layout.end()) inferred_currency = detect_currency(it->second->value);
    if (inferred_currency) break;
  }

  std::vector<CanonicalField> order(kAllFields.begin(), kAllFields.end());
  std::stable_partition(order.begin(), order.end(), [](CanonicalField f) { return f == CanonicalField::currency; });
  for (auto f : order) {
    std::optional<std::string> llm, rx, lay;
    if (in.llm) {
      auto it = in.llm->fields.find(f);
      if (it != in.llm->fields.end() && !trim(it->second).empty()) llm = it->second;
    }
    if (auto it = in.regex.find(f); it != in.regex.end()) rx = it->second.raw;
    if (auto it = layout.find(f); it != layout.end()) lay = it->second->value;
    if (f == CanonicalField::currency && !rx) rx = inferred_currency;
    if (!llm && !rx && !lay) continue;

    FieldValue fv;
    fv.field = f;
    std::vector<std::pair<std::string, Provenance>> others;
    if (llm) {
      fv.raw_text = *llm;
      fv.provenance = Provenance::llm;
      if (rx) others.emplace_back(*rx, Provenance::regex);
      if (lay) others.emplace_back(*lay, Provenance::layout);
    } else if (rx) {
      fv.raw_text = *rx;
      fv.provenance = Provenance::regex;
      if (lay) others.emplace_back(*lay, Provenance::layout);
    } else {
      fv.raw_text = *lay;
      fv.provenance = Provenance::layout;
    }
    std::string mine = comparable(f, fv.raw_text, opts);
    const std::pair<std::string, Provenance>* agreeing = nullptr;
    for (const auto& o : others)
      if (comparable(f, o.first, opts) == mine) {
        agreeing = &o;
        break;
      }
    fv.agreement = agreeing != nullptr;
    fv.conflict = !agreeing && !others.empty();

    fv.support = ground_value(fv.raw_text, in.tokens);
    if (fv.support.empty() && agreeing) {
      if (agreeing->second == Provenance::layout)
        fv.support = layout.at(f)->token_ids;
      else
        fv.support = ground_value(agreeing->first, in.tokens);
    }
    if (fv.support.empty() && fv.provenance == Provenance::layout) fv.support = layout.at(f)->token_ids;

    try {
      fv.normalized = normalize_field(f, fv.raw_text, opts);
    } catch (const Error&) {
      fv.normalized = std::monostate{};
    }
    if (f == CanonicalField::currency) {
      if (auto* code = std::get_if<std::string>(&fv.normalized)) opts.default_currency = *code;
    }
    out.emplace(f, std::move(fv));
  }
  return out;
}

Arithmetic arithmetic_for(CanonicalField f, const ValidationReport& report) {
  bool passed = false;
  for (const auto& c : report.checks) {
    if (c.skipped) continue;
    if (std::find(c.fields_involved.begin(), c.fields_involved.end(), f) == c.fields_involved.end()) continue;
    if (!c.passed) return Arithmetic::failed;
    passed = true;
  }
  return passed ? Arithmetic::passed : Arithmetic::not_applicable;
}

void score_fields(ExtractedInvoice& inv, std::span<const Token> tokens, const ScoringConstants& k) {
  std::map<int, const Token*> by_id;
  for (const auto& t : tokens) by_id[t.id] = &t;
  for (auto& [f, fv] : inv.fields) {
    std::vector<Token> support;
    for (int id : fv.support)
      if (auto it = by_id.find(id); it != by_id.end()) support.push_back(*it->second);
    Agreement agreement = fv.agreement ? Agreement::agree : fv.conflict ? Agreement::conflict : Agreement::none;
    if (fv.provenance == Provenance::human) agreement = Agreement::none;
    Arithmetic arith = arithmetic_for(f, inv.validation_report);
    double c = score_confidence(source_confidence(fv.provenance, support, k), agreement, arith, k);
    bool unnormalized = std::holds_alternative<std::monostate>(fv.normalized);
    if (unnormalized) c *= k.arithmetic_failure_factor;
    if (fv.provenance == Provenance::human && !unnormalized) c = 1.0;
    fv.confidence = c;
    if (unnormalized || arith == Arithmetic::failed)
      fv.validation = Validation::failed;
    else if (arith == Arithmetic::passed || agreement == Agreement::agree || fv.provenance == Provenance::human)
      fv.validation = Validation::passed;
    else
      fv.validation = Validation::unchecked;
  }
}

std::string_view to_string(DedupResult r) noexcept {
  switch (r) {
    case DedupResult::fresh: return "new";
    case DedupResult::duplicate_exact: return "duplicate_exact";
    case DedupResult::duplicate_logical: return "duplicate_logical";
  }
  return "new";
}

std::optional<std::string> logical_hash(const ExtractedInvoice& inv) {
  using F = CanonicalField;
  auto text = [&](F f) -> std::optional<std::string> {
    const FieldValue* fv = inv.get(f);
    if (!fv || std::holds_alternative<std::monostate>(fv->normalized)) return std::nullopt;
    return normalized_to_string(fv->normalized);
  };
  auto vendor = text(F::vendor_name), number = text(F::invoice_number), date = text(F::invoice_date);
  auto total = inv.money(F::total_amount);
  if (!vendor || !number || !date || !total) return std::nullopt;
  std::string key = *vendor + "|" + *number + "|" + *date + "|" + std::to_string(total->minor_units) + "|" +
                    inv.currency_or(total->currency);
  return sha256_hex(collapse_ws_lower(key));
}

DedupResult DedupIndex::check(const std::string& raw_hash, const std::optional<std::string>& logical) const {
  if (raw_.count(raw_hash)) return DedupResult::duplicate_exact;
  if (logical && logical_.count(*logical)) return DedupResult::duplicate_logical;
  return DedupResult::fresh;
}

void DedupIndex::record(const std::string& raw_hash, const std::optional<std::string>& logical) {
  raw_.insert(raw_hash);
  if (logical) logical_.insert(*logical);
}

std::string DedupIndex::serialize() const {
  std::string out;
  for (const auto& h : raw_) out += "raw " + h + "\n";
  for (const auto& h : logical_) out += "logical " + h + "\n";
  return out;
}

DedupIndex DedupIndex::parse(std::string_view text) {
  DedupIndex idx;
  for (const auto& line : split(text, '\n')) {
    if (line.rfind("raw ", 0) == 0) idx.raw_.insert(line.substr(4));
    else if (line.rfind("logical ", 0) == 0) idx.logical_.insert(line.substr(8));
  }
  return idx;
}

void DedupIndex::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

DedupIndex DedupIndex::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return parse(read_text_file(path));
}

DedupResult dedup_check(const ExtractedInvoice& inv, std::span<const std::uint8_t> raw_doc, const DedupIndex& index) {
  return index.check(sha256_hex(raw_doc), logical_hash(inv));
}

std::string VendorHistory::vendor_key(std::string_view vendor) { return collapse_ws_lower(vendor); }

const std::vector<std::int64_t>* VendorHistory::totals(std::string_view vendor) const {
  auto it = totals_.find(vendor_key(vendor));
  return it == totals_.end() ? nullptr : &it->second;
}

void VendorHistory::append(std::string_view vendor, std::int64_t total_minor) {
  totals_[vendor_key(vendor)].push_back(total_minor);
}

std::string VendorHistory::serialize() const {
  std::string out;
  for (const auto& [k, v] : totals_)
    for (auto x : v) out += k + "\t" + std::to_string(x) + "\n";
  return out;
}

VendorHistory VendorHistory::parse(std::string_view text) {
  VendorHistory h;
  for (const auto& line : split(text, '\n')) {
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) continue;
    h.totals_[line.substr(0, tab)].push_back(std::stoll(line.substr(tab + 1)));
  }
  return h;
}

AnomalyResult detect_anomaly(const VendorHistory& history, std::string_view vendor, const Money& total) {
  const auto* xs = history.totals(vendor);
  if (!xs || xs->size() < 5) return {};
  long double n = static_cast<long double>(xs->size());
  long double mean = 0;
  for (auto x : *xs) mean += x;
  mean /= n;
  long double ss = 0;
  for (auto x : *xs) ss += (x - mean) * (x - mean);
  long double sd = std::sqrt(ss / (n - 1));
  long double x = total.minor_units;
  if (sd == 0) return {x != mean, std::nullopt};
  double z = static_cast<double>((x - mean) / sd);
  return {std::fabs(z) > 3.0, z};
}

std::string audit_to_json(const AuditEvent& e) {
  json j{{"timestamp", e.timestamp}, {"actor", e.actor}, {"action", e.action}, {"subject", e.subject}};
  j["before"] = e.before ? json(*e.before) : json(nullptr);
  j["after"] = e.after ? json(*e.after) : json(nullptr);
  return j.dump();
}

AuditEvent audit_from_json(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "malformed audit line");
  AuditEvent e;
  e.timestamp = j.value("timestamp", "");
  e.actor = j.value("actor", "system");
  e.action = j.value("action", "");
  e.subject = j.value("subject", "");
  if (j.contains("before") && j["before"].is_string()) e.before = j["before"].get<std::string>();
  if (j.contains("after") && j["after"].is_string()) e.after = j["after"].get<std::string>();
  return e;
}

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  for (const auto& e : read()) {
    auto& last = last_ts_[e.subject];
    last = std::max(last, e.timestamp);
  }
}

AuditEvent AuditLog::append(AuditEvent e) {
  std::lock_guard lock(mu_);
  if (e.timestamp.empty()) e.timestamp = utc_now_iso();
  auto& last = last_ts_[e.subject];
  if (e.timestamp < last) e.timestamp = last;
  last = e.timestamp;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_.string());
  out << audit_to_json(e) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path_.string());
  return e;
}

std::vector<AuditEvent> AuditLog::read(std::string_view subject) const {
  std::vector<AuditEvent> out;
  if (!std::filesystem::exists(path_)) return out;
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto e = audit_from_json(line);
      if (subject.empty() || e.subject == subject) out.push_back(std::move(e));
    } catch (const Error&) {
      // torn trailing line after a crash
    }
  }
  return out;
}

AuditEvent finalize(ExtractedInvoice& inv, double tau, DedupResult dedup, const AnomalyResult& anomaly) {
  inv.anomaly_flagged = anomaly.flagged;
  inv.anomaly_z = anomaly.z;
  double overall = overall_confidence(inv);
  if (anomaly.flagged) overall = std::min(overall, tau - 0.01);
  inv.overall_confidence = overall;
  if (dedup != DedupResult::fresh)
    inv.status = InvoiceStatus::rejected_duplicate;
  else
    inv.status = overall >= tau ? InvoiceStatus::auto_approved : InvoiceStatus::needs_review;
  json after{{"status", to_string(inv.status)}, {"overall_confidence", overall}, {"dedup", to_string(dedup)},
             {"anomaly_flagged", anomaly.flagged}};
  AuditEvent e;
  e.action = "finalize";
  e.after = after.dump();
  return e;
}

std::vector<AuditEvent> apply_corrections(ExtractedInvoice& inv, std::span<const Correction> corrections,
                                          const std::string& reviewer, double tau, const NormalizeOptions& opts,
                                          std::span<const Token> tokens, const ScoringConstants& k) {
  if (inv.status != InvoiceStatus::needs_review)
    throw Error(ErrorCode::JobNotReviewable, std::string("invoice is ") + std::string(to_string(inv.status)));
  if (corrections.empty()) throw Error(ErrorCode::InvalidArgument, "no corrections given");
  std::vector<std::pair<CanonicalField, NormalizedValue>> staged;
  NormalizeOptions local = opts;
  if (const FieldValue* cur = inv.get(CanonicalField::currency))
    if (auto* code = std::get_if<std::string>(&cur->normalized)) local.default_currency = *code;
  for (const auto& c : corrections)
    if (field_from_name(c.field) == CanonicalField::currency)
      local.default_currency = std::get<std::string>(normalize_field(CanonicalField::currency, c.new_value, local));
  for (const auto& c : corrections) {
    auto f = field_from_name(c.field);
    if (!f) throw Error(ErrorCode::UnknownField, c.field);
    staged.emplace_back(*f, normalize_field(*f, c.new_value, local));
  }
  auto snapshot = [](const FieldValue* fv) {
    if (!fv) return json(nullptr);
    return json{{"raw", fv->raw_text},
                {"normalized", normalized_to_string(fv->normalized)},
                {"confidence", fv->confidence},
                {"provenance", to_string(fv->provenance)}};
  };
  std::vector<json> before;
  for (std::size_t i = 0; i < staged.size(); ++i) {
    auto f = staged[i].first;
    before.push_back(snapshot(inv.get(f)));
    FieldValue& fv = inv.fields[f];
    fv.field = f;
    fv.raw_text = corrections[i].new_value;
    fv.normalized = staged[i].second;
    fv.provenance = Provenance::human;
    fv.confidence = 1.0;
    fv.support.clear();
    fv.agreement = false;
    fv.conflict = false;
  }
  inv.validation_report = check_arithmetic(inv);
  score_fields(inv, tokens, k);
  inv.overall_confidence = overall_confidence(inv);
  bool ok = inv.overall_confidence >= tau && inv.validation_report.all_passed();
  inv.status = ok ? InvoiceStatus::corrected : InvoiceStatus::needs_review;
  std::vector<AuditEvent> events;
  for (std::size_t i = 0; i < staged.size(); ++i) {
    AuditEvent e;
    e.actor = reviewer.empty() ? "reviewer" : reviewer;
    e.action = "correct:" + std::string(field_name(staged[i].first));
    e.before = before[i].dump();
    json after = snapshot(inv.get(staged[i].first));
    after["note"] = corrections[i].note;
    after["status"] = to_string(inv.status);
    e.after = after.dump();
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace invx
