#include "invx/money.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>

#include "invx/error.hpp"

namespace invx {
namespace {

struct SymbolEntry {
  std::string_view symbol;
  std::string_view code;
};

// Longest symbols first so "US$" wins over "$".
constexpr std::array<SymbolEntry, 9> kSymbols{{
    {"US$", "USD"},
    {"Rs.", "INR"},
    {"Rs", "INR"},
    {"\xE2\x82\xB9", "INR"},  // ₹
    {"\xE2\x82\xAC", "EUR"},  // €
    {"\xC2\xA3", "GBP"},      // £
    {"\xC2\xA5", "JPY"},      // ¥
    {"$", "USD"},
    {"\xE2\x82\xA9", "KRW"},  // ₩
}};

constexpr std::array<std::string_view, 14> kCodes{
    "USD", "EUR", "GBP", "INR", "JPY", "CAD", "AUD", "CHF", "CNY", "SGD", "NZD", "SEK", "KRW", "ZAR"};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

[[noreturn]] void malformed(std::string_view raw, std::string_view why) {
  throw Error(ErrorCode::MalformedAmount, "'" + std::string(raw) + "': " + std::string(why));
}

// Result of separator disambiguation: digits of the integer part and of the
// fractional part, no separators left.
struct SplitNumber {
  std::string integer;
  std::string fraction;
  bool has_decimal_mark = false;
};

bool valid_grouping(std::string_view digits_with_seps, char sep) {
  // First group 1..3 digits, following groups exactly 3.
  std::size_t start = 0;
  bool first = true;
  while (true) {
    std::size_t pos = digits_with_seps.find(sep, start);
    std::size_t len = (pos == std::string_view::npos ? digits_with_seps.size() : pos) - start;
    if (first ? (len < 1 || len > 3) : len != 3) return false;
    first = false;
    if (pos == std::string_view::npos) return true;
    start = pos + 1;
  }
}

// `s` holds only digits, '.' and ','. `max_fraction` bounds digits accepted
// after a decimal mark. When `lone_dot_is_decimal` is set a single '.' is
// always a decimal point regardless of how many digits follow it.
SplitNumber split_separators(std::string_view raw, std::string_view s, std::size_t max_fraction,
                             bool lone_dot_is_decimal) {
  SplitNumber out;
  std::size_t last = s.find_last_of(".,");
  if (last == std::string_view::npos) {
    out.integer = std::string(s);
    return out;
  }
  std::size_t trailing = s.size() - last - 1;
  char mark = s[last];
  bool decimal = trailing <= 2 && trailing <= max_fraction;
  if (!decimal && lone_dot_is_decimal && mark == '.' &&
      std::count(s.begin(), s.end(), '.') == 1 && s.find(',') == std::string_view::npos &&
      trailing <= max_fraction) {
    decimal = true;
  }
  std::string_view int_part = decimal ? s.substr(0, last) : s;
  if (decimal) {
    if (int_part.find(mark) != std::string_view::npos) malformed(raw, "more than one decimal mark");
    out.fraction = std::string(s.substr(last + 1));
    out.has_decimal_mark = true;
  }
  bool has_dot = int_part.find('.') != std::string_view::npos;
  bool has_comma = int_part.find(',') != std::string_view::npos;
  if (has_dot && has_comma) malformed(raw, "mixed grouping separators");
  if (has_dot || has_comma) {
    char sep = has_dot ? '.' : ',';
    if (!valid_grouping(int_part, sep)) malformed(raw, "bad digit grouping");
    for (char c : int_part)
      if (c != sep) out.integer.push_back(c);
  } else {
    out.integer = std::string(int_part);
  }
  return out;
}

struct Cleaned {
  std::string number;  // digits, '.', ','
  bool negative = false;
  std::optional<std::string> currency;
};

Cleaned clean_amount(std::string_view raw, bool allow_percent, bool* percent) {
  Cleaned out;
  std::string work(raw);
  // Remove currency symbols and codes.
  for (const auto& [sym, code] : kSymbols) {
    std::size_t pos;
    while ((pos = work.find(sym)) != std::string::npos) {
      if (!out.currency) out.currency = std::string(code);
      work.replace(pos, sym.size(), " ");
    }
  }
  for (auto code : kCodes) {
    std::size_t pos = 0;
    while ((pos = work.find(code, pos)) != std::string::npos) {
      bool left_ok = pos == 0 || !is_alpha(work[pos - 1]);
      bool right_ok = pos + 3 >= work.size() || !is_alpha(work[pos + 3]);
      if (left_ok && right_ok) {
        if (!out.currency) out.currency = std::string(code);
        work.replace(pos, 3, " ");
      } else {
        pos += 3;
      }
    }
  }
  bool open_paren = false;
  bool close_paren = false;
  bool seen_digit = false;
  for (std::size_t i = 0; i < work.size(); ++i) {
    char c = work[i];
    if (is_digit(c)) {
      out.number.push_back(c);
      seen_digit = true;
    } else if (c == '.' || c == ',') {
      out.number.push_back(c);
    } else if (c == '-' || c == '\xE2' /* unicode minus prefix */) {
      if (c == '\xE2') {
        if (work.compare(i, 3, "\xE2\x88\x92") != 0) malformed(raw, "unexpected character");
        i += 2;
      }
      out.negative = true;
    } else if (c == '+') {
    } else if (c == '(') {
      open_paren = true;
    } else if (c == ')') {
      close_paren = true;
    } else if (c == ' ' || c == '\t' || c == '\'' || c == '\n') {
      // grouping spaces / apostrophes inside digits are dropped
    } else if (c == '\xC2' && i + 1 < work.size() && work[i + 1] == '\xA0') {
      ++i;  // no-break space
    } else if (c == '%' && allow_percent) {
      *percent = true;
    } else {
      malformed(raw, "unexpected character");
    }
  }
  if (open_paren != close_paren) malformed(raw, "unbalanced parentheses");
  if (open_paren) out.negative = true;
  if (!seen_digit) malformed(raw, "no digits");
  // Strip leading/trailing separators that are not decimal marks ("1,234." is
  // tolerated as "1,234").
  while (!out.number.empty() && (out.number.back() == '.' || out.number.back() == ','))
    out.number.pop_back();
  if (!out.number.empty() && (out.number.front() == '.' || out.number.front() == ','))
    out.number.insert(out.number.begin(), '0');
  return out;
}

std::int64_t digits_to_int(std::string_view raw, std::string_view digits) {
  std::int64_t v = 0;
  for (char c : digits) {
    if (__builtin_mul_overflow(v, 10, &v) || __builtin_add_overflow(v, c - '0', &v))
      throw Error(ErrorCode::Overflow, "'" + std::string(raw) + "' exceeds 64-bit range");
  }
  return v;
}

}  // namespace

bool is_currency_code(std::string_view code) noexcept {
  return code.size() == 3 &&
         std::all_of(code.begin(), code.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

std::optional<std::string> detect_currency(std::string_view raw) {
  bool unused = false;
  try {
    return clean_amount(raw, true, &unused).currency;
  } catch (const Error&) {
  }
  for (const auto& [sym, code] : kSymbols)
    if (raw.find(sym) != std::string_view::npos) return std::string(code);
  for (auto code : kCodes)
    if (raw.find(code) != std::string_view::npos) return std::string(code);
  return std::nullopt;
}

Money money_parse(std::string_view raw, std::string_view default_currency) {
  if (raw.empty()) malformed(raw, "empty");
  bool percent = false;
  Cleaned c = clean_amount(raw, false, &percent);
  SplitNumber n = split_separators(raw, c.number, 2, false);
  std::string fraction = n.fraction;
  fraction.resize(2, '0');
  std::int64_t units = digits_to_int(raw, n.integer.empty() ? "0" : n.integer);
  std::int64_t minor;
  if (__builtin_mul_overflow(units, 100, &minor) ||
      __builtin_add_overflow(minor, digits_to_int(raw, fraction), &minor))
    throw Error(ErrorCode::Overflow, "'" + std::string(raw) + "' exceeds 64-bit range");
  Money m;
  m.minor_units = c.negative ? -minor : minor;
  m.currency = c.currency ? *c.currency : std::string(default_currency);
  if (!is_currency_code(m.currency))
    throw Error(ErrorCode::InvalidArgument, "bad currency code '" + m.currency + "'");
  return m;
}

std::string money_format(const Money& m) {
  // Magnitude via unsigned arithmetic so INT64_MIN formats correctly.
  std::uint64_t mag = m.minor_units < 0 ? 0 - static_cast<std::uint64_t>(m.minor_units)
                                        : static_cast<std::uint64_t>(m.minor_units);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%llu.%02llu", m.minor_units < 0 ? "-" : "",
                static_cast<unsigned long long>(mag / 100),
                static_cast<unsigned long long>(mag % 100));
  return buf;
}

Money money_add(const Money& a, const Money& b) {
  if (a.currency != b.currency)
    throw Error(ErrorCode::CurrencyMismatch, a.currency + " vs " + b.currency);
  Money r{0, a.currency};
  if (__builtin_add_overflow(a.minor_units, b.minor_units, &r.minor_units))
    throw Error(ErrorCode::Overflow, "money addition overflow");
  return r;
}

Money money_sub(const Money& a, const Money& b) {
  if (a.currency != b.currency)
    throw Error(ErrorCode::CurrencyMismatch, a.currency + " vs " + b.currency);
  Money r{0, a.currency};
  if (__builtin_sub_overflow(a.minor_units, b.minor_units, &r.minor_units))
    throw Error(ErrorCode::Overflow, "money subtraction overflow");
  return r;
}

Money money_sum(std::span<const Money> items, std::string_view currency) {
  Money total{0, std::string(currency)};
  for (const auto& m : items) total = money_add(total, m);
  return total;
}

Decimal decimal_parse(std::string_view raw) {
  if (raw.empty()) throw Error(ErrorCode::MalformedAmount, "empty decimal");
  bool percent = false;
  Cleaned c = clean_amount(raw, true, &percent);
  SplitNumber n = split_separators(raw, c.number, 6, true);
  if (n.fraction.size() > 6) malformed(raw, "more than six fraction digits");
  std::string fraction = n.fraction;
  fraction.resize(6, '0');
  std::int64_t units = digits_to_int(raw, n.integer.empty() ? "0" : n.integer);
  std::int64_t micros;
  if (__builtin_mul_overflow(units, Decimal::kScale, &micros) ||
      __builtin_add_overflow(micros, digits_to_int(raw, fraction), &micros))
    throw Error(ErrorCode::Overflow, "'" + std::string(raw) + "' exceeds decimal range");
  if (percent) micros /= 100;  // loses digits below 1e-8, acceptable for rates
  return Decimal{c.negative ? -micros : micros};
}

std::string decimal_format(const Decimal& d) {
  std::uint64_t mag = d.micros < 0 ? 0 - static_cast<std::uint64_t>(d.micros)
                                   : static_cast<std::uint64_t>(d.micros);
  std::string s = (d.micros < 0 ? "-" : "") + std::to_string(mag / Decimal::kScale);
  std::uint64_t frac = mag % Decimal::kScale;
  if (frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(frac));
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    s += "." + f;
  }
  return s;
}

Decimal decimal_mul_int(const Decimal& d, std::int64_t factor) {
  Decimal r;
  if (__builtin_mul_overflow(d.micros, factor, &r.micros))
    throw Error(ErrorCode::Overflow, "decimal multiplication overflow");
  return r;
}

std::int64_t mul_round_half_up(const Decimal& quantity, std::int64_t minor_units) {
  __int128 p = static_cast<__int128>(quantity.micros) * minor_units;
  bool neg = p < 0;
  if (neg) p = -p;
  __int128 q = (p + Decimal::kScale / 2) / Decimal::kScale;
  if (neg) q = -q;
  if (q > std::numeric_limits<std::int64_t>::max() || q < std::numeric_limits<std::int64_t>::min())
    throw Error(ErrorCode::Overflow, "line amount overflow");
  return static_cast<std::int64_t>(q);
}

bool is_valid_date(int year, int month, int day) noexcept {
  if (year < 1 || year > 9999 || month < 1 || month > 12 || day < 1) return false;
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  int limit = kDays[month - 1] + (month == 2 && leap ? 1 : 0);
  return day <= limit;
}

std::optional<Date> make_date(int year, int month, int day) noexcept {
  if (!is_valid_date(year, month, day)) return std::nullopt;
  return Date{year, month, day};
}

std::string to_iso(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

}  // namespace invx
