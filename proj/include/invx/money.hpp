#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace invx {

/// Amount of money in integer minor units (cents). Every currency is treated
/// as having two fraction digits.
struct Money {
  std::int64_t minor_units = 0;
  std::string currency = "USD";

  friend bool operator==(const Money&, const Money&) = default;
};

bool is_currency_code(std::string_view code) noexcept;

/// Parses a human-written amount such as "1,234.50", "$ 12", "₹ 1.234,50" or
/// "(15.00)". The rightmost of '.'/',' followed by one or two digits is the
/// decimal mark; any other '.'/',' must separate groups of three digits.
/// A currency symbol or ISO code in the text overrides `default_currency`.
Money money_parse(std::string_view raw, std::string_view default_currency);

/// Plain form: optional '-', integer part without grouping, '.', two digits.
std::string money_format(const Money& m);

/// Exact sum. An empty list sums to zero in `currency`.
Money money_sum(std::span<const Money> items, std::string_view currency);

Money money_add(const Money& a, const Money& b);
Money money_sub(const Money& a, const Money& b);

/// Currency detected from a symbol or code inside `raw`, if any.
std::optional<std::string> detect_currency(std::string_view raw);

/// Fixed-point decimal with six fraction digits; used for quantities, rates
/// and weights.
struct Decimal {
  static constexpr std::int64_t kScale = 1'000'000;
  std::int64_t micros = 0;

  static Decimal from_int(std::int64_t v) { return Decimal{v * kScale}; }

  friend auto operator<=>(const Decimal&, const Decimal&) = default;
};

/// Accepts "12", "-0.5", "1,000.25", "7%" (percent divides by 100).
Decimal decimal_parse(std::string_view raw);
/// Shortest exact form: "2500", "0.1", "-3.25".
std::string decimal_format(const Decimal& d);
Decimal decimal_mul_int(const Decimal& d, std::int64_t factor);

/// round_half_up(quantity * unit_price) in minor units.
std::int64_t mul_round_half_up(const Decimal& quantity, std::int64_t minor_units);

/// Calendar date; always a valid proleptic Gregorian date once constructed
/// through `make_date`.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  friend auto operator<=>(const Date&, const Date&) = default;
};

bool is_valid_date(int year, int month, int day) noexcept;
std::optional<Date> make_date(int year, int month, int day) noexcept;
std::string to_iso(const Date& d);

}  // namespace invx
