#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "invx/error.hpp"
#include "invx/model.hpp"
#include "invx/money.hpp"
#include "support.hpp"

namespace invx {
namespace {

TEST(Money, ParseExamples) {
  EXPECT_EQ(money_parse("1,234.50", "USD"), (Money{123450, "USD"}));
  EXPECT_EQ(money_parse("0", "USD"), (Money{0, "USD"}));
  EXPECT_EQ(money_parse("\xE2\x82\xB9 1.234,50", "INR"), (Money{123450, "INR"}));
  EXPECT_EQ(money_parse("$ 12", "EUR"), (Money{1200, "USD"}));
  EXPECT_EQ(money_parse("EUR 165.00", "USD"), (Money{16500, "EUR"}));
  EXPECT_EQ(money_parse("(15.00)", "USD"), (Money{-1500, "USD"}));
  EXPECT_EQ(money_parse("12.5", "USD"), (Money{1250, "USD"}));
}

TEST(Money, ParseErrors) {
  for (const char* bad : {"", "abc", "1.2.3", "1,23,4.5.6", "$"}) {
    try {
      money_parse(bad, "USD");
      ADD_FAILURE() << "accepted '" << bad << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedAmount) << bad;
    }
  }
}

TEST(Money, SumExamples) {
  std::vector<Money> two{{100, "USD"}, {250, "USD"}};
  EXPECT_EQ(money_sum(two, "USD"), (Money{350, "USD"}));
  EXPECT_EQ(money_sum({}, "USD"), (Money{0, "USD"}));
  std::vector<Money> mixed{{100, "USD"}, {1, "EUR"}};
  try {
    money_sum(mixed, "USD");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CurrencyMismatch);
  }
  std::vector<Money> big{{std::numeric_limits<std::int64_t>::max(), "USD"}, {1, "USD"}};
  try {
    money_sum(big, "USD");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Overflow);
  }
}

TEST(Money, FormatExamples) {
  EXPECT_EQ(money_format({123450, "USD"}), "1234.50");
  EXPECT_EQ(money_format({-5, "USD"}), "-0.05");
  EXPECT_EQ(money_format({0, "EUR"}), "0.00");
}

TEST(MoneyProperty, ParseFormatRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> dist(-1'000'000'000'000LL, 1'000'000'000'000LL);
  std::vector<std::int64_t> values{-1'000'000'000'000LL, 1'000'000'000'000LL, 0, 1, -1, 99, -100, 999'999};
  for (int i = 0; i < 20000; ++i) values.push_back(dist(rng));
  for (auto v : values) {
    Money m{v, "EUR"};
    ASSERT_EQ(money_parse(money_format(m), "EUR"), m) << v;
  }
}

TEST(MoneyProperty, SumIsOrderInsensitive) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> dist(-1'000'000'000, 1'000'000'000);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Money> items(static_cast<std::size_t>(rng() % 20));
    std::int64_t expected = 0;
    for (auto& m : items) {
      m = {dist(rng), "GBP"};
      expected += m.minor_units;
    }
    for (int perm = 0; perm < 5; ++perm) {
      std::shuffle(items.begin(), items.end(), rng);
      ASSERT_EQ(money_sum(items, "GBP").minor_units, expected);
    }
    // Associativity: summing two halves then combining matches the whole.
    auto mid = items.begin() + static_cast<std::ptrdiff_t>(items.size() / 2);
    std::vector<Money> left(items.begin(), mid), right(mid, items.end());
    ASSERT_EQ(money_add(money_sum(left, "GBP"), money_sum(right, "GBP")).minor_units, expected);
  }
}

TEST(Decimal, ParseFormat) {
  EXPECT_EQ(decimal_parse("12").micros, 12'000'000);
  EXPECT_EQ(decimal_parse("-0.5").micros, -500'000);
  EXPECT_EQ(decimal_parse("1,000.25").micros, 1'000'250'000);
  EXPECT_EQ(decimal_parse("7%").micros, 70'000);
  EXPECT_EQ(decimal_format(Decimal{2'500'000'000}), "2500");
  EXPECT_EQ(decimal_format(Decimal{100'000}), "0.1");
  EXPECT_EQ(decimal_format(Decimal{-3'250'000}), "-3.25");
}

TEST(Decimal, MulRoundHalfUp) {
  EXPECT_EQ(mul_round_half_up(Decimal{1'500'000}, 333), 500);  // 499.5 -> 500
  EXPECT_EQ(mul_round_half_up(Decimal{100'000}, 15005), 1501);  // 1500.5 -> 1501
  EXPECT_EQ(mul_round_half_up(Decimal::from_int(3), 1999), 5997);
}

TEST(Dates, Validity) {
  EXPECT_TRUE(is_valid_date(2024, 2, 29));
  EXPECT_FALSE(is_valid_date(2023, 2, 29));
  EXPECT_FALSE(is_valid_date(2024, 4, 31));
  EXPECT_FALSE(make_date(2024, 13, 1));
  EXPECT_EQ(to_iso(*make_date(2024, 3, 5)), "2024-03-05");
}

TEST(Fields, Vocabulary) {
  EXPECT_EQ(kAllFields.size(), 14u);
  for (auto f : kAllFields) EXPECT_EQ(field_from_name(field_name(f)), f);
  int required = 0;
  for (auto f : kAllFields) required += is_required(f);
  EXPECT_EQ(required, 4);
  EXPECT_TRUE(is_required(CanonicalField::total_amount));
  EXPECT_FALSE(is_required(CanonicalField::due_date));
}

TEST(ConfigValidate, Ranges) {
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.review_threshold = 0;
  EXPECT_THROW(c.validate(), Error);
  c.review_threshold = 1.0;
  c.target_dpi = 71;
  EXPECT_THROW(c.validate(), Error);
  c.target_dpi = 1200;
  EXPECT_NO_THROW(c.validate());
}

TEST(OverallConfidenceProperty, EqualsBruteForceMin) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> conf(0, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    ExtractedInvoice inv;
    for (auto f : kAllFields)
      if (rng() % 4) {
        FieldValue fv;
        fv.field = f;
        fv.confidence = conf(rng);
        inv.fields[f] = fv;
      }
    double expected = 1.0;
    for (auto f : kRequiredFields) {
      auto it = inv.fields.find(f);
      expected = std::min(expected, it == inv.fields.end() ? 0.0 : it->second.confidence);
    }
    ASSERT_DOUBLE_EQ(overall_confidence(inv), expected);
  }
}

}  // namespace
}  // namespace invx
