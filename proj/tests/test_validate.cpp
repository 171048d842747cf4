#include <json.hpp>

#include <algorithm>
#include <random>

#include "invx/error.hpp"
#include "invx/validate.hpp"
#include "support.hpp"

namespace invx {
namespace {

using F = CanonicalField;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

FieldValue fv(F f, NormalizedValue v, double conf = 0.95) {
  FieldValue x;
  x.field = f;
  x.raw_text = normalized_to_string(v);
  x.normalized = std::move(v);
  x.confidence = conf;
  return x;
}

void set_money(ExtractedInvoice& inv, F f, std::int64_t minor, const std::string& cur = "USD") {
  inv.fields[f] = fv(f, Money{minor, cur});
}

LineItem line(std::int64_t qty_micros, std::int64_t price, std::int64_t amount) {
  return LineItem{"item", Decimal{qty_micros}, Money{price, "USD"}, Money{amount, "USD"}};
}

ExtractedInvoice example_invoice(std::int64_t total) {
  ExtractedInvoice inv;
  inv.line_items = {line(2'000'000, 5000, 10000), line(1'000'000, 5000, 5000)};
  set_money(inv, F::subtotal, 15000);
  set_money(inv, F::tax_amount, 1500);
  set_money(inv, F::total_amount, total);
  inv.fields[F::tax_rate] = fv(F::tax_rate, Decimal{100'000});
  return inv;
}

TEST(NormalizeDate, Examples) {
  EXPECT_EQ(normalize_date("2024-03-04", DatePolicy::day_first), (Date{2024, 3, 4}));
  EXPECT_EQ(normalize_date("03/04/2024", DatePolicy::day_first), (Date{2024, 4, 3}));
  EXPECT_EQ(normalize_date("03/04/2024", DatePolicy::month_first), (Date{2024, 3, 4}));
  EXPECT_EQ(normalize_date("25/12/2024", DatePolicy::month_first), (Date{2024, 12, 25}));
  EXPECT_EQ(normalize_date("4 March 2024", DatePolicy::day_first), (Date{2024, 3, 4}));
  EXPECT_EQ(normalize_date("March 4, 2024", DatePolicy::day_first), (Date{2024, 3, 4}));
  EXPECT_EQ(code_of([] { normalize_date("31/02/2024", DatePolicy::day_first); }), ErrorCode::ImpossibleDate);
  EXPECT_EQ(code_of([] { normalize_date("next tuesday", DatePolicy::day_first); }), ErrorCode::UnparseableDate);
}

TEST(NormalizeWeight, Examples) {
  EXPECT_EQ(normalize_weight("3 qtl"), Decimal::from_int(300));
  EXPECT_EQ(normalize_weight("2.5 ton"), Decimal::from_int(2500));
  EXPECT_EQ(normalize_weight("0 qtl"), Decimal::from_int(0));
  EXPECT_EQ(normalize_weight("12 kg"), Decimal::from_int(12));
  EXPECT_EQ(normalize_weight("7"), Decimal::from_int(7));
  EXPECT_EQ(normalize_weight("2 tonne"), Decimal::from_int(2000));
  EXPECT_EQ(normalize_weight("1.5 QTL"), Decimal::from_int(150));
  EXPECT_EQ(code_of([] { normalize_weight("4 lb"); }), ErrorCode::UnknownUnit);
}

TEST(NormalizeWeightProperty, FactorsExact) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 5000; ++i) {
    std::int64_t thousandths = static_cast<std::int64_t>(rng() % 10'000'000);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(thousandths / 1000),
                  static_cast<long long>(thousandths % 1000));
    std::int64_t micros = thousandths * 1000;
    ASSERT_EQ(normalize_weight(std::string(buf) + " qtl").micros, micros * 100) << buf;
    ASSERT_EQ(normalize_weight(std::string(buf) + " ton").micros, micros * 1000) << buf;
    ASSERT_EQ(normalize_weight(std::string(buf) + " kg").micros, micros) << buf;
    ASSERT_EQ(normalize_weight(buf).micros, micros) << buf;
  }
}

TEST(NormalizeField, Kinds) {
  NormalizeOptions o;
  EXPECT_EQ(normalized_to_string(normalize_field(F::total_amount, "$1,234.50", o)), "1234.50");
  EXPECT_EQ(std::get<Money>(normalize_field(F::total_amount, "€ 10,00", o)).currency, "EUR");
  EXPECT_EQ(normalized_to_string(normalize_field(F::tax_rate, "18%", o)), "0.18");
  EXPECT_EQ(normalized_to_string(normalize_field(F::currency, "usd", o)), "USD");
  EXPECT_EQ(normalized_to_string(normalize_field(F::vendor_name, "  Acme   Corp ", o)), "Acme Corp");
  EXPECT_EQ(code_of([&] { normalize_field(F::invoice_date, "31/02/2024", o); }), ErrorCode::NormalizationFailed);
}

TEST(Arithmetic, Examples) {
  auto ok = check_arithmetic(example_invoice(16500));
  ASSERT_EQ(ok.checks.size(), 4u);
  EXPECT_TRUE(ok.all_passed());
  for (const auto& c : ok.checks) EXPECT_FALSE(c.skipped) << c.id;

  auto bad = check_arithmetic(example_invoice(16000));
  const auto* total = bad.find("TOTAL");
  ASSERT_TRUE(total);
  EXPECT_FALSE(total->passed);
  EXPECT_NE(total->detail.find("16500"), std::string::npos);
  EXPECT_NE(total->detail.find("16000"), std::string::npos);
  EXPECT_EQ(bad.failing(), (std::vector<std::string>{"TOTAL"}));

  ExtractedInvoice bare;
  set_money(bare, F::subtotal, 9900);
  set_money(bare, F::total_amount, 9900);
  auto r = check_arithmetic(bare);
  EXPECT_TRUE(r.find("SUBTOTAL")->skipped);
  EXPECT_TRUE(r.find("TAX")->skipped);
  EXPECT_FALSE(r.find("TOTAL")->skipped);
  EXPECT_TRUE(r.find("TOTAL")->passed);
}

struct OracleVerdict {
  bool skipped;
  bool passed;
};

std::int64_t half_up(std::int64_t micros, std::int64_t minor) {
  __int128 p = static_cast<__int128>(micros) * minor;
  return static_cast<std::int64_t>((p + 500'000) / 1'000'000);
}

std::int64_t absdiff(std::int64_t a, std::int64_t b) { return a > b ? a - b : b - a; }

struct RandomInvoice {
  std::vector<std::array<std::int64_t, 3>> lines;  // qty micros, price, amount
  std::optional<std::int64_t> subtotal, tax, rate_micros, discount, total;
};

std::map<std::string, OracleVerdict> oracle(const RandomInvoice& r) {
  std::map<std::string, OracleVerdict> v;
  if (r.lines.empty()) {
    v["LINE_MATH"] = {true, true};
  } else {
    bool ok = true;
    for (const auto& l : r.lines) ok = ok && absdiff(half_up(l[0], l[1]), l[2]) <= 1;
    v["LINE_MATH"] = {false, ok};
  }
  if (r.lines.empty() || !r.subtotal) {
    v["SUBTOTAL"] = {true, true};
  } else {
    std::int64_t sum = 0;
    for (const auto& l : r.lines) sum += l[2];
    v["SUBTOTAL"] = {false, absdiff(sum, *r.subtotal) <= static_cast<std::int64_t>(r.lines.size())};
  }
  if (!r.rate_micros || !r.subtotal || !r.tax)
    v["TAX"] = {true, true};
  else
    v["TAX"] = {false, absdiff(half_up(*r.rate_micros, *r.subtotal), *r.tax) <= 1};
  if (!r.subtotal || !r.total)
    v["TOTAL"] = {true, true};
  else
    v["TOTAL"] = {false, absdiff(*r.subtotal + r.tax.value_or(0) - r.discount.value_or(0), *r.total) <= 1};
  return v;
}

RandomInvoice random_invoice(std::mt19937_64& rng) {
  auto pick = [&](std::int64_t n) { return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n)); };
  auto nudge = [&](std::int64_t& x, std::int64_t tol) {
    std::int64_t d = pick(3) == 0 ? tol : tol + 1 + pick(50);
    x += pick(2) ? d : -d;
  };
  RandomInvoice r;
  int n = static_cast<int>(pick(6));
  std::int64_t sum = 0;
  for (int i = 0; i < n; ++i) {
    std::int64_t qty = pick(4) == 0 ? pick(1000) * 1000 + 500'000 : (1 + pick(50)) * 1'000'000;
    std::int64_t price = pick(1'000'000'000 / (qty / 1'000'000 + 1));
    std::int64_t amount = half_up(qty, price);
    if (pick(8) == 0) nudge(amount, 1);
    r.lines.push_back({qty, price, amount});
    sum += amount;
  }
  std::int64_t subtotal = sum;
  if (pick(8) == 0) nudge(subtotal, std::max(1, n));
  std::int64_t rate = pick(6) * 25'000;
  std::int64_t tax = half_up(rate, subtotal);
  if (pick(8) == 0) nudge(tax, 1);
  std::int64_t discount = pick(4) == 0 ? pick(subtotal / 10 + 1) : 0;
  std::int64_t total = subtotal + tax - discount;
  if (pick(8) == 0) nudge(total, 1);
  if (pick(10)) r.subtotal = subtotal;
  if (pick(10)) r.tax = tax;
  if (pick(10)) r.rate_micros = rate;
  if (discount) r.discount = discount;
  if (pick(10)) r.total = total;
  return r;
}

TEST(ArithmeticProperty, MatchesIntegerOracle) {
  std::mt19937_64 rng(1000);
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    auto r = random_invoice(rng);
    ExtractedInvoice inv;
    for (const auto& l : r.lines) inv.line_items.push_back(line(l[0], l[1], l[2]));
    if (r.subtotal) set_money(inv, F::subtotal, *r.subtotal);
    if (r.tax) set_money(inv, F::tax_amount, *r.tax);
    if (r.discount) set_money(inv, F::discount_amount, *r.discount);
    if (r.total) set_money(inv, F::total_amount, *r.total);
    if (r.rate_micros) inv.fields[F::tax_rate] = fv(F::tax_rate, Decimal{*r.rate_micros});
    auto report = check_arithmetic(inv);
    auto want = oracle(r);
    ASSERT_EQ(report.checks.size(), want.size());
    for (const auto& c : report.checks) {
      ASSERT_TRUE(want.count(c.id)) << c.id;
      ASSERT_EQ(c.skipped, want[c.id].skipped) << "invoice " << i << " " << c.id;
      ASSERT_EQ(c.passed, want[c.id].passed) << "invoice " << i << " " << c.id << ": " << c.detail;
      if (!c.passed) {
        EXPECT_FALSE(c.detail.empty());
        ++failures;
      }
    }
  }
  EXPECT_GT(failures, 100);
}

TEST(Arithmetic, CurrencyMismatchFailsTotal) {
  auto inv = example_invoice(16500);
  set_money(inv, F::total_amount, 16500, "EUR");
  EXPECT_FALSE(check_arithmetic(inv).find("TOTAL")->passed);
}

TEST(Confidence, Examples) {
  EXPECT_DOUBLE_EQ(score_confidence(0.60, Agreement::agree, Arithmetic::passed), 0.90);
  EXPECT_DOUBLE_EQ(score_confidence(0.95, Agreement::none, Arithmetic::not_applicable), 0.95);
  EXPECT_DOUBLE_EQ(score_confidence(0.70, Agreement::none, Arithmetic::failed), 0.35);
  EXPECT_DOUBLE_EQ(score_confidence(0.60, Agreement::agree, Arithmetic::not_applicable), 0.80);
  EXPECT_DOUBLE_EQ(source_confidence(Provenance::llm, {}), 0.60);
  EXPECT_DOUBLE_EQ(source_confidence(Provenance::regex, {}), 0.75);
  EXPECT_DOUBLE_EQ(source_confidence(Provenance::layout, {}), 0.70);
  std::vector<Token> ocr(2);
  ocr[0].source = ocr[1].source = "ocr:x";
  ocr[0].confidence = 0.6;
  ocr[1].confidence = 0.8;
  EXPECT_DOUBLE_EQ(source_confidence(Provenance::llm, ocr), 0.7);
}

TEST(ConfidenceProperty, Monotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const Arithmetic ar[] = {Arithmetic::passed, Arithmetic::failed, Arithmetic::not_applicable};
  for (int i = 0; i < 20000; ++i) {
    double c = u(rng);
    for (auto a : ar) {
      double none = score_confidence(c, Agreement::none, a);
      ASSERT_GE(score_confidence(c, Agreement::agree, a), none);
      ASSERT_GE(none, 0.0);
      ASSERT_LE(none, 1.0);
    }
    for (auto g : {Agreement::agree, Agreement::none, Agreement::conflict})
      ASSERT_LE(score_confidence(c, g, Arithmetic::failed), score_confidence(c, g, Arithmetic::not_applicable));
  }
}

TEST(Fuse, Examples) {
  PartialInvoice llm;
  llm.fields[F::invoice_number] = "INV-1";
  llm.fields[F::total_amount] = "150.00";
  FuseInputs in;
  in.llm = &llm;
  in.regex[F::invoice_number] = RegexCandidate{F::invoice_number, "INV-1", 0, 5, "p", ""};
  in.regex[F::total_amount] = RegexCandidate{F::total_amount, "165.00", 0, 6, "p", ""};
  in.regex[F::due_date] = RegexCandidate{F::due_date, "2024-04-03", 0, 10, "p", ""};
  auto out = fuse_fields(in, NormalizeOptions{});
  EXPECT_EQ(out[F::invoice_number].raw_text, "INV-1");
  EXPECT_TRUE(out[F::invoice_number].agreement);
  EXPECT_EQ(out[F::invoice_number].provenance, Provenance::llm);
  EXPECT_EQ(out[F::total_amount].raw_text, "150.00");
  EXPECT_TRUE(out[F::total_amount].conflict);
  EXPECT_EQ(out[F::due_date].provenance, Provenance::regex);
}

TEST(Fuse, NumericOcrConfusionsAgree) {
  PartialInvoice llm;
  llm.fields[F::total_amount] = "165.00";
  FuseInputs in;
  in.llm = &llm;
  in.regex[F::total_amount] = RegexCandidate{F::total_amount, "16S.0O", 0, 7, "p", ""};
  EXPECT_TRUE(fuse_fields(in, NormalizeOptions{})[F::total_amount].agreement);
}

TEST(Dedup, Examples) {
  ExtractedInvoice inv = example_invoice(16500);
  inv.fields[F::vendor_name] = fv(F::vendor_name, std::string("Acme Corp"));
  inv.fields[F::invoice_number] = fv(F::invoice_number, std::string("INV-1"));
  inv.fields[F::invoice_date] = fv(F::invoice_date, Date{2024, 3, 4});
  EXPECT_EQ(logical_hash(inv), sha256_hex("acme corp|inv-1|2024-03-04|16500|usd"));

  auto bytes = test::as_bytes("%PDF-1.4 first");
  DedupIndex index;
  EXPECT_EQ(dedup_check(inv, bytes, index), DedupResult::fresh);
  index.record(sha256_hex(bytes), logical_hash(inv));
  EXPECT_EQ(dedup_check(inv, bytes, index), DedupResult::duplicate_exact);
  EXPECT_EQ(dedup_check(inv, test::as_bytes("%PDF-1.4 rescan"), index), DedupResult::duplicate_logical);
  auto other = inv;
  other.fields[F::invoice_number] = fv(F::invoice_number, std::string("INV-2"));
  EXPECT_EQ(dedup_check(other, test::as_bytes("%PDF-1.4 rescan"), index), DedupResult::fresh);
  other.fields.erase(F::vendor_name);
  EXPECT_FALSE(logical_hash(other));
}

TEST(Dedup, RescannedCorpusRender) {
  auto inv = make_synthetic_invoice(7, 0);
  ExtractedInvoice a;
  for (auto f : {F::vendor_name, F::invoice_number, F::invoice_date, F::total_amount, F::currency})
    a.fields[f] = FieldValue{f, inv.truth.at(f), normalize_field(f, inv.truth.at(f), NormalizeOptions{DatePolicy::day_first, inv.truth.at(F::currency)})};
  auto text_pdf = write_text_pdf(inv.runs);
  auto image_pdf = write_image_pdf(render_runs(inv.runs, 100, inv.id));
  DedupIndex index;
  index.record(sha256_hex(text_pdf), logical_hash(a));
  EXPECT_EQ(dedup_check(a, test::as_bytes(image_pdf), index), DedupResult::duplicate_logical);
}

TEST(DedupProperty, IdempotentAndOrderInsensitive) {
  std::mt19937_64 rng(8);
  std::vector<std::pair<std::string, std::string>> items;
  for (int i = 0; i < 200; ++i) items.emplace_back(sha256_hex("raw" + std::to_string(i)), sha256_hex("log" + std::to_string(i)));
  DedupIndex forward, shuffled, twice;
  for (const auto& [r, l] : items) forward.record(r, l);
  auto perm = items;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (const auto& [r, l] : perm) shuffled.record(r, l);
  for (const auto& [r, l] : items) {
    twice.record(r, l);
    twice.record(r, l);
  }
  EXPECT_EQ(forward.serialize(), shuffled.serialize());
  EXPECT_EQ(forward.serialize(), twice.serialize());
  for (const auto& [r, l] : items) EXPECT_EQ(forward.check(r, l), DedupResult::duplicate_exact);
  EXPECT_EQ(DedupIndex::parse(forward.serialize()).serialize(), forward.serialize());
}

TEST(DedupIndex, Persistence) {
  test::TempDir dir;
  DedupIndex idx;
  idx.record("aa", std::nullopt);
  idx.record("bb", std::string("cc"));
  idx.save(dir / "dedup.idx");
  auto back = DedupIndex::load(dir / "dedup.idx");
  EXPECT_EQ(back.raw_hashes(), idx.raw_hashes());
  EXPECT_EQ(back.canonical_hashes(), idx.canonical_hashes());
  EXPECT_TRUE(DedupIndex::load(dir / "missing.idx").raw_hashes().empty());
}

TEST(Anomaly, Examples) {
  VendorHistory h;
  for (std::int64_t t : {10000, 10200, 9800, 10100, 9900}) h.append("Acme Corp", t);
  auto normal = detect_anomaly(h, "acme  corp", Money{10050, "USD"});
  EXPECT_FALSE(normal.flagged);
  ASSERT_TRUE(normal.z);
  EXPECT_NEAR(*normal.z, 50.0 / std::sqrt(25000.0), 1e-9);
  auto spike = detect_anomaly(h, "Acme Corp", Money{100000, "USD"});
  EXPECT_TRUE(spike.flagged);
  EXPECT_NEAR(*spike.z, 90000.0 / std::sqrt(25000.0), 1e-6);

  VendorHistory few;
  for (std::int64_t t : {1, 2, 3}) few.append("x", t);
  auto r = detect_anomaly(few, "x", Money{999999, "USD"});
  EXPECT_FALSE(r.flagged);
  EXPECT_FALSE(r.z);

  VendorHistory flat;
  for (int i = 0; i < 5; ++i) flat.append("y", 500);
  EXPECT_FALSE(detect_anomaly(flat, "y", Money{500, "USD"}).flagged);
  auto moved = detect_anomaly(flat, "y", Money{501, "USD"});
  EXPECT_TRUE(moved.flagged);
  EXPECT_FALSE(moved.z);
  EXPECT_EQ(VendorHistory::parse(h.serialize()).serialize(), h.serialize());
}

ExtractedInvoice required(double a, double b, double c, double d) {
  ExtractedInvoice inv;
  inv.fields[F::invoice_number] = fv(F::invoice_number, std::string("1"), a);
  inv.fields[F::invoice_date] = fv(F::invoice_date, Date{2024, 1, 1}, b);
  inv.fields[F::vendor_name] = fv(F::vendor_name, std::string("V"), c);
  inv.fields[F::total_amount] = fv(F::total_amount, Money{100, "USD"}, d);
  return inv;
}

TEST(Finalize, Examples) {
  auto good = required(0.9, 0.95, 0.92, 0.99);
  auto e = finalize(good, 0.85, DedupResult::fresh, {});
  EXPECT_EQ(good.status, InvoiceStatus::auto_approved);
  EXPECT_DOUBLE_EQ(good.overall_confidence, 0.9);
  EXPECT_EQ(e.action, "finalize");
  ASSERT_TRUE(e.after);
  EXPECT_EQ(nlohmann::json::parse(*e.after)["status"], "auto_approved");

  auto weak = required(0.9, 0.35, 0.92, 0.99);
  finalize(weak, 0.85, DedupResult::fresh, {});
  EXPECT_EQ(weak.status, InvoiceStatus::needs_review);

  auto dup = required(1, 1, 1, 1);
  finalize(dup, 0.85, DedupResult::duplicate_logical, {});
  EXPECT_EQ(dup.status, InvoiceStatus::rejected_duplicate);

  auto odd = required(1, 1, 1, 1);
  finalize(odd, 0.85, DedupResult::fresh, AnomalyResult{true, 9.0});
  EXPECT_EQ(odd.status, InvoiceStatus::needs_review);
  EXPECT_DOUBLE_EQ(odd.overall_confidence, 0.84);
  EXPECT_TRUE(odd.anomaly_flagged);

  ExtractedInvoice missing = required(1, 1, 1, 1);
  missing.fields.erase(F::vendor_name);
  finalize(missing, 0.85, DedupResult::fresh, {});
  EXPECT_EQ(missing.overall_confidence, 0.0);
}

TEST(FinalizeProperty, OptionalFieldsDoNotMatter) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  const F optional_fields[] = {F::due_date, F::currency, F::subtotal, F::tax_amount, F::weight_kg, F::billing_address};
  for (int i = 0; i < 2000; ++i) {
    auto base = required(u(rng), u(rng), u(rng), u(rng));
    auto decorated = base;
    for (auto f : optional_fields)
      if (rng() % 2) decorated.fields[f] = fv(f, std::string("x"), u(rng));
    double tau = u(rng);
    DedupResult d = rng() % 5 ? DedupResult::fresh : DedupResult::duplicate_exact;
    AnomalyResult a{rng() % 7 == 0, std::nullopt};
    finalize(base, tau, d, a);
    finalize(decorated, tau, d, a);
    ASSERT_EQ(base.status, decorated.status);
    ASSERT_EQ(base.overall_confidence, decorated.overall_confidence);
  }
}

TEST(Audit, AppendReadAndMonotonic) {
  test::TempDir dir;
  AuditLog log(dir / "audit.log");
  log.append({"2024-01-01T00:00:05Z", "system", "received", "job-1", std::nullopt, std::nullopt});
  auto e = log.append({"2024-01-01T00:00:01Z", "alice", "correct:total_amount", "job-1", "{\"a\":1}", "{\"a\":2}"});
  EXPECT_EQ(e.timestamp, "2024-01-01T00:00:05Z");
  log.append({"", "system", "received", "job-2", std::nullopt, std::nullopt});
  auto events = log.read("job-1");
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[1].actor, "alice");
  EXPECT_EQ(events[1].before, "{\"a\":1}");
  EXPECT_EQ(log.read().size(), 3u);
  AuditLog reopened(dir / "audit.log");
  auto late = reopened.append({"2023-12-31T00:00:00Z", "system", "x", "job-1", std::nullopt, std::nullopt});
  EXPECT_EQ(late.timestamp, "2024-01-01T00:00:05Z");
  auto line = audit_to_json(events[1]);
  EXPECT_EQ(audit_to_json(audit_from_json(line)), line);
}

ExtractedInvoice reviewable() {
  auto inv = example_invoice(16000);
  inv.fields[F::vendor_name] = fv(F::vendor_name, std::string("Acme Corp"));
  inv.fields[F::invoice_number] = fv(F::invoice_number, std::string("INV-1"));
  inv.fields[F::invoice_date] = fv(F::invoice_date, Date{2024, 3, 4});
  inv.fields[F::currency] = fv(F::currency, std::string("USD"));
  for (auto& [f, v] : inv.fields) v.provenance = Provenance::embedded;
  inv.validation_report = check_arithmetic(inv);
  score_fields(inv, {});
  finalize(inv, 0.85, DedupResult::fresh, {});
  return inv;
}

TEST(Corrections, FixingTotalApproves) {
  auto inv = reviewable();
  ASSERT_EQ(inv.status, InvoiceStatus::needs_review);
  std::vector<Correction> c{{"total_amount", "165.00", "typo"}};
  auto events = apply_corrections(inv, c, "alice", 0.85, {}, {});
  EXPECT_EQ(inv.status, InvoiceStatus::corrected);
  EXPECT_TRUE(inv.validation_report.all_passed());
  EXPECT_EQ(inv.money(F::total_amount)->minor_units, 16500);
  EXPECT_EQ(inv.get(F::total_amount)->provenance, Provenance::human);
  EXPECT_EQ(inv.get(F::total_amount)->confidence, 1.0);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].actor, "alice");
  EXPECT_EQ(events[0].action, "correct:total_amount");
  auto before = nlohmann::json::parse(*events[0].before), after = nlohmann::json::parse(*events[0].after);
  EXPECT_EQ(before["normalized"], "160.00");
  EXPECT_EQ(after["normalized"], "165.00");
  EXPECT_EQ(after["status"], "corrected");
  EXPECT_EQ(after["note"], "typo");
}

TEST(Corrections, Rejections) {
  auto inv = reviewable();
  auto snapshot = to_string(inv.status);
  std::vector<Correction> bad_date{{"total_amount", "165.00", ""}, {"invoice_date", "31/02/2024", ""}};
  EXPECT_EQ(code_of([&] { apply_corrections(inv, bad_date, "r", 0.85, {}, {}); }), ErrorCode::NormalizationFailed);
  EXPECT_EQ(inv.money(F::total_amount)->minor_units, 16000);
  EXPECT_EQ(to_string(inv.status), snapshot);
  std::vector<Correction> unknown{{"colour", "red", ""}};
  EXPECT_EQ(code_of([&] { apply_corrections(inv, unknown, "r", 0.85, {}, {}); }), ErrorCode::UnknownField);
  EXPECT_EQ(code_of([&] { apply_corrections(inv, {}, "r", 0.85, {}, {}); }), ErrorCode::InvalidArgument);
  auto approved = required(1, 1, 1, 1);
  finalize(approved, 0.85, DedupResult::fresh, {});
  std::vector<Correction> any{{"total_amount", "1.00", ""}};
  EXPECT_EQ(code_of([&] { apply_corrections(approved, any, "r", 0.85, {}, {}); }), ErrorCode::JobNotReviewable);
}

TEST(Corrections, PartialFixStaysInReview) {
  auto inv = reviewable();
  std::vector<Correction> c{{"vendor_name", "Acme Corporation", ""}};
  apply_corrections(inv, c, "r", 0.85, {}, {});
  EXPECT_EQ(inv.status, InvoiceStatus::needs_review);
}

}  // namespace
}  // namespace invx
