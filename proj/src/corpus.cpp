#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <zlib.h>

#include "invx/error.hpp"
#include "invx/eval.hpp"
#include "invx/ingest.hpp"
#include "invx/llm.hpp"
#include "invx/preprocess.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using ojson = nlohmann::ordered_json;
using F = CanonicalField;

constexpr double kMargin = 54.0;      // points
constexpr double kCharWidth = 6.0;    // Courier 10 pt advance
constexpr double kRowPitch = 14.0;
constexpr double kFontSize = 10.0;
constexpr double kPageW = 612.0, kPageH = 792.0;

// SplitMix64: portable and fully specified, so corpora match across toolchains.
struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  int uniform(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  int range(int lo, int hi) { return lo + uniform(hi - lo + 1); }
  double real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return real() < p; }
  template <class T, std::size_t N>
  const T& pick(const T (&arr)[N]) {
    return arr[uniform(static_cast<int>(N))];
  }
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  Rng r(a * 0x100000001B3ULL ^ (b + 0x632BE59BD9B4E019ULL));
  return r.next();
}

struct Party {
  const char* name;
  const char* street;
  const char* city;
};

const Party kVendors[] = {
    {"Acme Industrial Supply", "1200 Foundry Road", "Dayton, OH 45402"},
    {"Northwind Traders", "48 Harbor Street", "Portland, ME 04101"},
    {"Blue Harbor Logistics", "9 Quay Lane", "Bristol BS1 4DJ"},
    {"Kestrel & Sons, Ltd.", "77 Mill Row", "Leeds LS1 5AB"},
    {"Sundial Office Goods", "310 Aster Avenue", "Austin, TX 78701"},
    {"Meridian Agro Exports", "Plot 14, MIDC Area", "Pune 411019"},
    {"Granite Peak Hardware", "5 Summit Drive", "Boulder, CO 80302"},
    {"Lumen Electric Co.", "820 Volta Street", "Fresno, CA 93721"},
    {"Orchard Lane Foods", "26 Orchard Lane", "Salem, OR 97301"},
    {"Vantage Print House", "Hauptstrasse 12", "10115 Berlin"},
    {"Coastal Marine Parts", "61 Pier Road", "Norfolk, VA 23510"},
    {"Redwood Timber Mills", "400 Logging Way", "Eureka, CA 95501"},
    {"Silverline Textiles", "22 Loom Street", "Surat 395003"},
    {"Atlas Freight Partners", "18 Dock Street", "Rotterdam 3011"},
    {"Pioneer Lab Supplies", "7 Beaker Court", "Madison, WI 53703"},
    {"Harbor View Catering", "3 Wharf Parade", "Cork T12 X2"},
};

const Party kCustomers[] = {
    {"Globex Corporation", "500 Main Street", "Springfield, IL 62701"},
    {"Initech LLC", "4120 Freidrich Lane", "Austin, TX 78744"},
    {"Umbrella Retail Group", "88 Market Square", "Manchester M2 3AW"},
    {"Stark Components", "10 Ironworks Road", "Albany, NY 12207"},
    {"Wayne Distribution", "1007 Mountain Drive", "Newark, NJ 07102"},
    {"Hooli Services", "1 Campus Loop", "Mountain View, CA 94043"},
    {"Soylent Foods Inc.", "255 Green Street", "Camden, NJ 08102"},
    {"Tyrell Systems", "2019 Spinner Way", "Los Angeles, CA 90012"},
    {"Cyberdyne Retail", "18144 El Camino", "Sunnyvale, CA 94087"},
    {"Oceanic Trading Co.", "815 Flight Road", "Sydney NSW 2000"},
    {"Bluth Property Group", "1 Banana Stand", "Newport, CA 92660"},
    {"Dunder Paper Works", "1725 Slough Avenue", "Scranton, PA 18505"},
};

const char* kItems[] = {
    "Steel bracket 40mm",  "Copper wire 2.5mm",  "Safety gloves (pair)", "LED panel 600x600",
    "Printer toner black", "A4 paper ream",      "Hydraulic hose 1m",    "Pallet wrap roll",
    "Office chair mesh",   "Desk lamp",          "Cable ties (100)",     "Network switch 8p",
    "Basmati rice 25kg",   "Cotton fabric bolt", "Packing tape 48mm",    "Drill bit set",
    "Extension lead 5m",   "Label printer roll", "Coffee beans 1kg",     "Solvent cleaner 5L",
    "Consulting hours",    "Freight handling",   "Installation service", "Calibration check",
};

const char* kMonthNames[] = {"January", "February", "March",     "April",   "May",      "June",
                             "July",    "August",   "September", "October", "November", "December"};

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const int d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  const int m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  return Date{y + (m <= 2), m, d};
}

std::string print_date(const Date& d, int style) {
  char buf[48];
  switch (style) {
    case 0: std::snprintf(buf, sizeof buf, "%02d/%02d/%04d", d.day, d.month, d.year); break;
    case 1: std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day); break;
    case 2: std::snprintf(buf, sizeof buf, "%d %s %04d", d.day, kMonthNames[d.month - 1], d.year); break;
    default: std::snprintf(buf, sizeof buf, "%s %d, %04d", kMonthNames[d.month - 1], d.day, d.year); break;
  }
  return buf;
}

std::string print_amount(std::int64_t minor, bool grouped) {
  std::string plain = money_format(Money{minor, "USD"});
  if (!grouped) return plain;
  auto dot = plain.find('.');
  std::string ip = plain.substr(0, dot), out;
  bool neg = !ip.empty() && ip[0] == '-';
  if (neg) ip.erase(0, 1);
  for (std::size_t i = 0; i < ip.size(); ++i) {
    if (i && (ip.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(ip[i]);
  }
  return (neg ? "-" : "") + out + plain.substr(dot);
}

std::string print_rate(const Decimal& r) {
  return decimal_format(decimal_mul_int(r, 100)) + "%";
}

std::string right_align(const std::string& s, int width) {
  return s.size() >= static_cast<std::size_t>(width) ? s : std::string(width - s.size(), ' ') + s;
}

std::string pdf_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '(' || c == ')' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string assemble_pdf(const std::vector<std::string>& objects) {
  std::string out = "%PDF-1.4\n%\xE2\xE3\xCF\xD3\n";
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    offsets.push_back(out.size());
    out += std::to_string(i + 1) + " 0 obj\n" + objects[i] + "\nendobj\n";
  }
  std::size_t xref = out.size();
  out += "xref\n0 " + std::to_string(objects.size() + 1) + "\n0000000000 65535 f \n";
  for (auto off : offsets) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%010zu 00000 n \n", off);
    out += buf;
  }
  out += "trailer\n<< /Size " + std::to_string(objects.size() + 1) + " /Root 1 0 R >>\nstartxref\n" +
         std::to_string(xref) + "\n%%EOF\n";
  return out;
}

// What a well-behaved model answers for this invoice, with the formatting
// slips and occasional wrong or refused answers real models produce.
std::string synthetic_llm_response(const SyntheticInvoice& inv, Rng& rng, const CorpusOptions& opts) {
  if (rng.chance(opts.llm_refusal_rate)) return "I cannot help with that.";
  std::map<CanonicalField, std::string> values = inv.printed;
  if (rng.chance(opts.llm_error_rate)) {
    switch (rng.uniform(3)) {
      case 0: {
        std::string& n = values[F::invoice_number];
        auto pos = n.find_last_of("0123456789");
        n[pos] = n[pos] == '9' ? '0' : static_cast<char>(n[pos] + 1);
        break;
      }
      case 1: {
        std::string& d = values[F::invoice_date];
        auto pos = d.find_first_of("0123456789");
        // First digit of a day or year; shifting it keeps the date parseable.
        d[pos] = d[pos] == '1' ? '2' : '1';
        break;
      }
      default: {
        Money m = money_parse(values[F::total_amount], inv.printed.at(F::currency));
        values[F::total_amount] = money_format(Money{m.minor_units + 900, m.currency});
        break;
      }
    }
  }
  int variant = rng.uniform(100);
  bool synonyms = variant >= 80 && variant < 85;
  static const std::map<CanonicalField, const char*> synonym_keys{
      {F::invoice_number, "invoice_no"}, {F::invoice_date, "issue_date"}, {F::vendor_name, "supplier"},
      {F::total_amount, "grand_total"},  {F::tax_amount, "tax"},          {F::billing_address, "bill_to"},
  };
  ojson j = ojson::object();
  for (auto f : kAllFields) {
    auto it = values.find(f);
    std::string key(field_name(f));
    if (synonyms && synonym_keys.count(f)) key = synonym_keys.at(f);
    if (it == values.end()) j[key] = nullptr;
    else j[key] = it->second;
  }
  ojson items = ojson::array();
  for (const auto& li : inv.line_items)
    items.push_back({{"description", li.description},
                     {"quantity", li.quantity},
                     {"unit_price", li.unit_price},
                     {"amount", li.amount}});
  j["line_items"] = items;
  std::string text = j.dump(2);
  if (variant >= 70 && variant < 80) return "```json\n" + text + "\n```";
  if (variant >= 85 && variant < 95) {
    auto pos = text.rfind('}');
    return text.substr(0, pos - 1) + ",\n}";
  }
  if (variant >= 95) {
    std::replace(text.begin(), text.end(), '"', '\'');
    return text;
  }
  return text;
}

}  // namespace

Degradation Degradation::parse(std::string_view text) {
  auto parts = split(text, ':');
  Degradation d;
  try {
    if (parts.empty() || parts[0] == "none") return d;
    if (parts[0] == "skew" && parts.size() == 2) d.skew_deg = std::stod(parts[1]);
    else if (parts[0] == "noise" && parts.size() == 2) d.noise = std::stod(parts[1]);
    else if (parts[0] == "both" && parts.size() == 3) {
      d.skew_deg = std::stod(parts[1]);
      d.noise = std::stod(parts[2]);
    } else {
      throw Error(ErrorCode::InvalidArgument, "degradation: " + std::string(text));
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "degradation: " + std::string(text));
  }
  if (d.noise < 0 || d.noise > 1) throw Error(ErrorCode::InvalidArgument, "noise probability out of range");
  return d;
}

SyntheticInvoice make_synthetic_invoice(std::uint64_t seed, int index) {
  Rng rng(mix(seed, static_cast<std::uint64_t>(index)));
  SyntheticInvoice inv;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "inv-%04d", index);
  inv.id = idbuf;
  inv.template_id = rng.uniform(3);

  const Party& vendor = rng.pick(kVendors);
  const Party& customer = rng.pick(kCustomers);
  const Party& ship = rng.chance(0.5) ? customer : rng.pick(kCustomers);

  int year = rng.range(2023, 2025);
  Date issued{year, rng.range(1, 12), 1};
  issued.day = rng.range(1, 28);
  static const int terms[] = {15, 30, 45, 60};
  Date due = civil_from_days(days_from_civil(issued.year, issued.month, issued.day) + rng.pick(terms));
  int date_style = rng.uniform(4);

  std::string number;
  switch (rng.uniform(4)) {
    case 0: std::snprintf(idbuf, sizeof idbuf, "INV-%04d-%04d", year, rng.range(1, 9999)); break;
    case 1: std::snprintf(idbuf, sizeof idbuf, "A%06d", rng.range(1, 999999)); break;
    case 2: std::snprintf(idbuf, sizeof idbuf, "%04d/%05d", year, rng.range(1, 99999)); break;
    default: std::snprintf(idbuf, sizeof idbuf, "SO-%05d", rng.range(10, 99999)); break;
  }
  number = idbuf;

  static const char* currencies[] = {"USD", "USD", "USD", "USD", "USD", "USD", "EUR", "EUR", "GBP", "INR"};
  std::string currency = rng.pick(currencies);
  bool grouped = rng.chance(0.5);
  auto money_text = [&](std::int64_t minor) { return print_amount(minor, grouped); };
  std::string total_prefix = currency == "USD" ? "$" : currency + " ";

  static const std::int64_t rates_micro[] = {0, 50'000, 80'000, 100'000, 125'000, 180'000, 200'000};
  Decimal rate{rng.pick(rates_micro)};

  int n_items = rng.range(1, 5);
  std::int64_t subtotal = 0;
  std::vector<std::string> used;
  for (int i = 0; i < n_items; ++i) {
    std::string desc = rng.pick(kItems);
    if (std::find(used.begin(), used.end(), desc) != used.end()) continue;
    used.push_back(desc);
    Decimal qty = Decimal::from_int(rng.range(1, 20));
    if (rng.chance(0.2)) qty.micros += 500'000;
    std::int64_t unit = rng.range(100, 99'999);
    std::int64_t amount = mul_round_half_up(qty, unit);
    subtotal += amount;
    inv.line_items.push_back({desc, decimal_format(qty), money_text(unit), money_text(amount)});
  }
  std::int64_t discount = rng.chance(0.15) ? std::min<std::int64_t>(rng.range(500, 5000), subtotal / 2) : 0;
  std::int64_t tax = mul_round_half_up(rate, subtotal);
  std::int64_t total = subtotal + tax - discount;

  std::string weight_printed;
  Decimal weight_kg;
  if (rng.chance(0.35)) {
    switch (rng.uniform(3)) {
      case 0: {
        int q = rng.range(1, 40);
        bool half = rng.chance(0.5);
        weight_printed = std::to_string(q) + (half ? ".5" : "") + " qtl";
        weight_kg = Decimal::from_int(q * 100 + (half ? 50 : 0));
        break;
      }
      case 1: {
        int t = rng.range(1, 9);
        bool quarter = rng.chance(0.5);
        weight_printed = std::to_string(t) + (quarter ? ".25" : "") + " ton";
        weight_kg = Decimal::from_int(t * 1000 + (quarter ? 250 : 0));
        break;
      }
      default: {
        int kg = rng.range(5, 950);
        weight_printed = std::to_string(kg) + " kg";
        weight_kg = Decimal::from_int(kg);
        break;
      }
    }
  }

  // Truth, in canonical normalized form.
  inv.truth[F::invoice_number] = number;
  inv.truth[F::invoice_date] = to_iso(issued);
  inv.truth[F::due_date] = to_iso(due);
  inv.truth[F::vendor_name] = vendor.name;
  inv.truth[F::vendor_address] = std::string(vendor.street) + ", " + vendor.city;
  inv.truth[F::billing_address] = std::string(customer.name) + ", " + customer.street + ", " + customer.city;
  inv.truth[F::currency] = currency;
  inv.truth[F::subtotal] = money_format(Money{subtotal, currency});
  inv.truth[F::tax_rate] = decimal_format(rate);
  inv.truth[F::tax_amount] = money_format(Money{tax, currency});
  inv.truth[F::total_amount] = money_format(Money{total, currency});
  if (discount) inv.truth[F::discount_amount] = money_format(Money{discount, currency});
  if (!weight_printed.empty()) inv.truth[F::weight_kg] = decimal_format(weight_kg);
  if (inv.template_id != 1)
    inv.truth[F::shipping_address] = std::string(ship.name) + ", " + ship.street + ", " + ship.city;

  inv.printed[F::invoice_number] = number;
  inv.printed[F::invoice_date] = print_date(issued, date_style);
  inv.printed[F::due_date] = print_date(due, date_style);
  inv.printed[F::vendor_name] = vendor.name;
  inv.printed[F::vendor_address] = inv.truth[F::vendor_address];
  inv.printed[F::billing_address] = inv.truth[F::billing_address];
  inv.printed[F::currency] = currency;
  inv.printed[F::subtotal] = money_text(subtotal);
  inv.printed[F::tax_rate] = print_rate(rate);
  inv.printed[F::tax_amount] = money_text(tax);
  inv.printed[F::total_amount] = money_text(total);
  if (discount) inv.printed[F::discount_amount] = money_text(discount);
  if (!weight_printed.empty()) inv.printed[F::weight_kg] = weight_printed;
  if (inv.template_id != 1) inv.printed[F::shipping_address] = inv.truth[F::shipping_address];

  auto& runs = inv.runs;
  auto add = [&](int row, int col, std::string text) {
    runs.push_back({row, col, std::move(text)});
    return static_cast<int>(runs.size()) - 1;
  };
  auto block = [&](std::vector<int> ids) { inv.blocks.push_back(std::move(ids)); };
  auto party_stanza = [&](int row, int col, const char* label, const Party& p) {
    block({add(row, col, label), add(row + 1, col, p.name), add(row + 2, col, p.street), add(row + 3, col, p.city)});
  };

  int row = 0;
  const int tcol_qty = 30, tcol_unit = 44, tcol_amt = 60;
  const char* head_desc = "Description";
  const char* head_qty = "Qty";
  const char* head_unit = "Unit Price";
  const char* head_amt = "Amount";
  std::vector<std::pair<std::string, std::string>> totals;  // label, value
  std::string tax_label;

  if (inv.template_id == 0) {
    int r = add(0, 0, vendor.name);
    block({r, add(1, 0, vendor.street), add(2, 0, vendor.city)});
    add(0, 72, "INVOICE");
    block({add(4, 0, "Invoice No: " + number), add(5, 0, "Invoice Date: " + inv.printed[F::invoice_date]),
           add(6, 0, "Due Date: " + inv.printed[F::due_date])});
    party_stanza(8, 0, "Bill To:", customer);
    party_stanza(8, 44, "Ship To:", ship);
    row = 13;
    tax_label = "Tax (" + print_rate(rate) + ")";
    totals = {{"Subtotal", money_text(subtotal)}};
    if (discount) totals.push_back({"Discount", money_text(discount)});
    totals.push_back({tax_label, money_text(tax)});
    totals.push_back({"Total Due", total_prefix + money_text(total)});
    if (currency != "USD") totals.push_back({"Currency", currency});
    if (!weight_printed.empty()) totals.push_back({"Net Weight", weight_printed});
  } else if (inv.template_id == 1) {
    add(0, 0, "INVOICE");
    block({add(2, 0, "From:"), add(3, 0, vendor.name), add(4, 0, vendor.street), add(5, 0, vendor.city)});
    block({add(2, 46, "Invoice #"), add(3, 46, "Date"), add(4, 46, "Payment Due"), add(5, 46, "Currency")});
    block({add(2, 62, number), add(3, 62, inv.printed[F::invoice_date]), add(4, 62, inv.printed[F::due_date]),
           add(5, 62, currency)});
    party_stanza(7, 0, "Bill To:", customer);
    row = 12;
    head_desc = "Item";
    head_unit = "Price";
    head_amt = "Total";
    totals = {{"Subtotal", money_text(subtotal)}};
    if (discount) totals.push_back({"Discount", money_text(discount)});
    totals.push_back({"Tax Rate", print_rate(rate)});
    totals.push_back({"Tax", money_text(tax)});
    totals.push_back({"Grand Total", total_prefix + money_text(total)});
    if (!weight_printed.empty()) totals.push_back({"Weight", weight_printed});
  } else {
    block({add(0, 0, std::string("Vendor: ") + vendor.name), add(1, 0, vendor.street), add(2, 0, vendor.city)});
    add(0, 72, "INVOICE");
    add(4, 0, "Invoice Number: " + number);
    block({add(4, 44, "Issue Date: " + inv.printed[F::invoice_date]),
           add(5, 44, "Due Date: " + inv.printed[F::due_date])});
    party_stanza(7, 0, "Billed To:", customer);
    party_stanza(7, 44, "Deliver To:", ship);
    row = 12;
    head_qty = "Quantity";
    head_unit = "Rate";
    head_amt = "Line Total";
    static const char* tax_names[] = {"GST", "VAT", "Sales Tax"};
    tax_label = std::string(rng.pick(tax_names)) + " (" + print_rate(rate) + ")";
    totals = {{"Sub Total", money_text(subtotal)}};
    if (discount) totals.push_back({"Discount", money_text(discount)});
    totals.push_back({tax_label, money_text(tax)});
    totals.push_back({"Amount Due", total_prefix + money_text(total)});
    if (!weight_printed.empty()) totals.push_back({"Gross Weight", weight_printed});
  }

  std::vector<int> table{add(row, 0, head_desc), add(row, tcol_qty, head_qty), add(row, tcol_unit, head_unit),
                         add(row, tcol_amt, head_amt)};
  ++row;
  for (const auto& li : inv.line_items) {
    table.push_back(add(row, 0, li.description));
    table.push_back(add(row, tcol_qty, right_align(li.quantity, 5)));
    table.push_back(add(row, tcol_unit, right_align(li.unit_price, 10)));
    table.push_back(add(row, tcol_amt, right_align(li.amount, 12)));
    ++row;
  }
  block(table);
  row += 1;

  std::vector<int> label_ids, value_ids;
  for (const auto& [label, value] : totals) {
    if (inv.template_id == 1) {
      label_ids.push_back(add(row, 46, label));
      value_ids.push_back(add(row, 62, right_align(value, 14)));
    } else {
      label_ids.push_back(add(row, 40, label + ": " + value));
    }
    ++row;
  }
  block(label_ids);
  if (!value_ids.empty()) block(value_ids);
  add(row + 1, 0, "Thank you for your business.");

  // Trim the padding so a run's text is exactly its printed words.
  for (auto& r : runs) {
    std::size_t lead = r.text.find_first_not_of(' ');
    if (lead != std::string::npos && lead > 0) {
      r.col += static_cast<int>(lead);
      r.text.erase(0, lead);
    }
  }
  return inv;
}

std::string write_text_pdf(const std::vector<TextRun>& runs) {
  std::string content;
  for (const auto& r : runs) {
    char buf[96];
    double x = kMargin + r.col * kCharWidth;
    double y = kPageH - (kMargin + kFontSize + r.row * kRowPitch);
    std::snprintf(buf, sizeof buf, "BT /F1 10 Tf 1 0 0 1 %.2f %.2f Tm (", x, y);
    content += buf;
    content += pdf_escape(r.text);
    content += ") Tj ET\n";
  }
  return assemble_pdf({
      "<< /Type /Catalog /Pages 2 0 R >>",
      "<< /Type /Pages /Kids [3 0 R] /Count 1 >>",
      "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Resources << /Font << /F1 4 0 R >> >> /Contents 5 0 R >>",
      "<< /Type /Font /Subtype /Type1 /BaseFont /Courier /Encoding /WinAnsiEncoding >>",
      "<< /Length " + std::to_string(content.size()) + " >>\nstream\n" + content + "endstream",
  });
}

std::string write_image_pdf(const PageImage& page) {
  uLongf cap = compressBound(static_cast<uLong>(page.pixels.size()));
  std::string packed(cap, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &cap, page.pixels.data(),
                static_cast<uLong>(page.pixels.size()), 6) != Z_OK)
    throw Error(ErrorCode::IoError, "zlib compression failed");
  packed.resize(cap);
  std::string fixture = page.fixture_id.empty() ? "" : " /InvxFixture (" + pdf_escape(page.fixture_id) + ")";
  std::string content = "q 612 0 0 792 0 0 cm /Im1 Do Q\n";
  return assemble_pdf({
      "<< /Type /Catalog /Pages 2 0 R >>",
      "<< /Type /Pages /Kids [3 0 R] /Count 1 >>",
      "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Resources << /XObject << /Im1 4 0 R >> >> "
      "/Contents 5 0 R >>",
      "<< /Type /XObject /Subtype /Image /Width " + std::to_string(page.width) + " /Height " +
          std::to_string(page.height) + " /ColorSpace /DeviceGray /BitsPerComponent 8 /Filter /FlateDecode" +
          fixture + " /Length " + std::to_string(packed.size()) + " >>\nstream\n" + packed + "\nendstream",
      "<< /Length " + std::to_string(content.size()) + " >>\nstream\n" + content + "endstream",
  });
}

PageImage render_runs(const std::vector<TextRun>& runs, int dpi, const std::string& fixture_id) {
  PageImage img(static_cast<int>(std::lround(kPageW / 72.0 * dpi)), static_cast<int>(std::lround(kPageH / 72.0 * dpi)),
                dpi, 255);
  img.fixture_id = fixture_id;
  const double px = dpi / 72.0;
  const int scale = std::max(1, dpi / 100);
  for (const auto& r : runs) {
    double baseline = (kMargin + kFontSize + r.row * kRowPitch) * px;
    int top = static_cast<int>(std::lround(baseline)) - 12 * scale;
    for (std::size_t i = 0; i < r.text.size(); ++i) {
      int left = static_cast<int>(std::lround((kMargin + (r.col + static_cast<double>(i)) * kCharWidth) * px));
      draw_text(img, left, top, scale, std::string_view(r.text).substr(i, 1));
    }
  }
  return img;
}

std::vector<Token> truth_tokens(const std::vector<TextRun>& runs, int dpi) {
  const double px = dpi / 72.0;
  const int scale = std::max(1, dpi / 100);
  std::vector<Token> out;
  for (const auto& r : runs) {
    double baseline = (kMargin + kFontSize + r.row * kRowPitch) * px;
    double top = std::lround(baseline) - 12 * scale;
    std::size_t i = 0;
    while (i < r.text.size()) {
      if (r.text[i] == ' ') {
        ++i;
        continue;
      }
      std::size_t j = r.text.find(' ', i);
      if (j == std::string::npos) j = r.text.size();
      Token t;
      t.id = static_cast<int>(out.size());
      t.text = r.text.substr(i, j - i);
      t.bbox = {(kMargin + (r.col + static_cast<double>(i)) * kCharWidth) * px, top,
                (kMargin + (r.col + static_cast<double>(j)) * kCharWidth) * px, top + 16.0 * scale};
      out.push_back(std::move(t));
      i = j;
    }
  }
  return out;
}

PageImage degrade(const PageImage& img, const Degradation& d, std::uint64_t seed) {
  PageImage out = d.skew_deg != 0 ? rotate(img, d.skew_deg) : img;
  out.fixture_id = img.fixture_id;
  if (d.noise > 0) {
    Rng rng(mix(seed, 0xD1CEULL));
    for (auto& p : out.pixels)
      if (rng.chance(d.noise)) p = rng.chance(0.5) ? 0 : 255;
  }
  return out;
}

std::vector<std::string> gen_corpus(const std::filesystem::path& dir, const CorpusOptions& opts) {
  if (opts.n < 1) throw Error(ErrorCode::InvalidArgument, "corpus size must be at least 1");
  std::filesystem::create_directories(dir / "llm_fixtures");
  std::vector<std::string> ids;
  for (int i = 0; i < opts.n; ++i) {
    SyntheticInvoice inv = make_synthetic_invoice(opts.seed, i);
    auto idir = dir / inv.id;
    std::filesystem::create_directories(idir);
    ids.push_back(inv.id);

    std::string pdf = write_text_pdf(inv.runs);
    write_file_atomic(idir / "invoice.pdf", pdf);

    auto tokens = truth_tokens(inv.runs, opts.dpi);
    ojson truth;
    truth["id"] = inv.id;
    truth["seed"] = opts.seed;
    truth["index"] = i;
    truth["template"] = inv.template_id;
    truth["skew"] = opts.degradation.skew_deg;
    truth["noise"] = opts.degradation.noise;
    truth["dpi"] = opts.dpi;
    ojson fields = ojson::object();
    for (auto f : kAllFields) {
      auto it = inv.truth.find(f);
      if (it == inv.truth.end()) continue;
      fields[std::string(field_name(f))] = it->second;
    }
    truth["fields"] = fields;
    ojson printed = ojson::object();
    for (const auto& [f, v] : inv.printed) printed[std::string(field_name(f))] = v;
    truth["printed"] = printed;
    ojson items = ojson::array();
    for (const auto& li : inv.line_items)
      items.push_back({{"description", li.description},
                       {"quantity", li.quantity},
                       {"unit_price", li.unit_price},
                       {"amount", li.amount}});
    truth["line_items"] = items;
    ojson toks = ojson::array();
    for (const auto& t : tokens)
      toks.push_back({{"text", t.text}, {"bbox", {t.bbox.x0, t.bbox.y0, t.bbox.x1, t.bbox.y1}}, {"page", 0}});
    truth["tokens"] = toks;
    ojson runs = ojson::array();
    for (const auto& r : inv.runs) runs.push_back({{"row", r.row}, {"col", r.col}, {"text", r.text}});
    truth["runs"] = runs;
    truth["blocks"] = inv.blocks;
    write_file_atomic(idir / "truth.json", truth.dump(2) + "\n");

    if (opts.images || opts.image_only_pdf) {
      PageImage page = render_runs(inv.runs, opts.dpi, inv.id);
      PageImage degraded = degrade(page, opts.degradation, mix(opts.seed, static_cast<std::uint64_t>(i)));
      if (opts.images) {
        Bytes png = encode_png(degraded);
        write_file_atomic(idir / "page.png", std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      }
      if (opts.image_only_pdf) write_file_atomic(idir / "invoice_image.pdf", write_image_pdf(degraded));
    }

    // Replay fixtures for the embedded-text prompt and for the prompt built
    // from the ground-truth tokens (what a perfect OCR pass yields).
    Rng rng(mix(opts.seed ^ 0x11F1ULL, static_cast<std::uint64_t>(i)));
    std::string response = synthetic_llm_response(inv, rng, opts);
    std::vector<std::string> texts;
    auto embedded = extract_embedded_text(make_document(Bytes(pdf.begin(), pdf.end()), ""), opts.dpi);
    std::vector<Token> flat;
    for (const auto& p : embedded) flat.insert(flat.end(), p.begin(), p.end());
    texts.push_back(tokens_to_text(flat));
    auto sorted = tokens;
    sort_reading_order(sorted);
    texts.push_back(tokens_to_text(sorted));
    for (const auto& text : texts) {
      std::string prompt = build_prompt(text, PromptSchema::full());
      write_file_atomic(dir / "llm_fixtures" / ReplayLlmClient::fixture_name(prompt), response);
    }
  }
  return ids;
}

}  // namespace invx
