#include "invx/llm.hpp"

#include <httplib.h>

#include <cctype>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "invx/error.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using json = nlohmann::json;

const char* field_description(CanonicalField f) {
  switch (f) {
    case CanonicalField::invoice_number: return "the invoice identifier as printed";
    case CanonicalField::invoice_date: return "date the invoice was issued, as printed";
    case CanonicalField::due_date: return "payment due date, as printed";
    case CanonicalField::vendor_name: return "name of the company issuing the invoice";
    case CanonicalField::vendor_address: return "postal address of the issuer";
    case CanonicalField::billing_address: return "bill-to name and address";
    case CanonicalField::shipping_address: return "ship-to name and address";
    case CanonicalField::currency: return "ISO 4217 currency code";
    case CanonicalField::subtotal: return "sum of line amounts before tax";
    case CanonicalField::tax_rate: return "tax rate as printed, e.g. 10%";
    case CanonicalField::tax_amount: return "tax amount";
    case CanonicalField::discount_amount: return "discount amount";
    case CanonicalField::total_amount: return "grand total payable";
    case CanonicalField::weight_kg: return "shipment weight with its unit as printed";
  }
  return "";
}

// Back off to a UTF-8 character boundary.
std::size_t utf8_floor(std::string_view s, std::size_t n) {
  while (n > 0 && n < s.size() && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return n;
}

std::string strip_fences(std::string_view s) {
  auto open = s.find("```");
  if (open == std::string_view::npos) return std::string(s);
  auto body = s.find('\n', open);
  if (body == std::string_view::npos) return std::string(s);
  ++body;
  auto close = s.find("```", body);
  return std::string(s.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
}

std::string first_balanced_object(std::string_view s) {
  auto start = s.find('{');
  if (start == std::string_view::npos) return std::string(s);
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return std::string(s.substr(start, i - start + 1));
  }
  return std::string(s.substr(start));
}

std::string drop_trailing_commas(std::string_view s) {
  std::string out;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      out.push_back(c);
      if (c == '\\' && i + 1 < s.size()) out.push_back(s[++i]);
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

char prev_nonspace(const std::string& out) {
  for (auto it = out.rbegin(); it != out.rend(); ++it)
    if (!std::isspace(static_cast<unsigned char>(*it))) return *it;
  return '\0';
}

// Single-quoted strings become double-quoted when they open after a
// structural character and close before one.
std::string single_to_double_quotes(std::string_view s) {
  std::string out;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      out.push_back(c);
      if (c == '\\' && i + 1 < s.size()) out.push_back(s[++i]);
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') {
      in_str = true;
      out.push_back(c);
      continue;
    }
    char prev = prev_nonspace(out);
    if (c == '\'' && (prev == '{' || prev == '[' || prev == ',' || prev == ':')) {
      std::size_t close = std::string_view::npos;
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        if (s[j] == '\\') {
          ++j;
          continue;
        }
        if (s[j] != '\'') continue;
        std::size_t k = j + 1;
        while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
        if (k == s.size() || s[k] == ':' || s[k] == ',' || s[k] == '}' || s[k] == ']') {
          close = j;
          break;
        }
      }
      if (close == std::string_view::npos) {
        out.push_back(c);
        continue;
      }
      out.push_back('"');
      for (std::size_t j = i + 1; j < close; ++j) {
        if (s[j] == '\\' && j + 1 < close && s[j + 1] == '\'') {
          out.push_back('\'');
          ++j;
        } else if (s[j] == '"') {
          out += "\\\"";
        } else {
          out.push_back(s[j]);
        }
      }
      out.push_back('"');
      i = close;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string normalize_key(std::string_view key) {
  std::string out;
  for (unsigned char c : key) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string coerce(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

int max_depth(std::string_view s) {
  int depth = 0, best = 0;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '{' || c == '[') {
      best = std::max(best, ++depth);
    } else if (c == '}' || c == ']') {
      --depth;
    }
  }
  return best;
}

enum class ItemKey { description, quantity, unit_price, amount };

std::optional<ItemKey> item_key(std::string_view key) {
  static const std::map<std::string, ItemKey> table{
      {"description", ItemKey::description}, {"desc", ItemKey::description},
      {"item", ItemKey::description},        {"name", ItemKey::description},
      {"product", ItemKey::description},     {"quantity", ItemKey::quantity},
      {"qty", ItemKey::quantity},            {"units", ItemKey::quantity},
      {"unit_price", ItemKey::unit_price},   {"price", ItemKey::unit_price},
      {"rate", ItemKey::unit_price},         {"unit_cost", ItemKey::unit_price},
      {"amount", ItemKey::amount},           {"total", ItemKey::amount},
      {"line_total", ItemKey::amount},       {"ext_price", ItemKey::amount},
  };
  auto it = table.find(normalize_key(key));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

void set_item(RawLineItem& item, ItemKey k, std::string v) {
  switch (k) {
    case ItemKey::description: item.description = std::move(v); break;
    case ItemKey::quantity: item.quantity = std::move(v); break;
    case ItemKey::unit_price: item.unit_price = std::move(v); break;
    case ItemKey::amount: item.amount = std::move(v); break;
  }
}

}  // namespace

PromptSchema PromptSchema::full() {
  return PromptSchema{std::vector<CanonicalField>(kAllFields.begin(), kAllFields.end()), true};
}

std::string build_prompt(std::string_view text, const PromptSchema& schema, std::size_t max_chars) {
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "empty document text");
  std::string p = kExtractionInstruction;
  p += '\n';
  if (!schema.fields.empty()) {
    p += "\nFields:\n";
    for (auto f : schema.fields) {
      p += "- ";
      p += field_name(f);
      p += ": ";
      p += field_description(f);
      p += '\n';
    }
    if (schema.line_items) p += "- line_items: one entry per table row\n";
    p += "\nJSON keys: {";
    for (std::size_t i = 0; i < schema.fields.size(); ++i) {
      if (i) p += ", ";
      p += '"';
      p += field_name(schema.fields[i]);
      p += "\": string|null";
    }
    if (schema.line_items)
      p += ", \"line_items\": [{\"description\": string, \"quantity\": string, \"unit_price\": string, \"amount\": "
           "string}]";
    p += "}\n";
  }
  p += "\nUse null for any field that is absent. Output JSON only, with no commentary.\n\n";
  p += "BEGIN DOCUMENT\n";
  if (text.size() > max_chars) {
    std::size_t cut = utf8_floor(text, max_chars);
    p.append(text.substr(0, cut));
    p += "\n[truncated: " + std::to_string(cut) + " of " + std::to_string(text.size()) + " characters shown]";
  } else {
    p.append(text);
  }
  p += "\nEND DOCUMENT\n";
  return p;
}

LiveLlmClient::LiveLlmClient(LiveLlmConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.sleep) cfg_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string LiveLlmClient::complete(const std::string& prompt, const std::string& auth,
                                    std::vector<LlmAttempt>* trail) {
  if (auth.empty()) throw Error(ErrorCode::MissingAuthKey, "LLM_API_KEY is not set");
  auto scheme_end = cfg_.url.find("://");
  auto path_start = cfg_.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string origin = cfg_.url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<64>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  std::string body = json{{"model", cfg_.model}, {"prompt", prompt}}.dump();
  std::string last;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    httplib::Client client(origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers{{"Authorization", "Bearer " + auth}};
    auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body, "application/json");
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    bool retry = false;
    if (!res) {
      last = res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout
                 ? "timeout"
                 : httplib::to_string(res.error());
      retry = true;
    } else if (res->status >= 500) {
      last = "http " + std::to_string(res->status);
      retry = true;
    } else if (res->status >= 400) {
      last = "http " + std::to_string(res->status);
    } else {
      json reply = json::parse(res->body, nullptr, false);
      if (reply.is_object() && reply.contains("text") && reply["text"].is_string()) {
        if (trail) trail->push_back({attempt, "ok", ms});
        return reply["text"].get<std::string>();
      }
      last = "malformed response";
    }
    if (trail) trail->push_back({attempt, last, ms});
    if (!retry) break;
    if (attempt < cfg_.max_attempts && !cfg_.backoff.empty())
      cfg_.sleep(cfg_.backoff[std::min<std::size_t>(attempt - 1, cfg_.backoff.size() - 1)]);
  }
  throw Error(ErrorCode::LlmUnavailable, last);
}

std::string ReplayLlmClient::fixture_name(const std::string& prompt) { return sha256_hex(prompt) + ".txt"; }

std::string ReplayLlmClient::complete(const std::string& prompt, const std::string&, std::vector<LlmAttempt>* trail) {
  auto path = dir_ / fixture_name(prompt);
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FixtureMiss, sha256_hex(prompt));
  if (trail) trail->push_back({1, "ok", 0.0});
  return read_text_file(path);
}

std::string RefusalLlmClient::complete(const std::string&, const std::string&, std::vector<LlmAttempt>* trail) {
  if (trail) trail->push_back({1, "ok", 0.0});
  return "I cannot help with that.";
}

std::unique_ptr<LlmClient> make_llm_client(std::string_view mode, const LiveLlmConfig& live) {
  if (mode == "live") {
    if (live.url.empty()) throw Error(ErrorCode::InvalidArgument, "live LLM mode needs an endpoint url");
    return std::make_unique<LiveLlmClient>(live);
  }
  if (mode.rfind("replay:", 0) == 0) return std::make_unique<ReplayLlmClient>(std::string(mode.substr(7)));
  if (mode == "refusal") return std::make_unique<RefusalLlmClient>();
  throw Error(ErrorCode::InvalidArgument, "unknown LLM mode: " + std::string(mode));
}

bool is_strict_json(std::string_view text) noexcept {
  try {
    return json::accept(text);
  } catch (...) {
    return false;
  }
}

std::string repair_json(std::string_view raw) {
  std::string s(raw);
  if (is_strict_json(s)) return s;
  s = std::string(trim(strip_fences(s)));
  if (is_strict_json(s)) return s;
  s = first_balanced_object(s);
  if (is_strict_json(s)) return s;
  s = drop_trailing_commas(s);
  if (is_strict_json(s)) return s;
  s = single_to_double_quotes(s);
  if (is_strict_json(s)) return s;
  s = drop_trailing_commas(s);
  if (is_strict_json(s)) return s;
  throw Error(ErrorCode::Unrepairable, "response is not JSON");
}

std::optional<CanonicalField> field_from_synonym(std::string_view key) {
  using F = CanonicalField;
  static const std::map<std::string, F> table{
      {"invoice_no", F::invoice_number},       {"invoice_num", F::invoice_number},
      {"invoice_id", F::invoice_number},       {"inv_no", F::invoice_number},
      {"invoice", F::invoice_number},          {"bill_no", F::invoice_number},
      {"date", F::invoice_date},               {"issue_date", F::invoice_date},
      {"date_of_issue", F::invoice_date},      {"due", F::due_date},
      {"payment_due", F::due_date},            {"vendor", F::vendor_name},
      {"supplier", F::vendor_name},            {"seller", F::vendor_name},
      {"supplier_name", F::vendor_name},       {"company", F::vendor_name},
      {"supplier_address", F::vendor_address}, {"bill_to", F::billing_address},
      {"customer_address", F::billing_address}, {"ship_to", F::shipping_address},
      {"delivery_address", F::shipping_address}, {"currency_code", F::currency},
      {"sub_total", F::subtotal},              {"net_amount", F::subtotal},
      {"vat_rate", F::tax_rate},               {"tax", F::tax_amount},
      {"vat", F::tax_amount},                  {"gst", F::tax_amount},
      {"sales_tax", F::tax_amount},            {"discount", F::discount_amount},
      {"total", F::total_amount},              {"amount_due", F::total_amount},
      {"grand_total", F::total_amount},        {"total_due", F::total_amount},
      {"balance_due", F::total_amount},        {"weight", F::weight_kg},
      {"net_weight", F::weight_kg},            {"gross_weight", F::weight_kg},
  };
  std::string k = normalize_key(key);
  if (auto f = field_from_name(k)) return f;
  auto it = table.find(k);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

PartialInvoice parse_extraction(std::string_view json_text) {
  if (max_depth(json_text) > 256) throw Error(ErrorCode::Unrepairable, "nesting too deep");
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::Unrepairable, "not strict JSON");
  if (!doc.is_object()) throw Error(ErrorCode::NotAnObject, std::string("top level is ") + doc.type_name());
  PartialInvoice out;
  try {
    for (const auto& [key, value] : doc.items()) {
      std::string nk = normalize_key(key);
      if (nk == "line_items" || nk == "items" || nk == "lineitems" || nk == "line_item") {
        if (!value.is_array()) {
          if (!value.is_null()) out.unparsed_keys.push_back(key);
          continue;
        }
        for (std::size_t i = 0; i < value.size(); ++i) {
          const json& el = value[i];
          RawLineItem item;
          if (el.is_object()) {
            for (const auto& [ik, iv] : el.items()) {
              auto k = item_key(ik);
              if (!k) {
                out.unparsed_keys.push_back(key + "[" + std::to_string(i) + "]." + ik);
              } else if (!iv.is_null()) {
                set_item(item, *k, coerce(iv));
              }
            }
          } else if (el.is_array()) {
            const ItemKey order[] = {ItemKey::description, ItemKey::quantity, ItemKey::unit_price, ItemKey::amount};
            for (std::size_t j = 0; j < el.size() && j < 4; ++j)
              if (!el[j].is_null()) set_item(item, order[j], coerce(el[j]));
          } else {
            out.unparsed_keys.push_back(key + "[" + std::to_string(i) + "]");
            continue;
          }
          out.line_items.push_back(std::move(item));
        }
        continue;
      }
      auto field = field_from_synonym(key);
      if (!field) {
        out.unparsed_keys.push_back(key);
        continue;
      }
      if (value.is_null() || out.fields.count(*field)) continue;
      out.fields[*field] = coerce(value);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Unrepairable, e.what());
  }
  return out;
}

}  // namespace invx
