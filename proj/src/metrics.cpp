#include <algorithm>
#include <chrono>
#include <cstdio>
#include <json.hpp>
#include <numeric>

#include "invx/error.hpp"
#include "invx/eval.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kReportNote =
    "Seeded synthetic-corpus analogue; figures describe this corpus and configuration only.";

std::vector<fs::path> invoice_dirs(const fs::path& corpus) {
  if (!fs::is_directory(corpus)) throw Error(ErrorCode::IoError, "corpus not found: " + corpus.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(corpus))
    if (e.is_directory() && fs::exists(e.path() / "truth.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

double percentile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) return 0;
  // Nearest-rank.
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

ojson count_json(const FieldCount& c) { return {{"correct", c.correct}, {"total", c.total}, {"rate", c.rate()}}; }

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double char_accuracy(std::string_view ref, std::string_view hyp) {
  if (ref.empty()) throw Error(ErrorCode::EmptyReference, "reference text is empty");
  double acc = 1.0 - static_cast<double>(levenshtein(ref, hyp)) / static_cast<double>(ref.size());
  return std::max(0.0, acc);
}

LatencyStats latency_stats(std::vector<double> ms) {
  LatencyStats s;
  if (ms.empty()) return s;
  std::sort(ms.begin(), ms.end());
  s.p50 = percentile_sorted(ms, 50);
  s.p95 = percentile_sorted(ms, 95);
  s.mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  return s;
}

std::string MetricsReport::to_json() const {
  ojson j;
  j["note"] = kReportNote;
  j["invoices"] = invoices;
  j["processed"] = processed;
  j["failed"] = failed;
  j["char_accuracy"] = char_accuracy;
  j["required_field_accuracy"] = count_json(required_micro);
  j["all_field_accuracy"] = count_json(all_micro);
  j["invoice_accuracy"] = count_json(invoice_level);
  ojson pf = ojson::object();
  for (const auto& [name, c] : per_field) pf[name] = count_json(c);
  j["per_field"] = pf;
  j["needs_review"] = needs_review;
  j["intervention_rate"] = intervention_rate;
  j["latency_ms"] = {{"p50", latency.p50}, {"p95", latency.p95}, {"mean", latency.mean}};
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
  std::string out = "# " + std::string(kReportNote) + "\r\nmetric,correct,total,value\r\n";
  auto row = [&](const std::string& name, long long correct, long long total, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    out += name + "," + std::to_string(correct) + "," + std::to_string(total) + "," + buf + "\r\n";
  };
  row("required_field_accuracy", required_micro.correct, required_micro.total, required_micro.rate());
  row("all_field_accuracy", all_micro.correct, all_micro.total, all_micro.rate());
  row("invoice_accuracy", invoice_level.correct, invoice_level.total, invoice_level.rate());
  row("intervention_rate", needs_review, processed, intervention_rate);
  row("char_accuracy", 0, 0, char_accuracy);
  row("failed", failed, invoices, invoices ? static_cast<double>(failed) / invoices : 0.0);
  row("latency_p50_ms", 0, 0, latency.p50);
  row("latency_p95_ms", 0, 0, latency.p95);
  row("latency_mean_ms", 0, 0, latency.mean);
  for (const auto& [name, c] : per_field) row("field:" + name, c.correct, c.total, c.rate());
  return out;
}

MetricsReport score_run(const fs::path& corpus, const PipelineConfig& cfg, const PipelineDeps& deps,
                        const std::optional<fs::path>& report_dir) {
  MetricsReport r;
  DedupIndex index;
  VendorHistory history;
  std::vector<double> char_acc;
  for (const auto& dir : invoice_dirs(corpus)) {
    ++r.invoices;
    auto truth = ojson::parse(read_text_file(dir / "truth.json"));
    auto start = std::chrono::steady_clock::now();
    ProcessResult res;
    try {
      res = extract_document(load_document(dir / "invoice.pdf"), cfg, deps);
      decide(res.invoice, res.raw_hash, index, history, cfg.review_threshold);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MissingAuthKey) throw;
      ++r.failed;
      for (const auto& [name, _] : truth["fields"].items()) {
        auto f = field_from_name(name);
        r.per_field[name].total++;
        r.all_micro.total++;
        if (f && is_required(*f)) r.required_micro.total++;
      }
      r.invoice_level.total++;
      continue;
    }
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    r.latencies_ms.push_back(ms);
    ++r.processed;
    if (res.invoice.status == InvoiceStatus::needs_review) ++r.needs_review;

    bool all_required = true;
    for (auto f : kAllFields) {
      std::string name(field_name(f));
      if (!truth["fields"].contains(name)) continue;
      std::string expected = truth["fields"][name].get<std::string>();
      const FieldValue* got = res.invoice.get(f);
      bool ok = got && normalized_to_string(got->normalized) == expected;
      auto& c = r.per_field[name];
      c.total++;
      r.all_micro.total++;
      if (ok) {
        c.correct++;
        r.all_micro.correct++;
      }
      if (is_required(f)) {
        r.required_micro.total++;
        if (ok) r.required_micro.correct++;
        else all_required = false;
      }
    }
    r.invoice_level.total++;
    if (all_required) r.invoice_level.correct++;
    std::string ref = truth_text(dir);
    if (!ref.empty()) char_acc.push_back(char_accuracy(ref, res.text));
  }
  r.intervention_rate = r.processed ? static_cast<double>(r.needs_review) / r.processed : 0.0;
  r.char_accuracy =
      char_acc.empty() ? 0.0 : std::accumulate(char_acc.begin(), char_acc.end(), 0.0) / static_cast<double>(char_acc.size());
  r.latency = latency_stats(r.latencies_ms);
  if (report_dir) {
    fs::create_directories(*report_dir);
    write_file_atomic(*report_dir / "metrics.json", r.to_json());
    write_file_atomic(*report_dir / "metrics.csv", r.to_csv());
  }
  return r;
}

std::string truth_text(const fs::path& invoice_dir) {
  auto truth = ojson::parse(read_text_file(invoice_dir / "truth.json"));
  std::vector<Token> tokens;
  for (const auto& t : truth.at("tokens")) {
    Token tok;
    tok.text = t.at("text").get<std::string>();
    const auto& b = t.at("bbox");
    tok.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    tok.page = t.value("page", 0);
    tokens.push_back(std::move(tok));
  }
  sort_reading_order(tokens);
  return tokens_to_text(tokens);
}

OcrScore score_ocr(const fs::path& corpus, const EngineRegistry& engines, const PipelineConfig& cfg,
                   const PreprocessOptions& popts) {
  OcrScore s;
  for (const auto& dir : invoice_dirs(corpus)) {
    if (!fs::exists(dir / "page.png")) continue;
    std::string ref = truth_text(dir);
    double acc = 0;
    std::vector<std::string> applied;
    // A page the chain cannot process scores 0 rather than leaving the sample.
    try {
      auto decoded = decode_png(read_file(dir / "page.png"));
      auto pre = preprocess_adaptive(decoded.image, popts);
      applied = pre.applied;
      RawDocument none;
      auto plan = select_plan(none, {}, pre.quality, cfg.ocr_escalation_threshold, engines);
      auto result = run_cascade(plan, {pre.image}, {}, engines);
      acc = char_accuracy(ref, tokens_to_text(result.tokens));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::EmptyReference) throw;
      applied.push_back(std::string("error: ") + e.what());
    }
    s.per_page.push_back(acc);
    s.applied.push_back(std::move(applied));
  }
  if (!s.per_page.empty())
    s.mean_char_accuracy =
        std::accumulate(s.per_page.begin(), s.per_page.end(), 0.0) / static_cast<double>(s.per_page.size());
  return s;
}

}  // namespace invx
