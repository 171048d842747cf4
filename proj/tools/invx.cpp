#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "invx/config.hpp"
#include "invx/error.hpp"
#include "invx/eval.hpp"
#include "invx/export.hpp"
#include "invx/pipeline.hpp"
#include "invx/service.hpp"

namespace {

using namespace invx;

std::string auth_key_from_env() {
  const char* k = std::getenv("LLM_API_KEY");
  return k ? k : "";
}

AppConfig config_or_default(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

// "none" runs without a model; the default is live when an endpoint is configured.
std::unique_ptr<LlmClient> llm_for(const std::string& mode, const AppConfig& cfg) {
  std::string s = mode;
  if (s.empty()) s = cfg.llm.url.empty() ? "none" : "live";
  if (s == "none") return nullptr;
  return make_llm_client(s, cfg.llm);
}

int cmd_process(const std::vector<std::string>& inputs, const std::string& out, const std::string& config_path,
                const std::string& llm_mode, std::optional<double> threshold) {
  AppConfig cfg = config_or_default(config_path);
  if (threshold) cfg.pipeline.review_threshold = *threshold;
  cfg.pipeline.validate();
  cfg.pipeline.input_paths = inputs;
  cfg.pipeline.output_path = out;
  cfg.pipeline.llm_auth_key = auth_key_from_env();
  auto llm = llm_for(llm_mode, cfg);
  if (llm && llm->mode() == "live" && cfg.pipeline.llm_auth_key.empty())
    throw Error(ErrorCode::MissingAuthKey, "LLM_API_KEY is not set");
  auto engines = make_engines(cfg.ocr_engines);
  PipelineDeps deps = make_deps(cfg, llm.get(), engines.get());

  DedupIndex index;
  VendorHistory history;
  auto outcome = run_batch(expand_inputs(inputs), cfg.pipeline, deps, index, history, [](const BatchError& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.path.c_str(), e.message.c_str());
  });
  std::vector<ExtractedInvoice> rows;
  for (const auto& r : outcome.results) {
    if (r.invoice.status == InvoiceStatus::rejected_duplicate) {
      std::fprintf(stderr, "skipped duplicate: %s\n", r.source_path.c_str());
      continue;
    }
    rows.push_back(r.invoice);
  }
  if (rows.empty()) {
    std::puts("No data extracted.");
    return 2;
  }
  write_export(rows, out);
  std::puts("Processing complete.");
  return 0;
}

int cmd_gen_corpus(const std::string& out, CorpusOptions opts, const std::string& degradation) {
  opts.degradation = Degradation::parse(degradation);
  auto ids = gen_corpus(out, opts);
  std::printf("generated %zu invoices in %s\n", ids.size(), out.c_str());
  return 0;
}

int cmd_score(const std::string& corpus, const std::string& config_path, std::string llm_mode,
              const std::string& report, bool ocr, double noisy_rate) {
  AppConfig cfg = config_or_default(config_path);
  if (ocr) {
    if (cfg.ocr_engines.empty()) cfg.ocr_engines.push_back({"mock-noisy", "mock-noisy", corpus, noisy_rate, 1, ""});
    auto engines = make_engines(cfg.ocr_engines);
    auto s = score_ocr(corpus, *engines, cfg.pipeline, cfg.preprocess);
    std::printf("pages %zu  mean char accuracy %.4f\n", s.per_page.size(), s.mean_char_accuracy);
    return 0;
  }
  if (llm_mode.empty()) llm_mode = "replay:" + (std::filesystem::path(corpus) / "llm_fixtures").string();
  cfg.pipeline.llm_auth_key = auth_key_from_env();
  auto llm = llm_for(llm_mode, cfg);
  auto engines = make_engines(cfg.ocr_engines);
  PipelineDeps deps = make_deps(cfg, llm.get(), engines.get());
  std::optional<std::filesystem::path> dir;
  if (!report.empty()) dir = report;
  auto m = score_run(corpus, cfg.pipeline, deps, dir);
  std::printf("invoices %d  processed %d  failed %d\n", m.invoices, m.processed, m.failed);
  std::printf("required-field accuracy %.4f (%d/%d)\n", m.required_micro.rate(), m.required_micro.correct,
              m.required_micro.total);
  std::printf("all-field accuracy %.4f (%d/%d)\n", m.all_micro.rate(), m.all_micro.correct, m.all_micro.total);
  std::printf("invoice accuracy %.4f (%d/%d)\n", m.invoice_level.rate(), m.invoice_level.correct,
              m.invoice_level.total);
  std::printf("intervention rate %.4f (%d/%d)\n", m.intervention_rate, m.needs_review, m.processed);
  std::printf("latency ms p50 %.1f  p95 %.1f  mean %.1f\n", m.latency.p50, m.latency.p95, m.latency.mean);
  for (const auto& [name, c] : m.per_field) std::printf("  %-18s %.4f (%d/%d)\n", name.c_str(), c.rate(), c.correct, c.total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invoice extraction"};
  app.require_subcommand(1);

  std::vector<std::string> inputs;
  std::string out, config_path, llm_mode, store, corpus, report, degradation = "none";
  std::optional<double> threshold;
  int port = 8080;
  CorpusOptions copts;
  bool no_images = false, ocr = false;
  double noisy_rate = 0.03;

  auto* process = app.add_subcommand("process", "Extract invoices from files or directories");
  process->add_option("--input", inputs, "Files or directories")->required();
  process->add_option("--out", out, "Output file (.xlsx, .csv, .json, .sql)")->required();
  process->add_option("--config", config_path, "JSON config file");
  process->add_option("--llm", llm_mode, "live, replay:<dir>, refusal or none");
  process->add_option("--threshold", threshold, "Review threshold")->check(CLI::Range(0.0, 1.0));

  auto* serve = app.add_subcommand("serve", "Run the REST service");
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--store", store)->required();
  serve->add_option("--config", config_path);
  serve->add_option("--llm", llm_mode, "live, replay:<dir>, refusal or none");

  auto* gen = app.add_subcommand("gen-corpus", "Write a seeded synthetic corpus");
  gen->add_option("--out", out)->required();
  gen->add_option("--seed", copts.seed);
  gen->add_option("--n", copts.n)->check(CLI::PositiveNumber);
  gen->add_option("--degradation", degradation, "none, skew:<deg>, noise:<p> or both:<deg>:<p>");
  gen->add_option("--dpi", copts.dpi)->check(CLI::Range(72, 600));
  gen->add_option("--llm-error-rate", copts.llm_error_rate)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--llm-refusal-rate", copts.llm_refusal_rate)->check(CLI::Range(0.0, 1.0));
  gen->add_flag("--image-pdf", copts.image_only_pdf, "Also write an image-only PDF per invoice");
  gen->add_flag("--no-images", no_images, "Skip page.png");

  auto* score = app.add_subcommand("score", "Score the pipeline on a corpus");
  score->add_option("--corpus", corpus)->required();
  score->add_option("--config", config_path);
  score->add_option("--llm", llm_mode, "Defaults to the corpus replay fixtures");
  score->add_option("--report", report, "Directory for metrics.json and metrics.csv");
  score->add_flag("--ocr", ocr, "Score the bitmap OCR path instead");
  score->add_option("--noisy-rate", noisy_rate, "MockNoisyEngine rate when no engine is configured");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*process) return cmd_process(inputs, out, config_path, llm_mode, threshold);
    if (*gen) {
      copts.images = !no_images;
      return cmd_gen_corpus(out, copts, degradation);
    }
    if (*score) return cmd_score(corpus, config_path, llm_mode, report, ocr, noisy_rate);
    if (*serve) {
      AppConfig cfg = config_or_default(config_path);
      cfg.pipeline.llm_auth_key = auth_key_from_env();
      auto llm = llm_for(llm_mode, cfg);
      if (llm && llm->mode() == "live" && cfg.pipeline.llm_auth_key.empty())
        throw Error(ErrorCode::MissingAuthKey, "LLM_API_KEY is not set");
      return run_service(cfg, store, port, std::move(llm));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fatal: %s\n", e.what());
    return 1;
  }
  return 0;
}
