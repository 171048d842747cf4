#include "invx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "invx/error.hpp"
#include "invx/pdf.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

enum class ItemColumn { none, description, quantity, unit_price, amount };

ItemColumn classify_header(std::string_view text) {
  std::string t = to_lower(text);
  auto has = [&](const char* s) { return t.find(s) != std::string::npos; };
  if (has("desc") || has("item") || has("product") || has("service")) return ItemColumn::description;
  if (has("qty") || has("quantity") || has("units")) return ItemColumn::quantity;
  if (has("unit") || has("price") || has("rate")) return ItemColumn::unit_price;
  if (has("amount") || has("total")) return ItemColumn::amount;
  return ItemColumn::none;
}

std::vector<double> page_heights(const RawDocument& doc, std::size_t pages, int dpi) {
  std::vector<double> h(pages, 11.0 * dpi);
  if (doc.format != DocFormat::pdf) return h;
  try {
    pdf::Reader reader(doc.bytes);
    for (std::size_t p = 0; p < pages && p < reader.page_count(); ++p) h[p] = reader.page_size(p).second * dpi / 72.0;
  } catch (const Error&) {
  }
  return h;
}

}  // namespace

std::vector<RawLineItem> table_line_items(const TableRegion& table, std::span<const Token> tokens) {
  std::map<int, const Token*> by_id;
  for (const auto& t : tokens) by_id[t.id] = &t;
  auto cell_text = [&](std::size_t r, std::size_t c) {
    std::string s;
    for (int id : table.cells[r][c]) {
      if (!s.empty()) s += ' ';
      s += by_id.at(id)->text;
    }
    return s;
  };
  std::vector<ItemColumn> roles(table.columns.size(), ItemColumn::none);
  std::size_t first_row = 0;
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    std::vector<ItemColumn> candidate(table.columns.size(), ItemColumn::none);
    int known = 0;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      candidate[c] = classify_header(cell_text(r, c));
      if (candidate[c] != ItemColumn::none) ++known;
    }
    if (known >= 2) {
      roles = candidate;
      first_row = r + 1;
      break;
    }
  }
  if (first_row == 0) {
    if (table.columns.size() != 4) return {};
    roles = {ItemColumn::description, ItemColumn::quantity, ItemColumn::unit_price, ItemColumn::amount};
  }
  std::vector<RawLineItem> items;
  for (std::size_t r = first_row; r < table.cells.size(); ++r) {
    RawLineItem item;
    for (std::size_t c = 0; c < roles.size(); ++c) {
      std::string text = cell_text(r, c);
      switch (roles[c]) {
        case ItemColumn::description: item.description = text; break;
        case ItemColumn::quantity: item.quantity = text; break;
        case ItemColumn::unit_price: item.unit_price = text; break;
        case ItemColumn::amount: item.amount = text; break;
        case ItemColumn::none: break;
      }
    }
    if (!item.amount.empty()) items.push_back(std::move(item));
  }
  return items;
}

ProcessResult extract_document(const RawDocument& doc, const PipelineConfig& cfg, const PipelineDeps& deps,
                               const std::function<void(std::string_view)>& on_stage) {
  auto reached = [&](std::string_view s) {
    if (on_stage) on_stage(s);
  };
  auto t_start = Clock::now();
  ProcessResult res;
  res.source_path = doc.source_path;
  res.raw_hash = doc.content_hash;
  auto stage = [&](const char* name, Clock::time_point t0) { res.timings.push_back({name, ms_since(t0)}); };

  auto t0 = Clock::now();
  std::vector<std::vector<Token>> embedded;
  if (doc.format == DocFormat::pdf) embedded = extract_embedded_text(doc, cfg.target_dpi);
  stage("embedded_text", t0);

  std::size_t chars = 0;
  for (const auto& page : embedded)
    for (const auto& t : page) chars += t.text.size();
  std::size_t page_count = std::max<std::size_t>(embedded.size(), 1);

  std::vector<PageImage> pages;
  std::vector<double> heights;
  CascadePlan plan;
  EngineRegistry no_engines;
  const EngineRegistry& engines = deps.engines ? *deps.engines : no_engines;
  if (!embedded.empty() && chars >= kEmbeddedCharsPerPage * page_count) {
    plan.steps = {{kEmbeddedSource, 0.0}};
    heights = page_heights(doc, embedded.size(), cfg.target_dpi);
  } else {
    t0 = Clock::now();
    auto raw_pages = rasterize(doc, cfg.target_dpi, deps.raster);
    stage("rasterize", t0);
    t0 = Clock::now();
    QualityReport worst;
    worst.score = 1.0;
    PreprocessOptions popts = deps.preprocess;
    popts.target_dpi = cfg.target_dpi;
    for (const auto& img : raw_pages) {
      auto ad = preprocess_adaptive(img, popts);
      if (pages.empty() || ad.quality.score < worst.score) worst = ad.quality;
      for (const auto& a : ad.applied)
        if (std::find(res.preprocess_applied.begin(), res.preprocess_applied.end(), a) == res.preprocess_applied.end())
          res.preprocess_applied.push_back(a);
      heights.push_back(ad.image.height);
      pages.push_back(std::move(ad.image));
    }
    stage("preprocess", t0);
    plan = select_plan(doc, embedded, worst, cfg.ocr_escalation_threshold, engines);
  }

  t0 = Clock::now();
  auto cascade = run_cascade(plan, pages, embedded, engines);
  res.tokens = std::move(cascade.tokens);
  res.ocr_trace = std::move(cascade.trace);
  stage("ocr", t0);
  res.text = tokens_to_text(res.tokens);
  if (trim(res.text).empty()) throw Error(ErrorCode::BlankPage, "no text extracted");
  reached("preprocessed");

  t0 = Clock::now();
  std::vector<LabelLink> links;
  std::vector<RawLineItem> table_items;
  std::map<int, std::vector<Token>> by_page;
  for (const auto& t : res.tokens) by_page[t.page].push_back(t);
  for (auto& [page, toks] : by_page) {
    double h = page < static_cast<int>(heights.size()) ? heights[page] : 11.0 * cfg.target_dpi;
    auto pl = analyze_page(toks, h, deps.lexicon, deps.layout);
    for (auto& l : pl.links)
      if (std::none_of(links.begin(), links.end(), [&](const LabelLink& x) { return x.field == l.field; }))
        links.push_back(std::move(l));
    if (table_items.empty())
      for (const auto& table : pl.tables) {
        table_items = table_line_items(table, toks);
        if (!table_items.empty()) break;
      }
  }
  stage("layout", t0);

  t0 = Clock::now();
  std::optional<PartialInvoice> partial;
  if (deps.llm) {
    try {
      std::string prompt = build_prompt(res.text, PromptSchema::full(), cfg.llm_max_chars);
      std::string raw = deps.llm->complete(prompt, cfg.llm_auth_key, &res.llm_attempts);
      partial = parse_extraction(repair_json(raw));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MissingAuthKey) throw;
      res.llm_error = e.what();
    }
  } else {
    res.llm_error = "LlmUnavailable: no LLM client configured";
  }
  stage("llm", t0);

  t0 = Clock::now();
  FuseInputs in;
  in.llm = partial ? &*partial : nullptr;
  in.regex = regex_fields(res.text);
  in.layout = links;
  in.tokens = res.tokens;
  NormalizeOptions nopts{cfg.date_policy, cfg.default_currency};
  ExtractedInvoice& inv = res.invoice;
  inv.fields = fuse_fields(in, nopts);
  reached("extracted");

  std::string currency = inv.currency_or(cfg.default_currency);
  const auto& raw_items = partial && !partial->line_items.empty() ? partial->line_items : table_items;
  for (const auto& raw : raw_items) {
    try {
      inv.line_items.push_back(normalize_line_item(raw, currency));
    } catch (const Error&) {
      // an unreadable row leaves the line checks to the remaining rows
    }
  }
  inv.validation_report = check_arithmetic(inv);
  score_fields(inv, res.tokens, deps.scoring);
  inv.overall_confidence = overall_confidence(inv);
  stage("validate", t0);
  res.total_ms = ms_since(t_start);
  reached("validated");
  return res;
}

Decision decide(ExtractedInvoice& inv, const std::string& raw_hash, DedupIndex& index, VendorHistory& history,
                double tau) {
  Decision d;
  auto logical = logical_hash(inv);
  d.dedup = index.check(raw_hash, logical);
  const FieldValue* vendor = inv.get(CanonicalField::vendor_name);
  auto total = inv.money(CanonicalField::total_amount);
  std::string vendor_name = vendor ? normalized_to_string(vendor->normalized) : "";
  if (!vendor_name.empty() && total) d.anomaly = detect_anomaly(history, vendor_name, *total);
  d.event = finalize(inv, tau, d.dedup, d.anomaly);
  if (d.dedup == DedupResult::fresh) {
    index.record(raw_hash, logical);
    if (!vendor_name.empty() && total) history.append(vendor_name, total->minor_units);
  }
  return d;
}

std::vector<std::filesystem::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::filesystem::path> out;
  for (const auto& in : inputs) {
    std::filesystem::path p(in);
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

BatchOutcome run_batch(const std::vector<std::filesystem::path>& files, const PipelineConfig& cfg,
                       const PipelineDeps& deps, DedupIndex& index, VendorHistory& history,
                       const std::function<void(const BatchError&)>& on_error) {
  BatchOutcome out;
  for (const auto& path : files) {
    try {
      auto doc = load_document(path);
      auto res = extract_document(doc, cfg, deps);
      decide(res.invoice, res.raw_hash, index, history, cfg.review_threshold);
      out.results.push_back(std::move(res));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MissingAuthKey) throw;
      BatchError err{path.string(), e.what()};
      if (on_error) on_error(err);
      out.errors.push_back(std::move(err));
    }
  }
  return out;
}

}  // namespace invx
