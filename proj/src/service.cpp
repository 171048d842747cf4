#include "invx/service.hpp"

#include <algorithm>
#include <json.hpp>

#include "invx/error.hpp"
#include "invx/export.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr JobState kLinear[] = {JobState::received, JobState::preprocessed, JobState::extracted, JobState::validated};

int linear_rank(JobState s) {
  for (int i = 0; i < 4; ++i)
    if (kLinear[i] == s) return i;
  return 4;
}

json token_json(const Token& t) {
  return {{"id", t.id},
          {"text", t.text},
          {"bbox", {t.bbox.x0, t.bbox.y0, t.bbox.x1, t.bbox.y1}},
          {"page", t.page},
          {"confidence", t.confidence},
          {"source", t.source}};
}

Token token_from(const json& j) {
  Token t;
  t.id = j.at("id").get<int>();
  t.text = j.at("text").get<std::string>();
  const auto& b = j.at("bbox");
  t.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  t.page = j.value("page", 0);
  t.confidence = j.value("confidence", 1.0);
  t.source = j.value("source", std::string(kEmbeddedSource));
  return t;
}

bool counts_as_accepted(const JobRecord& r) {
  return r.invoice && (r.state == JobState::exported || r.state == JobState::needs_review);
}

}  // namespace

std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::received: return "received";
    case JobState::preprocessed: return "preprocessed";
    case JobState::extracted: return "extracted";
    case JobState::validated: return "validated";
    case JobState::needs_review: return "needs_review";
    case JobState::exported: return "exported";
    case JobState::failed: return "failed";
    case JobState::rejected_duplicate: return "rejected_duplicate";
  }
  return "failed";
}

std::optional<JobState> job_state_from_string(std::string_view s) noexcept {
  for (auto st : {JobState::received, JobState::preprocessed, JobState::extracted, JobState::validated,
                  JobState::needs_review, JobState::exported, JobState::failed, JobState::rejected_duplicate})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_terminal(JobState s) noexcept {
  return s == JobState::exported || s == JobState::failed || s == JobState::rejected_duplicate ||
         s == JobState::needs_review;
}

bool is_legal_transition(JobState from, JobState to) noexcept {
  if (to == JobState::failed) return from != JobState::failed;
  switch (from) {
    case JobState::received: return to == JobState::preprocessed;
    case JobState::preprocessed: return to == JobState::extracted;
    case JobState::extracted: return to == JobState::validated;
    case JobState::validated:
      return to == JobState::exported || to == JobState::needs_review || to == JobState::rejected_duplicate;
    case JobState::needs_review: return to == JobState::exported;
    default: return false;
  }
}

bool replay_is_legal(const JobRecord& job) {
  JobState s = JobState::received;
  for (const auto& t : job.transitions) {
    if (t.from != s || !is_legal_transition(t.from, t.to)) return false;
    s = t.to;
  }
  return s == job.state;
}

std::string job_to_json(const JobRecord& job) {
  json j;
  j["id"] = job.id;
  j["filename"] = job.filename;
  j["raw_hash"] = job.raw_hash;
  j["state"] = to_string(job.state);
  j["revision"] = job.revision;
  j["created_at"] = job.created_at;
  json tr = json::array();
  for (const auto& t : job.transitions) tr.push_back({{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"at", t.at}});
  j["transitions"] = tr;
  j["error"] = job.error ? json(*job.error) : json(nullptr);
  j["invoice"] = job.invoice ? json::parse(to_canonical_json(*job.invoice)) : json(nullptr);
  json toks = json::array();
  for (const auto& t : job.tokens) toks.push_back(token_json(t));
  j["tokens"] = toks;
  json tm = json::array();
  for (const auto& t : job.timings) tm.push_back({{"stage", t.stage}, {"ms", t.ms}});
  j["timings"] = tm;
  j["page_count"] = job.page_count;
  return j.dump();
}

JobRecord job_from_json(std::string_view text) {
  try {
    json j = json::parse(text);
    JobRecord r;
    r.id = j.at("id").get<std::string>();
    r.filename = j.value("filename", "");
    r.raw_hash = j.at("raw_hash").get<std::string>();
    auto st = job_state_from_string(j.at("state").get<std::string>());
    if (!st) throw Error(ErrorCode::InvalidArgument, "unknown job state");
    r.state = *st;
    r.revision = j.value("revision", 1);
    r.created_at = j.value("created_at", "");
    for (const auto& t : j.at("transitions")) {
      auto from = job_state_from_string(t.at("from").get<std::string>());
      auto to = job_state_from_string(t.at("to").get<std::string>());
      if (!from || !to) throw Error(ErrorCode::InvalidArgument, "unknown state in transition log");
      r.transitions.push_back({*from, *to, t.value("at", "")});
    }
    if (!j["error"].is_null()) r.error = j["error"].get<std::string>();
    if (!j["invoice"].is_null()) r.invoice = invoice_from_json(j["invoice"].dump());
    for (const auto& t : j.value("tokens", json::array())) r.tokens.push_back(token_from(t));
    for (const auto& t : j.value("timings", json::array()))
      r.timings.push_back({t.at("stage").get<std::string>(), t.at("ms").get<double>()});
    r.page_count = j.value("page_count", 0);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("job record: ") + e.what());
  }
}

JobStore::JobStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "raw");
  fs::create_directories(root_ / "jobs");
}

void JobStore::put_raw(const std::string& sha, std::span<const std::uint8_t> bytes) {
  auto p = root_ / "raw" / sha;
  if (fs::exists(p)) return;
  write_file_atomic(p, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Bytes JobStore::get_raw(const std::string& sha) const { return read_file(root_ / "raw" / sha); }

void JobStore::save(const JobRecord& job) { write_file_atomic(root_ / "jobs" / (job.id + ".json"), job_to_json(job)); }

JobRecord JobStore::load(const std::string& id) const {
  auto p = root_ / "jobs" / (id + ".json");
  if (!fs::exists(p)) throw Error(ErrorCode::NotFound, "job " + id);
  return job_from_json(read_text_file(p));
}

std::vector<JobRecord> JobStore::load_all() const {
  std::vector<JobRecord> out;
  for (const auto& e : fs::directory_iterator(root_ / "jobs")) {
    if (e.path().extension() != ".json") continue;  // leftover temp files from a crash
    out.push_back(job_from_json(read_text_file(e.path())));
  }
  std::sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) {
    return a.created_at != b.created_at ? a.created_at < b.created_at : a.id < b.id;
  });
  return out;
}

Service::Service(AppConfig cfg, fs::path store, std::unique_ptr<LlmClient> llm)
    : cfg_(std::move(cfg)),
      store_(std::move(store)),
      llm_(std::move(llm)),
      engines_(make_engines(cfg_.ocr_engines)),
      deps_(make_deps(cfg_, llm_.get(), engines_.get())),
      audit_(store_.audit_path()) {}

Service::~Service() { stop(); }

void Service::publish(JobRecord rec) {
  auto snap = std::make_shared<const JobRecord>(std::move(rec));
  std::lock_guard lk(snap_mu_);
  jobs_[snap->id] = std::move(snap);
}

void Service::start() {
  std::vector<std::string> pending;
  {
    std::lock_guard lk(write_mu_);
    index_ = DedupIndex{};
    history_ = VendorHistory{};
    // Job records are the source of truth; the index and history files are
    // rebuilt from them so a crash between the two writes cannot skew dedup.
    for (auto& rec : store_.load_all()) {
      if (counts_as_accepted(rec)) {
        index_.record(rec.raw_hash, logical_hash(*rec.invoice));
        const FieldValue* vendor = rec.invoice->get(CanonicalField::vendor_name);
        auto total = rec.invoice->money(CanonicalField::total_amount);
        if (vendor && total) history_.append(normalized_to_string(vendor->normalized), total->minor_units);
      }
      if (!is_terminal(rec.state)) pending.push_back(rec.id);
      publish(std::move(rec));
    }
    index_.save(store_.dedup_path());
    write_file_atomic(store_.vendors_path(), history_.serialize());
  }
  std::lock_guard lk(queue_mu_);
  stopping_ = false;
  for (auto& id : pending) queue_.push_back(id);
  for (int i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  queue_cv_.notify_all();
}

void Service::stop() {
  {
    std::lock_guard lk(queue_mu_);
    if (workers_.empty()) return;
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
  workers_.clear();
  std::lock_guard lk(queue_mu_);
  queue_.clear();
}

std::string Service::submit(const std::string& filename, Bytes bytes) {
  if (bytes.empty()) throw Error(ErrorCode::InvalidArgument, "empty upload");
  JobRecord rec;
  rec.id = make_uuid();
  rec.filename = filename;
  rec.raw_hash = sha256_hex(bytes);
  rec.created_at = utc_now_iso();
  {
    std::lock_guard lk(write_mu_);
    store_.put_raw(rec.raw_hash, bytes);
    store_.save(rec);
    AuditEvent e;
    e.action = "received";
    e.subject = rec.id;
    e.after = json{{"filename", filename}, {"raw_hash", rec.raw_hash}}.dump();
    audit_.append(std::move(e));
    publish(rec);
  }
  {
    std::lock_guard lk(queue_mu_);
    queue_.push_back(rec.id);
  }
  queue_cv_.notify_one();
  return rec.id;
}

std::shared_ptr<const JobRecord> Service::get(const std::string& id) const {
  std::lock_guard lk(snap_mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorCode::NotFound, "job " + id);
  return it->second;
}

std::vector<AuditEvent> Service::audit(const std::string& id) const {
  get(id);
  return audit_.read(id);
}

std::vector<std::shared_ptr<const JobRecord>> Service::review_queue(std::size_t limit) const {
  std::vector<std::shared_ptr<const JobRecord>> out;
  {
    std::lock_guard lk(snap_mu_);
    for (const auto& [_, rec] : jobs_)
      if (rec->state == JobState::needs_review && rec->invoice) out.push_back(rec);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a->invoice->overall_confidence != b->invoice->overall_confidence)
      return a->invoice->overall_confidence < b->invoice->overall_confidence;
    return a->created_at < b->created_at;
  });
  if (out.size() > limit) out.resize(limit);
  return out;
}

void Service::transition(const std::string& id, JobState to, const std::function<void(JobRecord&)>& mutate) {
  std::lock_guard lk(write_mu_);
  JobRecord rec = *get(id);
  // A recovered job re-runs from the start; stages it already recorded are skipped.
  if (linear_rank(to) < 4 && linear_rank(rec.state) >= linear_rank(to)) return;
  if (!is_legal_transition(rec.state, to))
    throw Error(ErrorCode::Conflict, std::string("illegal transition ") + std::string(to_string(rec.state)) + " -> " +
                                         std::string(to_string(to)));
  std::string at = utc_now_iso();
  rec.transitions.push_back({rec.state, to, at});
  AuditEvent e;
  e.action = "transition";
  e.subject = id;
  e.before = json{{"state", to_string(rec.state)}}.dump();
  e.after = json{{"state", to_string(to)}}.dump();
  rec.state = to;
  ++rec.revision;
  if (mutate) mutate(rec);
  store_.save(rec);
  audit_.append(std::move(e));
  publish(rec);
  if (on_transition) on_transition(id, to);
}

void Service::run_job(const std::string& id) {
  try {
    auto snap = get(id);
    auto doc = make_document(store_.get_raw(snap->raw_hash), snap->filename);
    auto res = extract_document(doc, cfg_.pipeline, deps_, [&](std::string_view stage) {
      transition(id, *job_state_from_string(stage));
    });
    int pages = 0;
    for (const auto& t : res.tokens) pages = std::max(pages, t.page + 1);

    std::lock_guard lk(write_mu_);
    JobRecord rec = *get(id);
    Decision d = decide(res.invoice, res.raw_hash, index_, history_, cfg_.pipeline.review_threshold);
    JobState to = d.dedup != DedupResult::fresh                      ? JobState::rejected_duplicate
                  : res.invoice.status == InvoiceStatus::needs_review ? JobState::needs_review
                                                                      : JobState::exported;
    if (!is_legal_transition(rec.state, to))
      throw Error(ErrorCode::Conflict, "job " + id + " cannot finish from " + std::string(to_string(rec.state)));
    std::string at = utc_now_iso();
    rec.transitions.push_back({rec.state, to, at});
    AuditEvent te;
    te.action = "transition";
    te.subject = id;
    te.before = json{{"state", to_string(rec.state)}}.dump();
    te.after = json{{"state", to_string(to)}}.dump();
    rec.state = to;
    ++rec.revision;
    rec.invoice = std::move(res.invoice);
    rec.tokens = std::move(res.tokens);
    rec.timings = std::move(res.timings);
    rec.timings.push_back({"total", res.total_ms});
    rec.page_count = pages;
    store_.save(rec);
    index_.save(store_.dedup_path());
    write_file_atomic(store_.vendors_path(), history_.serialize());
    d.event.subject = id;
    audit_.append(std::move(d.event));
    audit_.append(std::move(te));
    publish(rec);
    if (on_transition) on_transition(id, to);
  } catch (const Error& e) {
    std::string msg = e.what();
    try {
      transition(id, JobState::failed, [&](JobRecord& r) { r.error = msg; });
    } catch (const Error&) {
      // already terminal
    }
  }
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lk(queue_mu_);
      queue_cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      ++running_;
    }
    run_job(id);
    {
      std::lock_guard lk(queue_mu_);
      --running_;
    }
    queue_cv_.notify_all();
  }
}

bool Service::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lk(queue_mu_);
  return queue_cv_.wait_for(lk, timeout, [&] { return queue_.empty() && running_ == 0; });
}

std::shared_ptr<const JobRecord> Service::correct(const std::string& id, int revision,
                                                  const std::vector<Correction>& corrections,
                                                  const std::string& reviewer) {
  std::lock_guard lk(write_mu_);
  JobRecord rec = *get(id);
  if (revision > 0 && revision != rec.revision)
    throw Error(ErrorCode::Conflict, "stale revision " + std::to_string(revision) + ", current " +
                                         std::to_string(rec.revision));
  if (rec.state != JobState::needs_review || !rec.invoice)
    throw Error(ErrorCode::JobNotReviewable, "job is " + std::string(to_string(rec.state)));
  ExtractedInvoice inv = *rec.invoice;
  NormalizeOptions nopts{cfg_.pipeline.date_policy, cfg_.pipeline.default_currency};
  auto events = apply_corrections(inv, corrections, reviewer, cfg_.pipeline.review_threshold, nopts, rec.tokens,
                                  cfg_.scoring);
  std::optional<AuditEvent> te;
  if (inv.status == InvoiceStatus::corrected) {
    rec.transitions.push_back({rec.state, JobState::exported, utc_now_iso()});
    te = AuditEvent{};
    te->actor = reviewer.empty() ? "reviewer" : reviewer;
    te->action = "transition";
    te->subject = id;
    te->before = json{{"state", to_string(rec.state)}}.dump();
    te->after = json{{"state", "exported"}}.dump();
    rec.state = JobState::exported;
  }
  index_.record(rec.raw_hash, logical_hash(inv));
  rec.invoice = std::move(inv);
  ++rec.revision;
  store_.save(rec);
  index_.save(store_.dedup_path());
  for (auto& e : events) {
    e.subject = id;
    audit_.append(std::move(e));
  }
  if (te) audit_.append(std::move(*te));
  publish(rec);
  if (te && on_transition) on_transition(id, JobState::exported);
  return get(id);
}

ExportBlob Service::export_invoices(const std::string& format, const std::string& status) const {
  std::vector<std::shared_ptr<const JobRecord>> recs;
  {
    std::lock_guard lk(snap_mu_);
    for (const auto& [_, r] : jobs_) recs.push_back(r);
  }
  std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
    return a->created_at != b->created_at ? a->created_at < b->created_at : a->id < b->id;
  });
  if (!status.empty() && !status_from_string(status))
    throw Error(ErrorCode::InvalidArgument, "unknown status " + status);
  std::vector<ExtractedInvoice> invs;
  for (const auto& r : recs) {
    if (!counts_as_accepted(*r)) continue;
    if (!status.empty() && to_string(r->invoice->status) != status) continue;
    invs.push_back(*r->invoice);
  }
  std::string f = format.empty() ? "json" : format;
  if (f == "json") return {"application/json", to_json_array(invs)};
  if (f == "csv") return {"text/csv", to_csv(invs)};
  if (f == "xlsx") {
    Bytes b = to_xlsx_bytes(invs);
    return {"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet", std::string(b.begin(), b.end())};
  }
  throw Error(ErrorCode::InvalidArgument, "format must be csv, xlsx or json");
}

Bytes Service::page_png(const std::string& id, int page) const {
  auto rec = get(id);
  if (page < 0) throw Error(ErrorCode::NotFound, "page " + std::to_string(page));
  constexpr int kViewDpi = 100;
  auto doc = make_document(store_.get_raw(rec->raw_hash), rec->filename);
  try {
    auto pages = rasterize(doc, kViewDpi, deps_.raster);
    if (page >= static_cast<int>(pages.size())) throw Error(ErrorCode::NotFound, "page " + std::to_string(page));
    return encode_png(normalize_dpi(pages[page], kViewDpi));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RasterizerUnavailable) throw;
  }
  // No rasterizer for a text PDF: draw the recognized tokens in place.
  if (page >= std::max(rec->page_count, 1)) throw Error(ErrorCode::NotFound, "page " + std::to_string(page));
  double s = static_cast<double>(kViewDpi) / cfg_.pipeline.target_dpi;
  int w = static_cast<int>(8.5 * kViewDpi), h = 11 * kViewDpi;
  for (const auto& t : rec->tokens)
    if (t.page == page) {
      w = std::max(w, static_cast<int>(t.bbox.x1 * s) + 1);
      h = std::max(h, static_cast<int>(t.bbox.y1 * s) + 1);
    }
  PageImage img(w, h, kViewDpi);
  for (const auto& t : rec->tokens) {
    if (t.page != page || t.text.empty()) continue;
    double advance = t.bbox.width() * s / static_cast<double>(t.text.size());
    draw_text(img, static_cast<int>(t.bbox.x0 * s), static_cast<int>(t.bbox.y0 * s), 1, t.text, advance);
  }
  return encode_png(img);
}

}  // namespace invx
