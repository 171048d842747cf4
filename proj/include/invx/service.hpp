#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "invx/config.hpp"
#include "invx/pipeline.hpp"

namespace invx {

enum class JobState { received, preprocessed, extracted, validated, needs_review, exported, failed, rejected_duplicate };

std::string_view to_string(JobState s) noexcept;
std::optional<JobState> job_state_from_string(std::string_view s) noexcept;
bool is_terminal(JobState s) noexcept;
/// The declared edges, plus any -> failed and needs_review -> exported once a
/// correction clears review.
bool is_legal_transition(JobState from, JobState to) noexcept;

struct Transition {
  JobState from;
  JobState to;
  std::string at;
};

struct JobRecord {
  std::string id;
  std::string filename;
  std::string raw_hash;
  JobState state = JobState::received;
  int revision = 1;
  std::string created_at;
  std::vector<Transition> transitions;
  std::optional<std::string> error;
  std::optional<ExtractedInvoice> invoice;
  std::vector<Token> tokens;
  std::vector<StageTiming> timings;
  int page_count = 0;
};

std::string job_to_json(const JobRecord& job);
JobRecord job_from_json(std::string_view text);

/// Replays the transition log from `received`; false on any illegal edge or
/// a log that does not end in the record's state.
bool replay_is_legal(const JobRecord& job);

/// File-backed store: raw/<sha256>, jobs/<id>.json, audit.log, dedup.idx and
/// vendors.tsv, all replaced by atomic rename.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path root);
  const std::filesystem::path& root() const { return root_; }
  void put_raw(const std::string& sha, std::span<const std::uint8_t> bytes);
  Bytes get_raw(const std::string& sha) const;
  void save(const JobRecord& job);
  JobRecord load(const std::string& id) const;
  std::vector<JobRecord> load_all() const;
  std::filesystem::path audit_path() const { return root_ / "audit.log"; }
  std::filesystem::path dedup_path() const { return root_ / "dedup.idx"; }
  std::filesystem::path vendors_path() const { return root_ / "vendors.tsv"; }

 private:
  std::filesystem::path root_;
};

struct ExportBlob {
  std::string content_type;
  std::string body;
};

/// Job queue, workers and the review workflow over a JobStore. Store
/// mutations go through one writer lock; readers get immutable snapshots.
class Service {
 public:
  Service(AppConfig cfg, std::filesystem::path store, std::unique_ptr<LlmClient> llm);
  ~Service();

  /// Loads the store and re-enqueues every non-terminal job, then starts the
  /// workers.
  void start();
  /// Finishes in-flight jobs; queued jobs stay on disk for the next start.
  void stop();

  /// Persists the upload and its job record before returning the job id.
  std::string submit(const std::string& filename, Bytes bytes);
  std::shared_ptr<const JobRecord> get(const std::string& id) const;
  std::vector<AuditEvent> audit(const std::string& id) const;
  /// needs_review jobs, ascending overall confidence.
  std::vector<std::shared_ptr<const JobRecord>> review_queue(std::size_t limit) const;
  /// Throws Conflict when `revision` is stale.
  std::shared_ptr<const JobRecord> correct(const std::string& id, int revision,
                                           const std::vector<Correction>& corrections, const std::string& reviewer);
  /// format csv, xlsx or json; status filters on the invoice status.
  ExportBlob export_invoices(const std::string& format, const std::string& status) const;
  Bytes page_png(const std::string& id, int page) const;
  /// Blocks until the queue is empty and no job is running.
  bool wait_idle(std::chrono::milliseconds timeout) const;

  const AppConfig& config() const { return cfg_; }

  /// Test hook: called with (job id, state) after each persisted transition.
  std::function<void(const std::string&, JobState)> on_transition;

 private:
  void worker_loop();
  void run_job(const std::string& id);
  void transition(const std::string& id, JobState to, const std::function<void(JobRecord&)>& mutate = {});
  void publish(JobRecord rec);

  AppConfig cfg_;
  JobStore store_;
  std::unique_ptr<LlmClient> llm_;
  std::shared_ptr<EngineRegistry> engines_;
  PipelineDeps deps_;
  AuditLog audit_;

  std::mutex write_mu_;  // single writer for records, index, history
  DedupIndex index_;
  VendorHistory history_;

  mutable std::mutex snap_mu_;
  std::map<std::string, std::shared_ptr<const JobRecord>> jobs_;

  mutable std::mutex queue_mu_;
  mutable std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  int running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

/// HTTP front end over a Service.
class RestServer {
 public:
  explicit RestServer(Service& service, std::string ui_dir = {});
  ~RestServer();
  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// `serve` subcommand: runs until SIGINT or SIGTERM. Returns the exit code.
int run_service(const AppConfig& cfg, const std::filesystem::path& store, int port, std::unique_ptr<LlmClient> llm);

}  // namespace invx
