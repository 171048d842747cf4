#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "invx/model.hpp"

namespace invx {

inline constexpr const char* kExtractionInstruction = "Extract structured data from the text as JSON.";

struct PromptSchema {
  std::vector<CanonicalField> fields;
  bool line_items = true;

  static PromptSchema full();
};

/// Fields, key schema, null/JSON-only instruction, then the text between
/// BEGIN/END markers. Text beyond max_chars is cut with a notice.
std::string build_prompt(std::string_view text, const PromptSchema& schema, std::size_t max_chars = 100'000);

struct LlmAttempt {
  int number = 0;
  std::string outcome;  // "ok", "timeout", "http 503", ...
  double elapsed_ms = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string mode() const = 0;
  /// Raw completion text. `trail`, when given, receives one entry per attempt.
  virtual std::string complete(const std::string& prompt, const std::string& auth,
                               std::vector<LlmAttempt>* trail = nullptr) = 0;
};

struct LiveLlmConfig {
  std::string url;  // http(s)://host[:port]/path
  std::string model = "default";
  std::chrono::milliseconds timeout{30'000};
  int max_attempts = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(1000), std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(4000)};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

class LiveLlmClient : public LlmClient {
 public:
  explicit LiveLlmClient(LiveLlmConfig cfg);
  std::string mode() const override { return "live"; }
  std::string complete(const std::string& prompt, const std::string& auth,
                       std::vector<LlmAttempt>* trail = nullptr) override;

 private:
  LiveLlmConfig cfg_;
  std::counting_semaphore<64> in_flight_{4};
};

class ReplayLlmClient : public LlmClient {
 public:
  explicit ReplayLlmClient(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string mode() const override { return "replay"; }
  std::string complete(const std::string& prompt, const std::string& auth,
                       std::vector<LlmAttempt>* trail = nullptr) override;
  static std::string fixture_name(const std::string& prompt);

 private:
  std::filesystem::path dir_;
};

class RefusalLlmClient : public LlmClient {
 public:
  std::string mode() const override { return "refusal-stub"; }
  std::string complete(const std::string& prompt, const std::string& auth,
                       std::vector<LlmAttempt>* trail = nullptr) override;
};

/// "live" or "replay:<dir>" or "refusal".
std::unique_ptr<LlmClient> make_llm_client(std::string_view mode, const LiveLlmConfig& live = {});

/// Strict parse first; otherwise fence strip, first balanced object, trailing
/// commas, single quotes, each only while the text still fails. Throws Unrepairable.
std::string repair_json(std::string_view raw);
bool is_strict_json(std::string_view text) noexcept;

struct RawLineItem {
  std::string description, quantity, unit_price, amount;
  friend bool operator==(const RawLineItem&, const RawLineItem&) = default;
};

struct PartialInvoice {
  std::map<CanonicalField, std::string> fields;
  std::vector<RawLineItem> line_items;
  std::vector<std::string> unparsed_keys;
};

/// Response key (any case, any separators) to canonical field.
std::optional<CanonicalField> field_from_synonym(std::string_view key);

/// Throws NotAnObject for a non-object top level, Unrepairable for non-JSON.
PartialInvoice parse_extraction(std::string_view json_text);

}  // namespace invx
