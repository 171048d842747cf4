#include "invx/config.hpp"

#include <json.hpp>
#include <set>

#include "invx/error.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, "config: " + msg); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) bad("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(std::string("wrong type for '") + key + "'");
  }
}

}  // namespace

AppConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    bad(e.what());
  }
  check_keys(j,
             {"review_threshold", "ocr_escalation_threshold", "target_dpi", "date_policy", "default_currency",
              "llm_max_chars", "llm", "ocr_engines", "rasterizer_cmd", "lexicon_file", "preprocess", "scoring",
              "workers", "auth_token"},
             "config");
  AppConfig c;
  auto& p = c.pipeline;
  read(j, "review_threshold", p.review_threshold);
  read(j, "ocr_escalation_threshold", p.ocr_escalation_threshold);
  read(j, "target_dpi", p.target_dpi);
  read(j, "default_currency", p.default_currency);
  read(j, "llm_max_chars", p.llm_max_chars);
  std::string policy = "day_first";
  read(j, "date_policy", policy);
  if (policy == "day_first") p.date_policy = DatePolicy::day_first;
  else if (policy == "month_first") p.date_policy = DatePolicy::month_first;
  else bad("date_policy must be day_first or month_first");
  p.validate();
  c.preprocess.target_dpi = p.target_dpi;

  if (j.contains("llm")) {
    const auto& l = j["llm"];
    check_keys(l, {"url", "model", "timeout_ms", "max_attempts"}, "llm");
    read(l, "url", c.llm.url);
    read(l, "model", c.llm.model);
    long long timeout = c.llm.timeout.count();
    read(l, "timeout_ms", timeout);
    if (timeout <= 0) bad("llm.timeout_ms must be positive");
    c.llm.timeout = std::chrono::milliseconds(timeout);
    read(l, "max_attempts", c.llm.max_attempts);
    if (c.llm.max_attempts < 1) bad("llm.max_attempts must be at least 1");
  }

  if (j.contains("ocr_engines")) {
    if (!j["ocr_engines"].is_array()) bad("ocr_engines must be an array");
    for (const auto& e : j["ocr_engines"]) {
      check_keys(e, {"type", "id", "dir", "rate", "seed", "command"}, "ocr_engines entry");
      EngineSpec s;
      read(e, "type", s.type);
      read(e, "id", s.id);
      read(e, "dir", s.dir);
      read(e, "rate", s.rate);
      read(e, "seed", s.seed);
      read(e, "command", s.command);
      if (s.id.empty()) s.id = s.type;
      if (s.type == "mock-perfect" || s.type == "mock-noisy") {
        if (s.dir.empty()) bad(s.type + " needs 'dir'");
        if (s.rate < 0 || s.rate > 1) bad("rate must lie in [0,1]");
      } else if (s.type == "external") {
        if (s.command.empty()) bad("external engine needs 'command'");
      } else {
        bad("unknown engine type '" + s.type + "'");
      }
      c.ocr_engines.push_back(std::move(s));
    }
  }
  read(j, "rasterizer_cmd", c.rasterizer_cmd);
  read(j, "lexicon_file", c.lexicon_file);
  read(j, "workers", c.workers);
  if (c.workers < 1 || c.workers > 64) bad("workers must lie in [1,64]");
  read(j, "auth_token", c.auth_token);

  if (j.contains("preprocess")) {
    const auto& q = j["preprocess"];
    check_keys(q, {"sharpness_gate", "noise_gate", "skew_gate_deg", "contrast_gate", "w_sharpness", "w_contrast",
                   "w_skew"},
               "preprocess");
    read(q, "sharpness_gate", c.preprocess.sharpness_gate);
    read(q, "noise_gate", c.preprocess.noise_gate);
    read(q, "skew_gate_deg", c.preprocess.skew_gate_deg);
    read(q, "contrast_gate", c.preprocess.contrast_gate);
    read(q, "w_sharpness", c.preprocess.w_sharpness);
    read(q, "w_contrast", c.preprocess.w_contrast);
    read(q, "w_skew", c.preprocess.w_skew);
  }
  if (j.contains("scoring")) {
    const auto& s = j["scoring"];
    check_keys(s, {"embedded", "llm_ungrounded", "regex", "layout", "agreement_factor", "conflict_factor",
                   "arithmetic_floor", "arithmetic_failure_factor"},
               "scoring");
    auto& k = c.scoring;
    read(s, "embedded", k.embedded);
    read(s, "llm_ungrounded", k.llm_ungrounded);
    read(s, "regex", k.regex);
    read(s, "layout", k.layout);
    read(s, "agreement_factor", k.agreement_factor);
    read(s, "conflict_factor", k.conflict_factor);
    read(s, "arithmetic_floor", k.arithmetic_floor);
    read(s, "arithmetic_failure_factor", k.arithmetic_failure_factor);
    for (double v : {k.embedded, k.llm_ungrounded, k.regex, k.layout, k.agreement_factor, k.conflict_factor,
                     k.arithmetic_floor, k.arithmetic_failure_factor})
      if (v < 0 || v > 1) bad("scoring constants must lie in [0,1]");
  }
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    bad("cannot read " + path.string());
  }
  return parse_config(text);
}

std::shared_ptr<EngineRegistry> make_engines(const std::vector<EngineSpec>& specs) {
  auto reg = std::make_shared<EngineRegistry>();
  std::vector<std::string> ids;
  for (const auto& s : specs) {
    if (s.type == "mock-perfect") reg->add(std::make_shared<MockPerfectEngine>(s.dir, s.id));
    else if (s.type == "mock-noisy") reg->add(std::make_shared<MockNoisyEngine>(s.dir, s.rate, s.seed, s.id));
    else reg->add(std::make_shared<ExternalProcessEngine>(s.command, s.id));
    ids.push_back(s.id);
  }
  if (!ids.empty()) reg->set_order(ids[0], ids.size() > 1 ? ids[1] : std::string());
  return reg;
}

PipelineDeps make_deps(const AppConfig& cfg, LlmClient* llm, const EngineRegistry* engines) {
  PipelineDeps d;
  d.llm = llm;
  d.engines = engines;
  if (!cfg.lexicon_file.empty()) d.lexicon.load_file(cfg.lexicon_file);
  d.raster.rasterizer_cmd = cfg.rasterizer_cmd;
  d.preprocess = cfg.preprocess;
  d.scoring = cfg.scoring;
  return d;
}

}  // namespace invx
