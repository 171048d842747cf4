#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "invx/llm.hpp"
#include "invx/ocr.hpp"
#include "invx/pipeline.hpp"

namespace invx {

struct EngineSpec {
  std::string type;  // mock-perfect, mock-noisy or external
  std::string id;    // defaults to the type
  std::string dir;   // sidecar directory for the mock engines
  double rate = 0.0;
  std::uint64_t seed = 1;
  std::string command;
};

struct AppConfig {
  PipelineConfig pipeline;
  LiveLlmConfig llm;
  std::vector<EngineSpec> ocr_engines;  // first is primary, second secondary
  std::string rasterizer_cmd;
  std::string lexicon_file;
  PreprocessOptions preprocess;
  ScoringConstants scoring;
  int workers = 4;
  std::string auth_token;  // bearer token for the service; empty disables the check
};

/// JSON object; unknown keys and out-of-range values throw InvalidArgument.
AppConfig parse_config(std::string_view json_text);
AppConfig load_config(const std::filesystem::path& path);

std::shared_ptr<EngineRegistry> make_engines(const std::vector<EngineSpec>& specs);

/// Deps wired from the config. `llm` and `engines` must outlive the result.
PipelineDeps make_deps(const AppConfig& cfg, LlmClient* llm, const EngineRegistry* engines);

}  // namespace invx
