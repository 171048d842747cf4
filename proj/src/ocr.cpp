#include "invx/ocr.hpp"

#include <chrono>
#include <cstdlib>
#include <random>
#include <sstream>

#include <json.hpp>

#include "invx/error.hpp"

namespace invx {

using nlohmann::json;

const OcrAttempt* OcrTrace::accepted() const {
  for (const auto& a : attempts)
    if (a.accepted) return &a;
  return nullptr;
}

void EngineRegistry::add(std::shared_ptr<OcrEngine> engine) {
  std::string id = engine->id();
  engines_[id] = std::move(engine);
  if (primary_.empty()) {
    primary_ = id;
  } else if (secondary_.empty() && id != primary_) {
    secondary_ = id;
  }
}

void EngineRegistry::set_order(std::string primary, std::string secondary) {
  primary_ = std::move(primary);
  secondary_ = std::move(secondary);
}

std::shared_ptr<OcrEngine> EngineRegistry::find(const std::string& id) const {
  auto it = engines_.find(id);
  return it == engines_.end() ? nullptr : it->second;
}

double mean_confidence(const std::vector<Token>& tokens) {
  if (tokens.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.confidence;
  return sum / static_cast<double>(tokens.size());
}

CascadePlan select_plan(const RawDocument& doc, const std::vector<std::vector<Token>>& embedded,
                        const QualityReport& quality, double escalation_threshold,
                        const EngineRegistry& engines) {
  (void)doc;
  std::size_t chars = 0;
  for (const auto& page : embedded)
    for (const auto& t : page) chars += t.text.size();
  std::size_t pages = std::max<std::size_t>(embedded.size(), 1);
  if (!embedded.empty() && chars >= kEmbeddedCharsPerPage * pages) return CascadePlan{{{kEmbeddedSource, 0.0}}};

  std::vector<std::string> order;
  if (!engines.primary().empty() && engines.find(engines.primary())) order.push_back(engines.primary());
  if (!engines.secondary().empty() && engines.find(engines.secondary())) order.push_back(engines.secondary());
  if (order.empty()) throw Error(ErrorCode::NoEngineConfigured, "image path needs at least one OCR engine");
  if (order.size() == 2 && quality.score < 0.4) std::swap(order[0], order[1]);
  CascadePlan plan;
  for (std::size_t i = 0; i < order.size(); ++i)
    plan.steps.push_back({order[i], i + 1 == order.size() ? 0.0 : escalation_threshold});
  return plan;
}

CascadeResult run_cascade(const CascadePlan& plan, const std::vector<PageImage>& pages,
                          const std::vector<std::vector<Token>>& embedded, const EngineRegistry& engines) {
  if (plan.steps.empty()) throw Error(ErrorCode::InvalidArgument, "empty cascade plan");
  for (const auto& step : plan.steps)
    if (step.source != kEmbeddedSource && !engines.find(step.source))
      throw Error(ErrorCode::NoEngineConfigured, "engine '" + step.source + "' is not registered");

  CascadeResult result;
  std::vector<std::vector<Token>> outputs;
  std::optional<std::size_t> accepted;
  for (const auto& step : plan.steps) {
    OcrAttempt attempt;
    attempt.source = step.source;
    auto start = std::chrono::steady_clock::now();
    std::vector<Token> tokens;
    try {
      if (step.source == kEmbeddedSource) {
        for (const auto& page : embedded) tokens.insert(tokens.end(), page.begin(), page.end());
      } else {
        auto engine = engines.find(step.source);
        for (const auto& img : pages) {
          auto page_tokens = engine->recognize(img);
          for (auto& t : page_tokens) {
            t.page = img.page;
            t.source = "ocr:" + engine->id();
            if (!t.bbox.valid() || t.confidence < 0.0 || t.confidence > 1.0)
              throw Error(ErrorCode::EngineError, "engine returned an invalid token");
          }
          sort_reading_order(page_tokens);
          tokens.insert(tokens.end(), page_tokens.begin(), page_tokens.end());
        }
        for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].id = static_cast<int>(i);
      }
      attempt.token_count = tokens.size();
      attempt.mean_confidence = step.source == kEmbeddedSource && !tokens.empty() ? 1.0 : mean_confidence(tokens);
    } catch (const std::exception& e) {
      attempt.error = e.what();
    }
    attempt.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    bool ok = attempt.error.empty();
    result.trace.attempts.push_back(attempt);
    outputs.push_back(ok ? std::move(tokens) : std::vector<Token>{});
    if (ok && attempt.mean_confidence >= step.gate) {
      accepted = result.trace.attempts.size() - 1;
      break;
    }
  }
  if (!accepted) {
    double best = -1.0;
    for (std::size_t i = 0; i < result.trace.attempts.size(); ++i) {
      const auto& a = result.trace.attempts[i];
      if (a.error.empty() && a.mean_confidence > best) {
        best = a.mean_confidence;
        accepted = i;
      }
    }
  }
  if (!accepted) {
    std::string detail;
    for (const auto& a : result.trace.attempts) detail += " [" + a.source + ": " + a.error + "]";
    throw Error(ErrorCode::AllEnginesFailed, "every cascade step failed:" + detail);
  }
  result.trace.attempts[*accepted].accepted = true;
  result.tokens = std::move(outputs[*accepted]);
  return result;
}

std::vector<Token> load_sidecar_tokens(const std::filesystem::path& sidecar_dir, const std::string& fixture_id,
                                       int page, int dpi) {
  if (fixture_id.empty()) throw Error(ErrorCode::EngineError, "image carries no fixture id");
  auto path = sidecar_dir / fixture_id / "truth.json";
  json truth;
  try {
    truth = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::EngineError, "bad sidecar " + path.string() + ": " + e.what());
  }
  double scale = static_cast<double>(dpi) / truth.value("dpi", 300);
  std::vector<Token> out;
  for (const auto& t : truth.at("tokens")) {
    if (t.value("page", 0) != page) continue;
    Token tok;
    tok.id = static_cast<int>(out.size());
    tok.text = t.at("text").get<std::string>();
    const auto& b = t.at("bbox");
    tok.bbox = BBox{b[0].get<double>() * scale, b[1].get<double>() * scale, b[2].get<double>() * scale,
                    b[3].get<double>() * scale};
    tok.page = page;
    tok.confidence = 1.0;
    out.push_back(std::move(tok));
  }
  return out;
}

MockPerfectEngine::MockPerfectEngine(std::filesystem::path sidecar_dir, std::string id)
    : dir_(std::move(sidecar_dir)), id_(std::move(id)) {}

std::vector<Token> MockPerfectEngine::recognize(const PageImage& img) {
  return load_sidecar_tokens(dir_, img.fixture_id, img.page, img.dpi);
}

MockNoisyEngine::MockNoisyEngine(std::filesystem::path sidecar_dir, double rate, std::uint64_t seed, std::string id)
    : dir_(std::move(sidecar_dir)), rate_(rate), seed_(seed), id_(std::move(id)) {
  if (rate < 0.0 || rate > 1.0) throw Error(ErrorCode::InvalidArgument, "corruption rate outside [0,1]");
}

std::vector<Token> MockNoisyEngine::recognize(const PageImage& img) {
  auto tokens = load_sidecar_tokens(dir_, img.fixture_id, img.page, img.dpi);
  // Seed from the fixture so every page corrupts identically run to run.
  std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ULL;
  for (char c : img.fixture_id) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001B3ULL;
  h ^= static_cast<std::uint64_t>(img.page);
  std::mt19937_64 rng(h);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> printable(33, 126);
  for (auto& t : tokens) {
    for (auto& ch : t.text) {
      if (coin(rng) < rate_) {
        char repl;
        do {
          repl = static_cast<char>(printable(rng));
        } while (repl == ch);
        ch = repl;
      }
    }
    t.confidence = 1.0 - rate_;
  }
  return tokens;
}

ExternalProcessEngine::ExternalProcessEngine(std::string command_template, std::string id)
    : template_(std::move(command_template)), id_(std::move(id)) {}

std::vector<Token> ExternalProcessEngine::recognize(const PageImage& img) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / ("invx-ocr-" + make_uuid());
  fs::create_directories(dir);
  fs::path input = dir / "input.png";
  fs::path output = dir / "output.tsv";
  Bytes png = encode_png(img);
  write_file_atomic(input, std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  std::string cmd = template_;
  auto replace = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = cmd.find(key)) != std::string::npos;) cmd.replace(pos, key.size(), value);
  };
  replace("{input.png}", input.string());
  replace("{output.tsv}", output.string());
  replace("{output_base}", (dir / "output").string());
  int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  std::string tsv;
  if (rc == 0 && fs::exists(output)) tsv = read_text_file(output);
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (rc != 0) throw Error(ErrorCode::EngineError, id_ + " exited with status " + std::to_string(rc));
  return parse_ocr_tsv(tsv, "ocr:" + id_);
}

std::vector<Token> parse_ocr_tsv(std::string_view tsv, const std::string& source) {
  std::vector<Token> out;
  bool tesseract_layout = false;
  bool first = true;
  for (const auto& raw_line : split(tsv, '\n')) {
    std::string line = raw_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (first) {
      first = false;
      if (!cols.empty() && (cols[0] == "level" || cols[0] == "page")) {
        tesseract_layout = cols[0] == "level";
        continue;
      }
      tesseract_layout = cols.size() >= 12;
    }
    Token t;
    t.source = source;
    try {
      if (tesseract_layout) {
        if (cols.size() < 12 || std::stoi(cols[0]) != 5) continue;
        double conf = std::stod(cols[10]);
        std::string text = trim(cols[11]);
        if (conf < 0 || text.empty()) continue;
        double left = std::stod(cols[6]), top = std::stod(cols[7]);
        t.bbox = BBox{left, top, left + std::stod(cols[8]), top + std::stod(cols[9])};
        t.page = std::stoi(cols[1]) - 1;
        t.confidence = std::clamp(conf / 100.0, 0.0, 1.0);
        t.text = text;
      } else {
        if (cols.size() < 7) continue;
        t.page = std::stoi(cols[0]);
        t.bbox = BBox{std::stod(cols[1]), std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
        t.confidence = std::clamp(std::stod(cols[5]) / 100.0, 0.0, 1.0);
        t.text = trim(cols[6]);
        if (t.text.empty()) continue;
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::EngineError, "malformed OCR TSV row: " + line);
    }
    if (!t.bbox.valid()) continue;
    t.id = static_cast<int>(out.size());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace invx
