#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "invx/eval.hpp"
#include "invx/util.hpp"

namespace invx::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "invx") {
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + make_uuid());
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Small shared corpus, generated once per test binary.
inline const std::filesystem::path& shared_corpus() {
  static TempDir dir("invx-corpus");
  static bool made = [] {
    CorpusOptions o;
    o.n = 12;
    o.images = false;
    o.llm_error_rate = 0;
    o.llm_refusal_rate = 0;
    gen_corpus(dir.path(), o);
    return true;
  }();
  (void)made;
  return dir.path();
}

inline Bytes as_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

}  // namespace invx::test
