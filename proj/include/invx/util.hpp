#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace invx {

using Bytes = std::vector<std::uint8_t>;

std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

Bytes read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
/// Lower-cases and collapses runs of whitespace to one space, trimmed.
std::string collapse_ws_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// UTC ISO-8601 with millisecond precision, e.g. 2026-01-02T03:04:05.678Z.
std::string utc_now_iso();

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

/// Random RFC-4122 version-4 UUID.
std::string make_uuid();

}  // namespace invx
