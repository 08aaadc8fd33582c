#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace depthwise {

std::string read_text_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place. Creates parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& content);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// One JSON value per non-blank line.
std::vector<nlohmann::json> read_jsonl_file(const std::filesystem::path& path);
void write_jsonl_file(const std::filesystem::path& path, const std::vector<nlohmann::ordered_json>& records);

/// Fixed-point rendering with `decimals` places; negative zero prints as zero.
std::string format_fixed(double value, int decimals);

/// UTC timestamp, ISO-8601 with seconds.
std::string utc_timestamp();

}  // namespace depthwise
