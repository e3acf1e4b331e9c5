#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace antidote {

using json = nlohmann::json;

namespace jsonl {

// One JSON object per line; blank lines are skipped. Throws ParseError with the
// line number on malformed input.
std::vector<json> read(const std::filesystem::path& path);

// Writes through a temporary file and renames, so readers never see a
// half-written file. Keys are emitted sorted (nlohmann default).
void write(const std::filesystem::path& path, const std::vector<json>& records);

json read_document(const std::filesystem::path& path);
void write_document(const std::filesystem::path& path, const json& doc);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace jsonl
}  // namespace antidote
