#include "antidote/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "antidote/error.hpp"
#include "antidote/text.hpp"

namespace antidote::jsonl {

namespace fs = std::filesystem;

std::vector<json> read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write(const fs::path& path, const std::vector<json>& records) {
    std::string content;
    for (const auto& r : records) {
        content += r.dump();
        content += '\n';
    }
    write_text(path, content);
}

json read_document(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_document(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace antidote::jsonl
