#pragma once
// JSON access helpers. All file formats in this project are line-delimited
// or single JSON documents written through nlohmann::json with sorted keys,
// which makes save -> load -> save byte-identical.

#include <string>

#include "json.hpp"

#include "agentmon/errors.hpp"

namespace agentmon {

using json = nlohmann::json;

inline json parse_json_line(const std::string& line, int line_no) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON record: ") + e.what(), line_no);
    }
}

inline const json& require_field(const json& j, const char* key, const char* ctx) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw SchemaViolation(std::string(ctx) + ": missing required field '" + key + "'");
    }
    return *it;
}

template <typename T>
T require_as(const json& j, const char* key, const char* ctx) {
    const json& f = require_field(j, key, ctx);
    try {
        return f.get<T>();
    } catch (const json::exception&) {
        throw SchemaViolation(std::string(ctx) + ": field '" + key + "' has wrong type");
    }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        return fallback;
    }
}

}  // namespace agentmon
