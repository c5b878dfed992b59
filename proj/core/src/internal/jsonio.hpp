/*
 * Copyright 2026 The sdfmap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SDFMAP_INTERNAL_JSONIO_HPP
#define SDFMAP_INTERNAL_JSONIO_HPP

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sdfmap/errors.hpp"

namespace sdfmap::internal {

using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << text;
}

// nlohmann reports byte offsets; tests and users want line/column.
inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline ordered_json parse_json(const std::string& text, const std::string& what) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw SyntaxError(what + ": " + e.what(), line, col);
    }
}

template <typename T>
T get_field(const ordered_json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key))
        throw SemanticError(ctx + ": missing field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SemanticError(ctx + ": bad field \"" + key + "\": " + e.what());
    }
}

template <typename T>
T get_field_or(const ordered_json& j, const std::string& key, const T& fallback,
               const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SemanticError(ctx + ": bad field \"" + key + "\": " + e.what());
    }
}

}  // namespace sdfmap::internal

#endif
