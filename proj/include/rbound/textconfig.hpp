#pragma once

// Structured-text config dialect shared by template files, demo pools,
// fitted-model files and experiment configs.
//
//   # comment
//   [kind name]
//   key = value
//   key = another value     # repeated keys are kept in order
//
// Values are raw text up to end of line; leading/trailing whitespace is
// trimmed. '#' starts a comment only at the beginning of a line, so values
// may contain '#'.

#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rbound {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigSection {
    std::string kind;
    std::string name;
    int line = 0; // 1-based line of the section header
    std::vector<std::pair<std::string, std::string>> entries;

    bool has(const std::string& key) const {
        for (const auto& e : entries)
            if (e.first == key) return true;
        return false;
    }
    const std::string& get(const std::string& key) const {
        for (const auto& e : entries)
            if (e.first == key) return e.second;
        throw ConfigError("section [" + kind + " " + name + "]: missing key '" + key + "'");
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        for (const auto& e : entries)
            if (e.first == key) return e.second;
        return fallback;
    }
    std::vector<std::string> get_all(const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (e.first == key) out.push_back(e.second);
        return out;
    }
};

namespace detail {
inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
} // namespace detail

inline std::vector<ConfigSection> parse_config(std::istream& in) {
    std::vector<ConfigSection> sections;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            std::string inner = detail::trim(t.substr(1, t.size() - 2));
            std::size_t sp = inner.find_first_of(" \t");
            ConfigSection sec;
            sec.line = lineno;
            if (sp == std::string::npos) {
                sec.kind = inner;
            } else {
                sec.kind = inner.substr(0, sp);
                sec.name = detail::trim(inner.substr(sp + 1));
            }
            if (sec.kind.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty section kind");
            sections.push_back(std::move(sec));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        if (sections.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": entry before any section header");
        std::string key = detail::trim(t.substr(0, eq));
        std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        sections.back().entries.emplace_back(std::move(key), std::move(value));
    }
    return sections;
}

inline std::vector<ConfigSection> parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline std::vector<ConfigSection> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

inline std::string serialize_config(const std::vector<ConfigSection>& sections) {
    std::ostringstream out;
    bool first = true;
    for (const auto& sec : sections) {
        if (!first) out << "\n";
        first = false;
        out << "[" << sec.kind;
        if (!sec.name.empty()) out << " " << sec.name;
        out << "]\n";
        for (const auto& e : sec.entries) out << e.first << " = " << e.second << "\n";
    }
    return out.str();
}

} // namespace rbound
