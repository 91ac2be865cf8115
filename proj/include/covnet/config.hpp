#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

// Flat key-value config files:
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key"; keys before any section header have
// no prefix. Unknown keys are the caller's problem (rejected at apply time).

namespace covnet {

using KvConfig = std::map<std::string, std::string>;

namespace detail {
inline std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace detail

inline KvConfig parse_kv_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file: " + path);
    KvConfig out;
    std::string line, section;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = detail::strip(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": unterminated section header");
            section = detail::strip(s.substr(1, s.size() - 2));
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::strip(s.substr(0, eq));
        std::string val = detail::strip(s.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": empty key");
        out[section.empty() ? key : section + "." + key] = val;
    }
    return out;
}

inline double kv_double(const KvConfig& c, const std::string& key, double fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    if (it->second == "inf") return std::numeric_limits<double>::infinity();
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0')
        throw std::invalid_argument("config key " + key + ": bad number '" + it->second + "'");
    return v;
}

inline std::int64_t kv_int(const KvConfig& c, const std::string& key, std::int64_t fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": bad integer '" + it->second + "'");
    }
}

inline bool kv_bool(const KvConfig& c, const std::string& key, bool fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw std::invalid_argument("config key " + key + ": bad boolean '" + it->second + "'");
}

inline std::string kv_str(const KvConfig& c, const std::string& key, const std::string& fallback) {
    auto it = c.find(key);
    return it == c.end() ? fallback : it->second;
}

}  // namespace covnet
