#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ota {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Flat key-value text with [section] headers; keys are addressed as
// "section.key". '#' starts a comment. Later assignments win, so --override
// is a plain set().
class Config {
public:
    Config() = default;
    static Config parse_text(const std::string& text);
    static Config parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::string require_str(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<long long> get_int_list(const std::string& key,
                                        const std::vector<long long>& fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    // Canonical serialization (sorted keys) and its FNV-1a hash; embedded in
    // output headers so artifacts are traceable to their exact config.
    std::string canonical() const;
    std::string hash() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

} // namespace ota
