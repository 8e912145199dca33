#pragma once

// Flat key=value configuration with [section] headers; keys are addressed as
// "section.key". '#' starts a comment. Every run writes its resolved config
// next to its checkpoint.

#include <map>
#include <string>

namespace pitsep {

class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::string require_str(const std::string& key) const;
    long get_long(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;

    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace pitsep
