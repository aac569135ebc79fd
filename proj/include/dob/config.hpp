#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dob/errors.hpp"

namespace dob {

// Flat key=value config files; '#' starts a comment.
class Config {
  public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParamError("cannot open config file: " + path);
        return from_stream(in);
    }

    static Config from_stream(std::istream& in) {
        Config c;
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (!key.empty()) c.values_[key] = val;
        }
        return c;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& dflt = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    int64_t get_i64(const std::string& key, int64_t dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : std::stoll(it->second);
    }

    uint64_t get_u64(const std::string& key, uint64_t dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : std::stoull(it->second);
    }

    double get_f64(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : std::stod(it->second);
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        return it->second == "1" || it->second == "true" || it->second == "yes";
    }

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace dob
