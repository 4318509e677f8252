#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfsr/pipeline.hpp"

namespace mfsr {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Flat `key = value` settings. '#' starts a comment; blank lines are
/// skipped; later assignments override earlier ones.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<config>") {
        Config cfg;
        std::string line;
        int number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value', got '" +
                                  body + "'");
            }
            const std::string key = trim(body.substr(0, eq));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
            cfg.values_[key] = trim(body.substr(eq + 1));
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get(const std::string& key, double fallback) const {
        return has(key) ? to_number<double>(key) : fallback;
    }

    int get(const std::string& key, int fallback) const {
        return has(key) ? to_number<int>(key) : fallback;
    }

    bool get(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        std::string v = values_.at(key);
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        throw ConfigError("config key '" + key + "': expected a boolean, got '" + values_.at(key) + "'");
    }

    /// Comma or whitespace separated list.
    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        std::string v = get(key, std::string{});
        std::replace(v.begin(), v.end(), ',', ' ');
        std::istringstream is(v);
        for (std::string tok; is >> tok;) out.push_back(tok);
        return out;
    }

    /// Throws on the first key outside `known`.
    void require_known(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_) {
            if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
        }
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    template <class T>
    T to_number(const std::string& key) const {
        const std::string& v = values_.at(key);
        T out{};
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
        }
        return out;
    }

    std::map<std::string, std::string> values_;
};

inline const std::set<std::string>& sr_config_keys() {
    static const std::set<std::string> keys{
        "scale",         "hr_patch_side", "lr_overlap",     "overlap_units",  "eta",
        "intensity_scale", "delta",       "bp_c",           "bp_nu",          "bp_iterations",
        "bp_tolerance",  "blur_side",     "blur_sigma",     "search_radius",  "match_margin",
        "mean_removed_matching", "threads"};
    return keys;
}

/// Overwrites the fields of `cfg` named in `c`; others keep their value.
inline void apply_config(const Config& c, SRConfig& cfg) {
    cfg.scale = c.get("scale", cfg.scale);
    cfg.hr_patch_side = c.get("hr_patch_side", cfg.hr_patch_side);
    cfg.lr_overlap = c.get("lr_overlap", cfg.lr_overlap);
    if (c.has("overlap_units")) {
        const std::string u = c.get("overlap_units", std::string{});
        if (u != "lr" && u != "hr") throw ConfigError("overlap_units must be 'lr' or 'hr', got '" + u + "'");
        cfg.overlap_in_hr_pixels = u == "hr";
    }
    cfg.eta = c.get("eta", cfg.eta);
    cfg.intensity_scale = c.get("intensity_scale", cfg.intensity_scale);
    cfg.delta = c.get("delta", cfg.delta);
    cfg.bp_c = c.get("bp_c", cfg.bp_c);
    cfg.bp_nu = c.get("bp_nu", cfg.bp_nu);
    cfg.bp_iterations = c.get("bp_iterations", cfg.bp_iterations);
    cfg.bp_tolerance = c.get("bp_tolerance", cfg.bp_tolerance);
    cfg.blur_side = c.get("blur_side", cfg.blur_side);
    cfg.blur_sigma = c.get("blur_sigma", cfg.blur_sigma);
    cfg.search_radius = c.get("search_radius", cfg.search_radius);
    cfg.match_margin = c.get("match_margin", cfg.match_margin);
    cfg.mean_removed_matching = c.get("mean_removed_matching", cfg.mean_removed_matching);
    cfg.threads = c.get("threads", cfg.threads);
}

}  // namespace mfsr
