/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pat {

/// `key = value` text config: one pair per line, '#' comments, blank lines
/// ignored. Values keep internal whitespace; keys are unique.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

    /// Keys present in the file but not in `known` (typo detection).
    std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    const std::string& text() const { return text_; }

private:
    std::map<std::string, std::string> values_;
    std::string text_;
};

/// Stable 64-bit FNV-1a content hash, hex-encoded (manifest provenance).
std::string config_hash(const std::string& text);

} // namespace pat
