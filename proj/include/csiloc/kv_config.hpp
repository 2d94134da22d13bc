// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "csiloc/geometry.hpp"

namespace csiloc {

/// Plain-text `key = value` configuration. Blank lines and `#` comments are ignored.
/// Later assignments override earlier ones, which is how CLI overrides are layered on files.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text, std::string_view source = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool contains(const std::string& key) const { return values_.contains(key); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Parses "x, y".
    Point2 get_point(const std::string& key, Point2 fallback) const;

    /// Throws ConfigError naming the first key not in `known`.
    void reject_unknown(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    const std::string& source() const { return source_; }

    /// Canonical text form (sorted keys), parseable by `parse`.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
    std::string source_;
};

} // namespace csiloc
