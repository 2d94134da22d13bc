// SPDX-License-Identifier: Apache-2.0

#include "csiloc/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "csiloc/errors.hpp"

namespace csiloc {

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text, const std::string& key, const std::string& source)
{
    text = trim(text);
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError(source + ": key '" + key + "' has invalid numeric value '" + std::string(text) + "'");
    }
    return value;
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view source)
{
    KeyValueConfig cfg;
    cfg.source_ = std::string(source);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_number<double>(it->second, key, source_);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_number<long long>(it->second, key, source_);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_number<std::uint64_t>(it->second, key, source_);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError(source_ + ": key '" + key + "' has invalid boolean value '" + v + "'");
}

Point2 KeyValueConfig::get_point(const std::string& key, Point2 fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    const std::string_view v = it->second;
    const auto comma = v.find(',');
    if (comma == std::string_view::npos) {
        throw ConfigError(source_ + ": key '" + key + "' expects 'x, y'");
    }
    return {parse_number<double>(v.substr(0, comma), key, source_),
            parse_number<double>(v.substr(comma + 1), key, source_)};
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const
{
    for (const auto& [key, value] : values_) {
        if (!known.contains(key)) {
            throw ConfigError(source_ + ": unknown key '" + key + "'");
        }
    }
}

std::string KeyValueConfig::to_text() const
{
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

} // namespace csiloc
