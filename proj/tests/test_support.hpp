// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "csiloc/csi_data.hpp"
#include "csiloc/rng.hpp"

namespace csiloc::testkit {

inline CsiSymbol random_symbol(Rng& rng, std::size_t rows = 3, std::size_t cols = 30)
{
    CsiSymbol s;
    s.entries = ComplexGrid(rows, cols);
    for (auto& v : s.entries.values()) {
        v = {rng.normal(), rng.normal()};
    }
    s.timestamp = rng.uniform(0.0, 10.0);
    s.packet_index = static_cast<std::uint32_t>(rng.below(100000));
    return s;
}

inline FingerprintRecord random_record(Rng& rng, std::size_t symbols)
{
    FingerprintRecord r;
    r.location = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 6.0)};
    r.label_location = rng.uniform() < 0.5 ? r.location : Point2{rng.uniform(0.0, 8.0), rng.uniform(0.0, 6.0)};
    for (std::size_t i = 0; i < symbols; ++i) {
        r.symbols.push_back(random_symbol(rng));
    }
    return r;
}

inline PolarCsi random_polar(Rng& rng)
{
    PolarCsi p{RealGrid(3, 30), RealGrid(3, 30)};
    for (auto& v : p.amplitude.values()) {
        v = rng.uniform(0.0, 2.0);
    }
    for (auto& v : p.phase.values()) {
        v = rng.uniform(-3.14159, 3.14159);
    }
    return p;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        path_ = std::filesystem::temp_directory_path() /
                ("csiloc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    static std::uint64_t& counter()
    {
        static std::uint64_t c = 0;
        return c;
    }
    std::filesystem::path path_;
};

} // namespace csiloc::testkit
