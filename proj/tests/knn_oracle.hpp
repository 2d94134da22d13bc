// SPDX-License-Identifier: Apache-2.0

#pragma once

// Exhaustive-scan nearest-neighbour oracle and random instance generator.

#include <algorithm>
#include <numeric>
#include <vector>

#include "csiloc/localizers.hpp"
#include "csiloc/rng.hpp"

namespace csiloc::testkit {

struct KnnCase {
    KnnIndex index;
    std::vector<double> query;
    std::size_t k = 1;
};

inline KnnCase random_knn_case(Rng& rng)
{
    KnnCase c;
    const std::size_t n = 2 + rng.below(12);
    const std::size_t dim = 1 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) {
        c.index.codebook.rp_locations.push_back({static_cast<double>(i), rng.uniform(0.0, 5.0)});
        std::vector<double> fp(dim);
        for (auto& v : fp) {
            v = static_cast<double>(rng.below(4)); // coarse values so ties actually occur
        }
        c.index.fingerprints.push_back(std::move(fp));
    }
    c.query.resize(dim);
    for (auto& v : c.query) {
        v = static_cast<double>(rng.below(4));
    }
    c.k = 1 + rng.below(n);
    return c;
}

/// Distances to every fingerprint, stable-sorted; equal distances keep codebook order.
inline std::vector<std::size_t> exhaustive_neighbors(const KnnIndex& index, const std::vector<double>& q, std::size_t k)
{
    std::vector<double> d(index.fingerprints.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            s += (index.fingerprints[i][j] - q[j]) * (index.fingerprints[i][j] - q[j]);
        }
        d[i] = s;
    }
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    order.resize(k);
    return order;
}

inline Point2 exhaustive_query(const KnnIndex& index, const std::vector<double>& q, std::size_t k)
{
    double x = 0.0, y = 0.0;
    for (std::size_t i : exhaustive_neighbors(index, q, k)) {
        x += index.codebook.rp_locations[i].x;
        y += index.codebook.rp_locations[i].y;
    }
    return {x / static_cast<double>(k), y / static_cast<double>(k)};
}

} // namespace csiloc::testkit
