// SPDX-License-Identifier: Apache-2.0

#include "csiloc/ofdm.hpp"

#include "csiloc/errors.hpp"

namespace csiloc {

std::vector<int> subcarrier_fft_bins(int n_sc)
{
    if (n_sc < 1) {
        throw DomainError("subcarrier count must be positive");
    }
    std::vector<int> bins;
    bins.reserve(static_cast<std::size_t>(n_sc));
    if (n_sc == 30) {
        for (int m = -28; m <= -2; m += 2) {
            bins.push_back(m);
        }
        bins.push_back(-1);
        for (int m = 1; m <= 27; m += 2) {
            bins.push_back(m);
        }
        bins.push_back(28);
        return bins;
    }
    for (int i = 0; i < n_sc; ++i) {
        bins.push_back(2 * i - (n_sc - 1));
    }
    return bins;
}

} // namespace csiloc
