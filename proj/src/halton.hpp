#pragma once
// Halton sequence shared by the multistart and sampling code.

#include <cstdint>
#include <iterator>

namespace nbcoll::detail {

inline constexpr int kHaltonPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
inline constexpr int kHaltonMaxDim = static_cast<int>(std::size(kHaltonPrimes));

inline double radical_inverse(std::uint64_t i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

// Component c of the i-th Halton point in [0, 1).
inline double halton(std::uint64_t i, int c) { return radical_inverse(i, kHaltonPrimes[c]); }

}  // namespace nbcoll::detail
