#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "asq/errors.hpp"

namespace asq {

/// Copies needed so that the median of 2/3-reliable estimates fails with probability <= delta.
inline std::uint64_t median_repetitions(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    return static_cast<std::uint64_t>(std::ceil(18.0 * std::log(1.0 / delta)));
}

/// Lower median (element of rank floor((n-1)/2)). Reorders `values`.
inline double lower_median(std::vector<double> &values) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "median of empty list");
    auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

inline double lower_median(std::vector<double> &&values) { return lower_median(values); }

/// Lower median of a multiset given as (value, multiplicity) pairs.
inline double weighted_lower_median(std::vector<std::pair<double, std::uint64_t>> items) {
    std::uint64_t total = 0;
    for (const auto &[v, c] : items) total += c;
    if (total == 0) throw Error(ErrorCode::InvalidArgument, "median of empty multiset");
    std::sort(items.begin(), items.end());
    const std::uint64_t rank = (total - 1) / 2;
    std::uint64_t seen = 0;
    for (const auto &[v, c] : items) {
        seen += c;
        if (seen > rank) return v;
    }
    return items.back().first;
}

}  // namespace asq
