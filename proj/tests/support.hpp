#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "asq/numeric.hpp"
#include "asq/rng.hpp"
#include "asq/states.hpp"

namespace asq::fixtures {

inline DenseVector random_complex(std::size_t d, Rng &rng) {
    std::vector<cplx> a(d);
    for (auto &v : a) v = {standard_normal(rng), standard_normal(rng)};
    return DenseVector(std::move(a));
}

inline DenseVector random_real(std::size_t d, Rng &rng) {
    std::vector<cplx> a(d);
    for (auto &v : a) v = standard_normal(rng);
    return DenseVector(std::move(a));
}

inline DenseVector dominating(const DenseVector &x, double phi, Rng &rng) { return dominating_vector(x, phi, rng); }

/// Upper-tail p-value of Pearson's statistic for observed counts against expected probabilities.
/// Cells with expected probability zero must have zero count, otherwise the p-value is 0.
inline double chi_square_p(const std::vector<std::uint64_t> &observed, const std::vector<double> &prob) {
    std::uint64_t n = 0;
    for (auto c : observed) n += c;
    double stat = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = prob[i] * static_cast<double>(n);
        if (e <= 0.0) {
            if (observed[i] != 0) return 0.0;
            continue;
        }
        stat += (static_cast<double>(observed[i]) - e) * (static_cast<double>(observed[i]) - e) / e;
        ++cells;
    }
    if (cells < 2) return 1.0;
    boost::math::chi_squared dist(cells - 1);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

/// |successes/n - p| in units of the binomial standard deviation.
inline double binomial_z(std::uint64_t successes, std::uint64_t n, double p) {
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    const double diff = static_cast<double>(successes) / static_cast<double>(n) - p;
    return sd > 0 ? std::abs(diff) / sd : (diff == 0 ? 0.0 : INFINITY);
}

}  // namespace asq::fixtures
