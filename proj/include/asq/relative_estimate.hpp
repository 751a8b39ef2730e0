#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "asq/errors.hpp"
#include "asq/median.hpp"
#include "asq/numeric.hpp"
#include "asq/rng.hpp"

namespace asq {

inline constexpr int kRelativeEstimateCap = 64;

struct RelativeEstimate {
    cplx value;
    int iterations = 0;  // loop rounds before the final phase
    double floor = 0.0;  // lower bound on |x| used to set the final precision
};

/// Raw calls made by one round k of the doubling loop.
inline std::uint64_t relative_round_calls(int k, double delta) {
    return static_cast<std::uint64_t>(std::ceil(18.0 * std::log(1e4 * std::ldexp(1.0, k + 1) / delta)));
}

/// Raw calls made for each of the real and imaginary parts in the final phase.
inline std::uint64_t relative_final_calls(double delta) {
    return static_cast<std::uint64_t>(std::ceil(18.0 * std::log(8.0 / delta)));
}

/// Relative-error estimate of a scalar from a two-sided absolute-error oracle.
///
/// `q(eps, rng)` returns a complex value within eps of x with probability >= 2/3. Halving
/// rounds run until the medianed magnitude is at least twice the round precision; the final
/// phase then queries at rho times the certified floor. Real and imaginary parts of the
/// final phase come from separate calls. Throws NonterminationCap after `cap` rounds.
template <class Oracle>
RelativeEstimate relative_estimate(Oracle &&q, double rho, double delta, Rng &rng,
                                   int cap = kRelativeEstimateCap) {
    if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (0,1]");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0,1)");

    std::vector<double> buf;
    double mu = 0.0;
    double eps = 0.0;
    int k = 1;
    for (;; ++k) {
        if (k > cap)
            throw Error(ErrorCode::NonterminationCap,
                        "no magnitude resolved after " + std::to_string(cap) + " rounds");
        eps = std::ldexp(1.0, -k) / std::sqrt(2.0);
        const std::uint64_t n = relative_round_calls(k, delta);
        buf.resize(n);
        for (auto &v : buf) v = std::abs(cplx(q(eps, rng)));
        mu = lower_median(buf);
        if (eps <= 0.5 * mu) break;
    }

    const double floor = mu - eps;
    const double fine = rho * floor;
    const std::uint64_t n = relative_final_calls(delta);
    std::vector<double> re(n), im(n);
    for (auto &v : re) v = cplx(q(fine, rng)).real();
    for (auto &v : im) v = cplx(q(fine, rng)).imag();
    return {cplx(lower_median(re), lower_median(im)), k, floor};
}

/// Scalar oracle for adversarial tests: with probability p_fail the answer is pushed exactly
/// 3 eps away from the truth in a random direction, otherwise it lands uniformly in the eps-disc.
struct NoisyScalarOracle {
    cplx truth;
    double p_fail = 1.0 / 3.0;

    cplx operator()(double eps, Rng &rng) const {
        if (bernoulli(rng, p_fail)) return truth + 3.0 * eps * random_unit_phase(rng);
        return truth + uniform_in_disc(rng, eps);
    }
};

}  // namespace asq
