#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "asq/errors.hpp"
#include "asq/numeric.hpp"
#include "asq/rng.hpp"

namespace asq {

/// Mutable n-qubit state vector for building test states. Qubit q is basis bit (n-1-q),
/// so qubit 0 is the most significant bit of the basis index.
class StateBuilder {
public:
    explicit StateBuilder(unsigned n) : n_(n), amp_(std::size_t{1} << n) {
        if (n == 0 || n > 20) throw Error(ErrorCode::InvalidArgument, "qubit count must lie in [1, 20]");
        amp_[0] = 1.0;
    }

    unsigned qubits() const noexcept { return n_; }

    StateBuilder &h(unsigned q) {
        const std::size_t m = mask(q);
        const double r = std::numbers::sqrt2 / 2.0;
        for (std::size_t j = 0; j < amp_.size(); ++j) {
            if (j & m) continue;
            const cplx a = amp_[j], b = amp_[j | m];
            amp_[j] = r * (a + b);
            amp_[j | m] = r * (a - b);
        }
        return *this;
    }

    StateBuilder &phase(unsigned q, cplx w) {
        const std::size_t m = mask(q);
        for (std::size_t j = 0; j < amp_.size(); ++j)
            if (j & m) amp_[j] *= w;
        return *this;
    }

    StateBuilder &s(unsigned q) { return phase(q, cplx(0.0, 1.0)); }
    StateBuilder &z(unsigned q) { return phase(q, -1.0); }
    StateBuilder &t(unsigned q) { return phase(q, std::polar(1.0, std::numbers::pi / 4.0)); }

    StateBuilder &x(unsigned q) {
        const std::size_t m = mask(q);
        for (std::size_t j = 0; j < amp_.size(); ++j)
            if (!(j & m)) std::swap(amp_[j], amp_[j | m]);
        return *this;
    }

    StateBuilder &cnot(unsigned control, unsigned target) {
        if (control == target) throw Error(ErrorCode::InvalidArgument, "cnot needs distinct qubits");
        const std::size_t c = mask(control), t = mask(target);
        for (std::size_t j = 0; j < amp_.size(); ++j)
            if ((j & c) && !(j & t)) std::swap(amp_[j], amp_[j | t]);
        return *this;
    }

    /// `depth` layers, each a random single-qubit gate from {H, S, identity} on every qubit
    /// followed by one CNOT between a random ordered pair.
    StateBuilder &random_clifford(unsigned depth, Rng &rng) {
        for (unsigned layer = 0; layer < depth; ++layer) {
            for (unsigned q = 0; q < n_; ++q) {
                switch (rng() % 3) {
                    case 0: h(q); break;
                    case 1: s(q); break;
                    default: break;
                }
            }
            if (n_ > 1) {
                const unsigned a = static_cast<unsigned>(rng() % n_);
                unsigned b = static_cast<unsigned>(rng() % (n_ - 1));
                if (b >= a) ++b;
                cnot(a, b);
            }
        }
        return *this;
    }

    DenseVector state() const { return DenseVector(amp_); }

private:
    std::size_t mask(unsigned q) const {
        if (q >= n_) throw Error(ErrorCode::IndexOutOfRange, "qubit " + std::to_string(q));
        return std::size_t{1} << (n_ - 1 - q);
    }

    unsigned n_;
    std::vector<cplx> amp_;
};

/// (|0> + e^{i pi/4}|1>)/sqrt(2).
inline DenseVector t_state() { return StateBuilder(1).h(0).t(0).state(); }

/// Clifford circuit, then `t_count` T gates on random qubits each followed by more Clifford layers.
inline DenseVector low_magic_state(unsigned n, unsigned t_count, Rng &rng, unsigned depth = 8) {
    StateBuilder b(n);
    b.random_clifford(depth, rng);
    for (unsigned k = 0; k < t_count; ++k) {
        const unsigned q = static_cast<unsigned>(rng() % n);
        b.h(q).t(q);
        b.random_clifford(depth, rng);
    }
    return b.state();
}

/// Haar-like random state: normalized complex Gaussian amplitudes.
inline DenseVector random_state(std::size_t d, Rng &rng) {
    std::vector<cplx> a(d);
    for (auto &v : a) v = {standard_normal(rng), standard_normal(rng)};
    return normalized(DenseVector(std::move(a)));
}

inline DenseVector random_real_unit(std::size_t d, Rng &rng) {
    std::vector<cplx> a(d);
    for (auto &v : a) v = standard_normal(rng);
    return normalized(DenseVector(std::move(a)));
}

/// A vector dominating x entrywise in modulus with ||x_tilde||^2 = phi ||x||^2; the excess
/// mass is spread over random entries so the sampling law really changes.
inline DenseVector dominating_vector(const DenseVector &x, double phi, Rng &rng) {
    if (!(phi >= 1.0)) throw Error(ErrorCode::InvalidArgument, "phi must be at least 1");
    std::vector<double> w(x.dim());
    double total = 0.0;
    for (auto &v : w) total += (v = uniform01(rng));
    const double extra = (phi - 1.0) * norm2sq(x);
    std::vector<cplx> out(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
        const double mag = std::sqrt(std::norm(x[i]) + extra * w[i] / total);
        out[i] = std::abs(x[i]) > 0.0 ? mag * x[i] / std::abs(x[i]) : cplx(mag);
    }
    return DenseVector(std::move(out));
}

/// x + s z for a random Gaussian direction z, with s bisected so that tvd(D_x, D_{x + s z}) = target.
inline DenseVector perturb_to_tvd(const DenseVector &x, double target, Rng &rng) {
    if (!(target >= 0.0 && target < 2.0)) throw Error(ErrorCode::InvalidArgument, "tvd target outside [0,2)");
    std::vector<cplx> zv(x.dim());
    for (auto &v : zv) v = {standard_normal(rng), standard_normal(rng)};
    const DenseVector z(std::move(zv));
    if (target == 0.0) return x;
    const auto px = l2_distribution(x);
    auto gap = [&](double s) { return tvd(px, l2_distribution(x + cplx(s) * z)); };
    double lo = 0.0, hi = 1e-3 * norm2(x) / norm2(z);
    while (gap(hi) < target) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) < target ? lo : hi) = mid;
    }
    return x + cplx(lo) * z;
}

}  // namespace asq
