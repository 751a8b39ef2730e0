#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asq/errors.hpp"
#include "asq/rng.hpp"

namespace asq {

using cplx = std::complex<double>;

/// Immutable complex vector; copies share storage.
class DenseVector {
public:
    explicit DenseVector(std::vector<cplx> entries)
        : data_(std::make_shared<const std::vector<cplx>>(std::move(entries))) {
        if (data_->empty()) throw Error(ErrorCode::InvalidArgument, "DenseVector needs dim >= 1");
        for (const auto &v : *data_) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw Error(ErrorCode::InvalidArgument, "DenseVector entries must be finite");
        }
    }

    static DenseVector from_real(std::span<const double> values) {
        std::vector<cplx> e(values.begin(), values.end());
        return DenseVector(std::move(e));
    }

    static DenseVector basis(std::size_t dim, std::size_t index) {
        if (index >= dim) throw Error(ErrorCode::IndexOutOfRange, "basis index");
        std::vector<cplx> e(dim);
        e[index] = 1.0;
        return DenseVector(std::move(e));
    }

    std::size_t dim() const noexcept { return data_->size(); }
    const cplx &operator[](std::size_t i) const noexcept { return (*data_)[i]; }
    const cplx &at(std::size_t i) const {
        if (i >= dim()) throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(i));
        return (*data_)[i];
    }
    std::span<const cplx> entries() const noexcept { return *data_; }
    auto begin() const noexcept { return data_->begin(); }
    auto end() const noexcept { return data_->end(); }

private:
    std::shared_ptr<const std::vector<cplx>> data_;
};

inline void require_same_dim(const DenseVector &a, const DenseVector &b) {
    if (a.dim() != b.dim())
        throw Error(ErrorCode::DimensionMismatch,
                    std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
}

inline double norm2sq(const DenseVector &v) {
    double s = 0.0;
    for (const auto &e : v) s += std::norm(e);
    return s;
}

inline double norm2(const DenseVector &v) { return std::sqrt(norm2sq(v)); }

inline double one_norm(const DenseVector &v) {
    double s = 0.0;
    for (const auto &e : v) s += std::abs(e);
    return s;
}

/// x^dagger y.
inline cplx inner(const DenseVector &x, const DenseVector &y) {
    require_same_dim(x, y);
    cplx s = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) s += std::conj(x[i]) * y[i];
    return s;
}

inline DenseVector operator-(const DenseVector &a, const DenseVector &b) {
    require_same_dim(a, b);
    std::vector<cplx> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
    return DenseVector(std::move(out));
}

inline DenseVector operator+(const DenseVector &a, const DenseVector &b) {
    require_same_dim(a, b);
    std::vector<cplx> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return DenseVector(std::move(out));
}

inline DenseVector operator*(cplx s, const DenseVector &a) {
    std::vector<cplx> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = s * a[i];
    return DenseVector(std::move(out));
}

inline DenseVector normalized(const DenseVector &v) {
    const double n = norm2(v);
    if (n == 0.0) throw Error(ErrorCode::ZeroVector, "cannot normalize zero vector");
    return (1.0 / n) * v;
}

/// Probability weights over [0, d).
class L2Distribution {
public:
    /// Normalizes non-negative weights; throws ZeroVector if they sum to zero.
    static L2Distribution from_weights(std::vector<double> w) {
        double total = 0.0;
        for (double x : w) {
            if (!(x >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative probability weight");
            total += x;
        }
        if (w.empty()) throw Error(ErrorCode::InvalidArgument, "empty distribution");
        if (total <= 0.0) throw Error(ErrorCode::ZeroVector, "weights sum to zero");
        for (double &x : w) x /= total;
        return L2Distribution(std::move(w));
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t i) const noexcept { return weights_[i]; }
    std::span<const double> weights() const noexcept { return weights_; }

private:
    explicit L2Distribution(std::vector<double> w) : weights_(std::move(w)) {}
    std::vector<double> weights_;
};

/// D_v(i) = |v(i)|^2 / ||v||^2.
inline L2Distribution l2_distribution(const DenseVector &v) {
    std::vector<double> w(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) w[i] = std::norm(v[i]);
    return L2Distribution::from_weights(std::move(w));
}

/// Un-halved l1 distance sum_i |p(i) - q(i)|.
inline double tvd(const L2Distribution &p, const L2Distribution &q) {
    if (p.size() != q.size())
        throw Error(ErrorCode::DimensionMismatch, "distributions over different supports");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return s;
}

/// sum |D_x - D_y| <= 4 ||x - y|| / ||x||.
inline bool check_tvd_bound(const DenseVector &x, const DenseVector &y) {
    const double nx = norm2(x);
    if (nx == 0.0 || norm2(y) == 0.0) throw Error(ErrorCode::ZeroVector, "tvd bound needs nonzero vectors");
    return tvd(l2_distribution(x), l2_distribution(y)) <= 4.0 * norm2(x - y) / nx;
}

struct IndexCount {
    std::uint64_t index;
    std::uint64_t count;
    friend bool operator==(const IndexCount &, const IndexCount &) = default;
};

/// Exact sampler for a fixed finite law; single draws by inverse CDF, bulk draws as a multinomial.
class DiscreteLaw {
public:
    DiscreteLaw() = default;

    explicit DiscreteLaw(std::span<const double> weights) : weights_(weights.begin(), weights.end()) {
        cumulative_.resize(weights_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            if (!(weights_[i] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative weight");
            acc += weights_[i];
            cumulative_[i] = acc;
        }
        total_ = acc;
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double total() const noexcept { return total_; }
    double probability(std::size_t i) const noexcept { return total_ > 0 ? weights_[i] / total_ : 0.0; }

    std::size_t sample(Rng &rng) const {
        if (total_ <= 0.0) throw Error(ErrorCode::ZeroVector, "cannot sample from empty law");
        const double u = uniform01(rng) * total_;
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
        if (i >= weights_.size()) i = weights_.size() - 1;
        // Never land on a zero-weight entry through rounding at the top end.
        while (weights_[i] == 0.0 && i > 0) --i;
        return i;
    }

    /// Histogram of n independent draws, sorted by index, zero counts omitted.
    std::vector<IndexCount> counts(std::uint64_t n, Rng &rng) const {
        std::vector<IndexCount> out;
        if (n == 0) return out;
        if (total_ <= 0.0) throw Error(ErrorCode::ZeroVector, "cannot sample from empty law");
        if (n < weights_.size() / 4 + 16) {
            std::vector<std::uint64_t> idx(n);
            for (auto &v : idx) v = sample(rng);
            std::sort(idx.begin(), idx.end());
            for (std::size_t k = 0; k < idx.size();) {
                std::size_t j = k;
                while (j < idx.size() && idx[j] == idx[k]) ++j;
                out.push_back({idx[k], j - k});
                k = j;
            }
            return out;
        }
        // Sequential conditional binomials.
        std::uint64_t remaining = n;
        double mass_left = total_;
        for (std::size_t i = 0; i < weights_.size() && remaining > 0; ++i) {
            if (weights_[i] == 0.0) continue;
            std::uint64_t c;
            const double p = mass_left > 0 ? weights_[i] / mass_left : 1.0;
            if (p >= 1.0 || i + 1 == weights_.size()) {
                c = remaining;
            } else {
                std::binomial_distribution<std::uint64_t> bin(remaining, p);
                c = bin(rng);
            }
            if (c > 0) out.push_back({i, c});
            remaining -= c;
            mass_left -= weights_[i];
        }
        if (remaining > 0) {
            // Rounding left mass on the table; give it to the last supported index.
            std::size_t last = weights_.size() - 1;
            while (weights_[last] == 0.0) --last;
            if (!out.empty() && out.back().index == last) {
                out.back().count += remaining;
            } else {
                out.push_back({last, remaining});
            }
        }
        return out;
    }

private:
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    double total_ = 0.0;
};

}  // namespace asq
