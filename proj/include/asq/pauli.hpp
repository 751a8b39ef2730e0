#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "asq/access.hpp"
#include "asq/backends.hpp"
#include "asq/errors.hpp"
#include "asq/estimators.hpp"
#include "asq/numeric.hpp"

namespace asq {

inline constexpr unsigned kMaxPauliQubits = 10;

/// Split a 2n-bit tableau index (x_1 ... x_2n, x_1 most significant) into basis-bit masks.
/// Qubit k owns (x_{2k+1}, x_{2k+2}) = (X power, Z power) and acts on basis bit n-1-k.
struct PauliMasks {
    std::uint64_t x = 0;
    std::uint64_t z = 0;
};

inline PauliMasks pauli_masks(std::uint64_t index, unsigned n) {
    PauliMasks m;
    for (unsigned k = 0; k < n; ++k) {
        const unsigned shift = 2 * (n - 1 - k);
        const std::uint64_t basis_bit = std::uint64_t{1} << (n - 1 - k);
        if ((index >> (shift + 1)) & 1U) m.x |= basis_bit;
        if ((index >> shift) & 1U) m.z |= basis_bit;
    }
    return m;
}

inline std::uint64_t pauli_index(const PauliMasks &m, unsigned n) {
    std::uint64_t index = 0;
    for (unsigned k = 0; k < n; ++k) {
        const unsigned shift = 2 * (n - 1 - k);
        const std::uint64_t basis_bit = std::uint64_t{1} << (n - 1 - k);
        if (m.x & basis_bit) index |= std::uint64_t{1} << (shift + 1);
        if (m.z & basis_bit) index |= std::uint64_t{1} << shift;
    }
    return index;
}

/// Qubit count for a state of dimension d = 2^n; throws unless d is a power of two.
inline unsigned qubits_of(std::size_t d) {
    if (d < 2 || !std::has_single_bit(d)) throw Error(ErrorCode::DimensionNotPowerOfTwo, "dimension " + std::to_string(d));
    return static_cast<unsigned>(std::countr_zero(d));
}

/// <psi| P |psi> for one string, straight from the sign and flip rules. O(2^n).
inline double pauli_expectation(const DenseVector &psi, std::uint64_t index, unsigned n) {
    const PauliMasks m = pauli_masks(index, n);
    cplx acc = 0.0;
    for (std::size_t j = 0; j < psi.dim(); ++j) {
        const double sign = (std::popcount(j & m.z) & 1U) ? -1.0 : 1.0;
        acc += std::conj(psi[j ^ m.x]) * sign * psi[j];
    }
    // Each X Z pair on the same qubit is Y up to a factor i.
    static constexpr cplx kPow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return (kPow[std::popcount(m.x & m.z) & 3U] * acc).real();
}

/// pi(i) = Tr(rho P_i)/sqrt(d) over all 4^n tableau indices.
struct PauliRepresentation {
    unsigned n = 0;
    std::vector<double> values;

    std::size_t state_dim() const noexcept { return std::size_t{1} << n; }
    DenseVector as_vector() const { return DenseVector::from_real(values); }
};

/// All 4^n expectations via one Walsh-Hadamard transform over z per x mask. O(n 4^n).
inline PauliRepresentation pauli_representation(const DenseVector &psi, std::optional<unsigned> n_hint = std::nullopt) {
    const unsigned n = qubits_of(psi.dim());
    if (n_hint && *n_hint != n) throw Error(ErrorCode::DimensionMismatch, "qubit count does not match dimension");
    if (n > kMaxPauliQubits) throw Error(ErrorCode::InvalidArgument, "at most 10 qubits");
    if (std::abs(norm2sq(psi) - 1.0) > 1e-9) throw Error(ErrorCode::NotNormalized, "state is not normalized");
    const std::size_t d = psi.dim();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    PauliRepresentation rep;
    rep.n = n;
    rep.values.assign(d * d, 0.0);
    std::vector<cplx> f(d);
    static constexpr cplx kPow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (std::uint64_t xm = 0; xm < d; ++xm) {
        for (std::size_t j = 0; j < d; ++j) f[j] = std::conj(psi[j ^ xm]) * psi[j];
        for (std::size_t h = 1; h < d; h <<= 1) {
            for (std::size_t a = 0; a < d; a += 2 * h) {
                for (std::size_t b = a; b < a + h; ++b) {
                    const cplx u = f[b], v = f[b + h];
                    f[b] = u + v;
                    f[b + h] = u - v;
                }
            }
        }
        for (std::uint64_t zm = 0; zm < d; ++zm) {
            const double e = (kPow[std::popcount(xm & zm) & 3U] * f[zm]).real();
            rep.values[pauli_index({xm, zm}, n)] = e * inv_sqrt_d;
        }
    }
    return rep;
}

/// Stabilizer Renyi entropies (natural log) and the stabilizer norm.
struct MagicReport {
    double m0 = 0.0;
    double m_half = 0.0;
    double m2 = 0.0;
    double stab_norm = 0.0;
    double exp_half_m_half = 0.0;  // e^{M_1/2 / 2}, equal to stab_norm
};

/// M_alpha = (1 - alpha)^-1 ln sum_i pi(i)^{2 alpha} - ln d for alpha != 1.
/// alpha = 0 counts the strings with |sqrt(d) pi(i)| > support_cutoff.
inline double stabilizer_entropy(const PauliRepresentation &rep, double alpha, double support_cutoff = 1e-9) {
    if (alpha == 1.0) throw Error(ErrorCode::InvalidArgument, "alpha = 1 is not supported");
    const double d = static_cast<double>(rep.state_dim());
    const double sqrt_d = std::sqrt(d);
    double s = 0.0;
    for (double v : rep.values) {
        if (alpha == 0.0) {
            s += std::abs(sqrt_d * v) > support_cutoff ? 1.0 : 0.0;
        } else if (v != 0.0) {
            s += std::pow(v * v, alpha);
        }
    }
    return std::log(s) / (1.0 - alpha) - std::log(d);
}

/// d^-1 sum |Tr(P_i rho)| = d^-1/2 ||pi||_1.
inline double stab_norm(const PauliRepresentation &rep) {
    double s = 0.0;
    for (double v : rep.values) s += std::abs(v);
    return s / std::sqrt(static_cast<double>(rep.state_dim()));
}

inline MagicReport magic_report(const PauliRepresentation &rep, double support_cutoff = 1e-9) {
    MagicReport r;
    r.m0 = stabilizer_entropy(rep, 0.0, support_cutoff);
    r.m_half = stabilizer_entropy(rep, 0.5);
    r.m2 = stabilizer_entropy(rep, 2.0);
    r.stab_norm = stab_norm(rep);
    r.exp_half_m_half = std::exp(0.5 * r.m_half);
    return r;
}

/// F(tau) = sum of pi(i)^2 over strings with d pi(i)^2 < tau.
inline double pauli_cdf(const PauliRepresentation &rep, double tau) {
    const double d = static_cast<double>(rep.state_dim());
    double s = 0.0;
    for (double v : rep.values)
        if (d * v * v < tau) s += v * v;
    return s;
}

/// Cost of one Pauli sample through Bell-basis measurements:
/// N = e^{4 chi} e^{2 M_1/2} Delta^-4 ln^3(d) ln(1/delta).
struct CorollaryCost {
    double chi = 1.0;        // entanglement bound across the cut
    double tvd = 0.1;        // sampling TVD budget Delta
    double failure = 0.1;    // failure probability delta
    bool perturb = false;    // sample from the Delta-mixture with uniform instead of exactly
    double query_time = 1.0; // T per shot of a Pauli expectation query

    double samples_per_draw(double m_half, unsigned n) const {
        const double ln_d = static_cast<double>(n) * std::numbers::ln2;
        return std::exp(4.0 * chi) * std::exp(2.0 * m_half) * std::pow(tvd, -4.0) * ln_d * ln_d * ln_d *
               std::log(1.0 / failure);
    }
};

/// Access to pi for a pure state: exact Pauli sampling (or its Delta/2 mixture with uniform),
/// shot-noise queries of <P_i>, and the known unit norm at no cost.
class PauliSamplerHandle final : public AccessHandle {
public:
    PauliSamplerHandle(PauliRepresentation rep, CorollaryCost cost = {}, std::shared_ptr<CostLedger> ledger = nullptr)
        : AccessHandle(std::move(ledger)), rep_(std::move(rep)), cost_(cost), pi_(rep_.as_vector()),
          law_(sampling_weights(rep_, cost_)), sample_vec_(sqrt_weights(law_)) {
        m_half_ = stabilizer_entropy(rep_, 0.5);
        per_sample_ = cost_.samples_per_draw(m_half_, rep_.n);
    }

    std::size_t dim() const override { return rep_.values.size(); }
    double phi() const override { return 1.0; }

    SampleOutcome sample(Rng &rng) const override {
        ledger().add_cost(per_sample_);
        ledger().record_sample(true);
        return SampleOutcome::at(law_.sample(rng));
    }

    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                std::uint32_t = kDefaultStarvationCap) const override {
        ledger().record_samples(n, 0);
        ledger().add_cost(per_sample_ * static_cast<double>(n));
        return law_.counts(n, rng);
    }

    /// max(1, ceil(2 ln 6 / (eps^2 d))) +-1 shots of P_i estimate <P_i> to eps sqrt(d).
    QueryResult query(std::size_t i, double eps, Rng &rng) const override {
        check_index(i);
        ledger().record_query(eps);
        const double d = static_cast<double>(rep_.state_dim());
        const double sqrt_d = std::sqrt(d);
        const auto shots = query_shots(eps);
        ledger().add_cost(cost_.query_time * static_cast<double>(shots));
        const double expectation = std::clamp(sqrt_d * rep_.values[i], -1.0, 1.0);
        std::binomial_distribution<std::uint64_t> bin(shots, 0.5 * (1.0 + expectation));
        const double mean = 2.0 * static_cast<double>(bin(rng)) / static_cast<double>(shots) - 1.0;
        return {mean / sqrt_d, eps};
    }

    double norm_sq(double eps, Rng &) const override {
        ledger().record_norm(eps);
        return 1.0;
    }

    std::uint64_t query_shots(double eps) const {
        const double d = static_cast<double>(rep_.state_dim());
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(2.0 * std::log(6.0) / (eps * eps * d))));
    }

    std::optional<GroundTruth> ground_truth() const override { return GroundTruth{pi_, pi_, sample_vec_}; }

    const PauliRepresentation &representation() const noexcept { return rep_; }
    double cost_per_sample() const noexcept { return per_sample_; }
    double one_norm() const { return asq::one_norm(pi_); }

private:
    static std::vector<double> sampling_weights(const PauliRepresentation &rep, const CorollaryCost &cost) {
        std::vector<double> w(rep.values.size());
        const double mix = cost.perturb ? 0.5 * cost.tvd : 0.0;
        const double uniform = 1.0 / static_cast<double>(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = (1.0 - mix) * rep.values[i] * rep.values[i] + mix * uniform;
        return w;
    }

    static DenseVector sqrt_weights(const DiscreteLaw &law) {
        std::vector<cplx> v(law.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(law.probability(i));
        return DenseVector(std::move(v));
    }

    PauliRepresentation rep_;
    CorollaryCost cost_;
    DenseVector pi_;
    DiscreteLaw law_;
    DenseVector sample_vec_;
    double m_half_ = 0.0;
    double per_sample_ = 0.0;
};

/// kappa = max(||pi_psi||_1, ||pi_phi||_1), an upper bound on the smaller 1-norm.
inline double overlap_kappa(const PauliRepresentation &a, const PauliRepresentation &b) {
    return std::max(stab_norm(a), stab_norm(b)) * std::sqrt(static_cast<double>(a.state_dim()));
}

/// |<psi|phi>|^2 = pi_psi^T pi_phi estimated by the real-vector estimator over two Pauli samplers.
inline InnerProductResult distributed_overlap(const DenseVector &psi, const DenseVector &phi, double eps, Rng &rng,
                                              CorollaryCost cost = {}) {
    require_same_dim(psi, phi);
    const auto a = pauli_representation(psi);
    const auto b = pauli_representation(phi);
    InnerProductConfig cfg;
    cfg.eps = eps;
    cfg.kappa = overlap_kappa(a, b);
    auto ha = std::make_shared<PauliSamplerHandle>(a, cost);
    auto hb = std::make_shared<PauliSamplerHandle>(b, cost);
    return inner_product_real_exact(ha, hb, cfg, rng);
}

}  // namespace asq
