#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "asq/access.hpp"
#include "asq/errors.hpp"
#include "asq/median.hpp"
#include "asq/numeric.hpp"
#include "asq/relative_estimate.hpp"

namespace asq {

inline constexpr double kUnboundedPhi = std::numeric_limits<double>::infinity();

/// u = sum_j lambda_j x_j over handles sharing one dimension.
struct LinearCombinationSpec {
    std::vector<std::shared_ptr<const AccessHandle>> handles;
    std::vector<cplx> lambdas;

    void validate() const {
        if (handles.empty()) throw Error(ErrorCode::InvalidArgument, "combination needs at least one term");
        if (handles.size() != lambdas.size())
            throw Error(ErrorCode::DimensionMismatch, "one coefficient per handle");
        for (const auto &h : handles) {
            if (!h) throw Error(ErrorCode::InvalidArgument, "null handle");
            if (h->dim() != handles.front()->dim())
                throw Error(ErrorCode::DimensionMismatch, "combined handles differ in dimension");
        }
        for (const auto &l : lambdas)
            if (l == cplx(0.0)) throw Error(ErrorCode::InvalidArgument, "zero coefficient");
    }

    std::size_t terms() const noexcept { return handles.size(); }
    double lambda_norm_sq() const {
        double s = 0.0;
        for (const auto &l : lambdas) s += std::norm(l);
        return s;
    }
};

/// Spectral condition number of the d x tau matrix with columns x_j; infinity if rank-deficient.
inline double column_condition_number(const std::vector<DenseVector> &columns) {
    const auto d = static_cast<Eigen::Index>(columns.front().dim());
    const auto tau = static_cast<Eigen::Index>(columns.size());
    Eigen::MatrixXcd X(d, tau);
    for (Eigen::Index j = 0; j < tau; ++j)
        for (Eigen::Index i = 0; i < d; ++i) X(i, j) = columns[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    if (d < tau) return kUnboundedPhi;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(X);
    const auto &s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    if (smax <= 0.0 || smin <= smax * 1e-13) return kUnboundedPhi;
    return smax / smin;
}

namespace detail {

/// Shared machinery: j is chosen from a fixed law, then the j-th handle samples.
class CombinationBase : public AccessHandle {
public:
    std::size_t dim() const override { return spec_.handles.front()->dim(); }

    SampleOutcome sample(Rng &rng) const override {
        const std::size_t j = pick_.sample(rng);
        const SampleOutcome o = spec_.handles[j]->sample(rng);
        ledger().record_sample(o.ok());
        return o;
    }

    /// Per-term budget eps / (tau |lambda_j|), each term boosted to failure 1/(6 tau).
    QueryResult query(std::size_t i, double eps, Rng &rng) const override {
        check_index(i);
        ledger().record_query(eps);
        const double tau = static_cast<double>(spec_.terms());
        cplx s = 0.0;
        for (std::size_t j = 0; j < spec_.terms(); ++j) {
            const double eps_j = eps / (tau * std::abs(spec_.lambdas[j]));
            s += spec_.lambdas[j] * boosted_query(*spec_.handles[j], i, eps_j, 1.0 / (6.0 * tau), rng);
        }
        return {s, eps};
    }

    const LinearCombinationSpec &spec() const noexcept { return spec_; }

    /// Vectors behind the constituents, if every one exposes them.
    std::optional<std::vector<GroundTruth>> constituent_truths() const {
        std::vector<GroundTruth> out;
        for (const auto &h : spec_.handles) {
            auto t = h->ground_truth();
            if (!t) return std::nullopt;
            out.push_back(std::move(*t));
        }
        return out;
    }

    std::optional<DenseVector> combined_vector() const {
        auto truths = constituent_truths();
        if (!truths) return std::nullopt;
        std::vector<cplx> u(dim());
        for (std::size_t j = 0; j < truths->size(); ++j)
            for (std::size_t i = 0; i < dim(); ++i) u[i] += spec_.lambdas[j] * (*truths)[j].x[i];
        return DenseVector(std::move(u));
    }

    /// ||u_tilde||^2 / ||u||^2 for the stored vectors; infinity when u = 0.
    std::optional<double> realized_phi() const {
        auto gt = ground_truth();
        if (!gt) return std::nullopt;
        const double nu = norm2sq(gt->x);
        return nu > 0.0 ? norm2sq(gt->x_tilde) / nu : kUnboundedPhi;
    }

protected:
    CombinationBase(const LinearCombinationSpec &spec, const std::vector<double> &pick_weights)
        : AccessHandle(nullptr), spec_(spec) {
        spec_.validate();
        pick_ = DiscreteLaw(pick_weights);
    }

    static std::vector<double> lambda_weights(const LinearCombinationSpec &s) {
        std::vector<double> w;
        for (const auto &l : s.lambdas) w.push_back(std::norm(l));
        return w;
    }

    double max_constituent_phi() const {
        double phi = 1.0;
        for (const auto &h : spec_.handles) phi = std::max(phi, h->phi());
        return phi;
    }

    /// sqrt(scale * sum_k w_k |v_k(i)|^2 / ||v_k||^2) entrywise.
    DenseVector mixture_envelope(const std::vector<DenseVector> &vs, const std::vector<double> &w, double scale) const {
        std::vector<cplx> out(dim());
        for (std::size_t k = 0; k < vs.size(); ++k) {
            const double nk = norm2sq(vs[k]);
            if (nk == 0.0) continue;
            for (std::size_t i = 0; i < dim(); ++i) out[i] += w[k] * std::norm(vs[k][i]) / nk;
        }
        for (auto &v : out) v = std::sqrt(scale * v.real());
        return DenseVector(std::move(out));
    }

    LinearCombinationSpec spec_;
    DiscreteLaw pick_;
};

}  // namespace detail

/// Combination with no preliminary phase: j is drawn with probability |lambda_j|^2/||lambda||^2.
/// Declared phi' = phi tau^2 kappa^2, with kappa supplied or computed from stored vectors.
class LinearCombinationHandle final : public detail::CombinationBase {
public:
    explicit LinearCombinationHandle(const LinearCombinationSpec &spec, std::optional<double> kappa = std::nullopt)
        : CombinationBase(spec, lambda_weights(spec)) {
        const double tau = static_cast<double>(spec_.terms());
        double k = 0.0;
        if (kappa) {
            k = *kappa;
        } else if (auto truths = constituent_truths()) {
            std::vector<DenseVector> cols;
            for (auto &t : *truths) cols.push_back(t.x);
            k = column_condition_number(cols);
        } else {
            throw Error(ErrorCode::InvalidArgument, "kappa must be supplied for handles without stored vectors");
        }
        kappa_ = k;
        const auto u = combined_vector();
        const bool cancels = u && norm2sq(*u) == 0.0;
        phi_ = cancels || !std::isfinite(k) ? kUnboundedPhi : max_constituent_phi() * tau * tau * k * k;
    }

    double phi() const override { return phi_; }
    double kappa() const noexcept { return kappa_; }

    /// ||u_tilde||^2 = tau ||lambda||^2 sum_j ||x_tilde_j||^2; each norm to eps/(tau^2 ||lambda||^2),
    /// medianed over ceil(18 ln(3 tau)) copies.
    double norm_sq(double eps, Rng &rng) const override {
        ledger().record_norm(eps);
        const double tau = static_cast<double>(spec_.terms());
        const double lam = spec_.lambda_norm_sq();
        const double eps_j = eps / (tau * tau * lam);
        const std::uint64_t copies = static_cast<std::uint64_t>(std::ceil(18.0 * std::log(3.0 * tau)));
        double total = 0.0;
        std::vector<double> est(copies);
        for (const auto &h : spec_.handles) {
            for (auto &v : est) v = h->norm_sq(eps_j, rng);
            total += lower_median(est);
        }
        return tau * lam * total;
    }

    std::optional<GroundTruth> ground_truth() const override {
        auto truths = constituent_truths();
        if (!truths) return std::nullopt;
        const double tau = static_cast<double>(spec_.terms());
        const std::vector<double> w = lambda_weights(spec_);
        std::vector<DenseVector> tildes, samples;
        double tilde_sum = 0.0, sample_sum = 0.0;
        for (auto &t : *truths) {
            tildes.push_back(t.x_tilde);
            samples.push_back(t.x_sample);
            tilde_sum += norm2sq(t.x_tilde);
            sample_sum += norm2sq(t.x_sample);
        }
        return GroundTruth{*combined_vector(), mixture_envelope(tildes, w, tau * tilde_sum),
                           mixture_envelope(samples, w, tau * sample_sum)};
    }

private:
    double kappa_ = 0.0;
    double phi_ = 0.0;
};

inline std::shared_ptr<LinearCombinationHandle> lincomb_deterministic(const LinearCombinationSpec &spec,
                                                                      std::optional<double> kappa = std::nullopt) {
    return std::make_shared<LinearCombinationHandle>(spec, kappa);
}

/// Combination built after estimating each ||x_tilde_j||^2 to relative error 1/2 (overall
/// failure delta). j is drawn with probability proportional to |lambda_j|^2 n_j^2, and the
/// norm of the oversampling vector, 2 tau sum_k |lambda_k|^2 n_k^2, is a stored constant.
class ProbabilisticCombinationHandle final : public detail::CombinationBase {
public:
    ProbabilisticCombinationHandle(const LinearCombinationSpec &spec, std::vector<double> norm_estimates)
        : CombinationBase(spec, weights(spec, norm_estimates)), n_sq_(std::move(norm_estimates)) {
        const double tau = static_cast<double>(spec_.terms());
        double s = 0.0;
        for (std::size_t k = 0; k < spec_.terms(); ++k) s += std::norm(spec_.lambdas[k]) * n_sq_[k];
        stored_norm_sq_ = 2.0 * tau * s;
        phi_ = kUnboundedPhi;
        if (auto truths = constituent_truths()) {
            double num = 0.0;
            for (std::size_t k = 0; k < truths->size(); ++k) num += std::norm(spec_.lambdas[k]) * norm2sq((*truths)[k].x);
            const double nu = norm2sq(*combined_vector());
            if (nu > 0.0) phi_ = 4.0 * tau * max_constituent_phi() * num / nu;
        }
    }

    double phi() const override { return phi_; }

    double norm_sq(double eps, Rng &) const override {
        ledger().record_norm(eps);
        return stored_norm_sq_;
    }

    const std::vector<double> &norm_estimates() const noexcept { return n_sq_; }

    /// True when every stored estimate lies within half of ||x_tilde_j||^2 (test mode).
    bool estimates_in_range() const {
        auto truths = constituent_truths();
        if (!truths) return false;
        for (std::size_t k = 0; k < truths->size(); ++k) {
            const double t = norm2sq((*truths)[k].x_tilde);
            if (n_sq_[k] < 0.5 * t || n_sq_[k] > 1.5 * t) return false;
        }
        return true;
    }

    std::optional<GroundTruth> ground_truth() const override {
        auto truths = constituent_truths();
        if (!truths) return std::nullopt;
        const double tau = static_cast<double>(spec_.terms());
        std::vector<double> w;
        for (std::size_t k = 0; k < spec_.terms(); ++k) w.push_back(std::norm(spec_.lambdas[k]) * n_sq_[k]);
        std::vector<DenseVector> tildes, samples;
        for (auto &t : *truths) {
            tildes.push_back(t.x_tilde);
            samples.push_back(t.x_sample);
        }
        return GroundTruth{*combined_vector(), mixture_envelope(tildes, w, 2.0 * tau),
                           mixture_envelope(samples, w, 2.0 * tau)};
    }

private:
    static std::vector<double> weights(const LinearCombinationSpec &s, const std::vector<double> &n_sq) {
        if (n_sq.size() != s.lambdas.size()) throw Error(ErrorCode::DimensionMismatch, "one norm estimate per term");
        std::vector<double> w;
        for (std::size_t k = 0; k < n_sq.size(); ++k) {
            if (!(n_sq[k] > 0.0)) throw Error(ErrorCode::ConstructionFailed, "non-positive norm estimate");
            w.push_back(std::norm(s.lambdas[k]) * n_sq[k]);
        }
        return w;
    }

    std::vector<double> n_sq_;
    double stored_norm_sq_ = 0.0;
    double phi_ = kUnboundedPhi;
};

/// Preliminary phase: each ||x_tilde_j||^2 to relative error 1/2 with failure delta/tau.
/// Throws ConstructionFailed when an estimate cannot be resolved.
inline std::shared_ptr<ProbabilisticCombinationHandle> lincomb_probabilistic(const LinearCombinationSpec &spec,
                                                                            double delta, Rng &rng) {
    spec.validate();
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    const double delta_j = delta / static_cast<double>(spec.terms());
    std::vector<double> n_sq;
    for (const auto &h : spec.handles) {
        try {
            const auto r = relative_estimate([&](double eps, Rng &g) { return cplx(h->norm_sq(eps, g)); }, 0.5,
                                             delta_j, rng);
            n_sq.push_back(r.value.real());
        } catch (const Error &e) {
            if (e.code() != ErrorCode::NonterminationCap) throw;
            throw Error(ErrorCode::ConstructionFailed, std::string("norm estimate failed: ") + e.what());
        }
    }
    return std::make_shared<ProbabilisticCombinationHandle>(spec, std::move(n_sq));
}

}  // namespace asq
