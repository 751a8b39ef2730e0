#pragma once

#include <algorithm>
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
#include "asq/histogram.hpp"
#include "asq/median.hpp"
#include "asq/numeric.hpp"
#include "asq/relative_estimate.hpp"

namespace asq {

/// How the symmetric estimators fold their per-draw values into one number.
enum class Reduction { Mean, Median };

struct InnerProductConfig {
    double eps = 0.1;
    std::uint32_t starvation_cap = kDefaultStarvationCap;
    bool record_trace = false;
    Reduction reduction = Reduction::Mean;
    // Constants of the approximate-sampling and real-vector estimators.
    double c1 = 1.0 / 8.0;
    double c2 = 1.0 / 16.0;
    double c3 = 1.0 / 16.0;
    // Draws of the real-vector estimator are ceil(real_draws_constant / eps^2).
    double real_draws_constant = 8.0;
    // Upper bound on phi for the approximate-sampling estimators; defaults to the handles' phi.
    std::optional<double> phi_bound;
    // Upper bound on min(||x||_1, ||y||_1) for the real-vector estimator.
    std::optional<double> kappa;
    // Sampling perturbation in the real-vector estimator, ||x - x'|| and ||y - y'|| <= delta/2.
    double delta = 0.0;

    void validate() const {
        if (!(eps > 0.0 && eps <= 1.0)) throw Error(ErrorCode::InvalidArgument, "eps must lie in (0,1]");
        if (starvation_cap == 0) throw Error(ErrorCode::InvalidArgument, "starvation cap must be positive");
        if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be non-negative");
    }
};

/// One distinct sampled index of the estimation phase, with how many draws landed on it.
struct TraceRecord {
    std::uint64_t index = 0;
    std::uint64_t multiplicity = 1;
    double p_hat = 0.0;
    bool accepted = false;
    cplx x_hat;
    cplx y_hat;
    cplx contribution;  // value of one draw; exactly 0 when rejected
};

struct PointEstimatorTrace {
    double threshold = 0.0;  // accepted iff p_hat > threshold (sqrt(p_hat) for the real estimator)
    std::vector<TraceRecord> records;
};

struct InnerProductResult {
    EstimatorReport report;
    PointEstimatorTrace trace;
    double n_sq_x = 0.0;  // relative estimates of the oversampling norms (0 when not used)
    double n_sq_y = 0.0;
    double gamma = 0.0;
    std::uint64_t histogram_samples = 0;
    std::uint64_t draws = 0;
    std::uint64_t accepted_draws = 0;
};

namespace detail {

inline std::uint64_t ceil_count(double v) {
    if (!(v >= 0.0) || v > 9.0e18) throw Error(ErrorCode::InvalidArgument, "draw count out of range");
    return static_cast<std::uint64_t>(std::ceil(v));
}

/// Relative estimate of a handle's oversampling norm; cap hits become RelativeEstimateFailed.
inline double resolve_norm_sq(const AccessHandle &h, double rho, double delta, Rng &rng) {
    try {
        const auto r = relative_estimate([&](double e, Rng &g) { return cplx(h.norm_sq(e, g)); }, rho, delta, rng);
        if (!(r.value.real() > 0.0)) throw Error(ErrorCode::RelativeEstimateFailed, "non-positive norm estimate");
        return r.value.real();
    } catch (const Error &e) {
        if (e.code() != ErrorCode::NonterminationCap) throw;
        throw Error(ErrorCode::RelativeEstimateFailed, e.what());
    }
}

inline std::vector<IndexCount> merge_counts(const std::vector<IndexCount> &a, const std::vector<IndexCount> &b) {
    std::vector<IndexCount> out;
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].index < b[j].index)) {
            out.push_back(a[i++]);
        } else if (i == a.size() || b[j].index < a[i].index) {
            out.push_back(b[j++]);
        } else {
            out.push_back({a[i].index, a[i].count + b[j].count});
            ++i;
            ++j;
        }
    }
    return out;
}

/// n valid draws where each draw first tosses a fair coin to pick the handle.
inline std::vector<IndexCount> mixture_counts(const AccessHandle &hx, const AccessHandle &hy, std::uint64_t n,
                                              Rng &rng, std::uint32_t cap) {
    std::uint64_t nx = 0;
    if (n > 0) {
        std::binomial_distribution<std::uint64_t> coin(n, 0.5);
        nx = coin(rng);
    }
    const auto a = hx.sample_valid_counts(nx, rng, cap);
    const auto b = hy.sample_valid_counts(n - nx, rng, cap);
    return merge_counts(a, b);
}

/// Raw calls charged by one boosted query at (eps, delta) that was not actually repeated.
inline void charge_boosted(const AccessHandle &h, double eps, double delta, std::uint64_t times) {
    if (times == 0) return;
    h.ledger().record_query(eps / std::numbers::sqrt2, times * median_repetitions(delta));
}

struct DrawOutcome {
    double p_hat = 0.0;
    bool accepted = false;
    cplx x_hat;
    cplx y_hat;
    cplx value;
};

/// Collects per-draw values, optionally keeping them for a median and a trace.
class DrawAccumulator {
public:
    DrawAccumulator(bool keep_values, PointEstimatorTrace *trace) : keep_(keep_values), trace_(trace) {}

    void add(std::uint64_t index, std::uint64_t mult, const DrawOutcome &o) {
        sum_ += static_cast<double>(mult) * o.value;
        draws_ += mult;
        if (o.accepted) accepted_ += mult;
        if (keep_) {
            re_.emplace_back(o.value.real(), mult);
            im_.emplace_back(o.value.imag(), mult);
        }
        if (trace_) trace_->records.push_back({index, mult, o.p_hat, o.accepted, o.x_hat, o.y_hat, o.value});
    }

    cplx mean() const { return draws_ == 0 ? cplx(0.0) : sum_ / static_cast<double>(draws_); }
    cplx median() const { return {weighted_lower_median(re_), weighted_lower_median(im_)}; }
    std::uint64_t draws() const noexcept { return draws_; }
    std::uint64_t accepted() const noexcept { return accepted_; }

private:
    bool keep_;
    PointEstimatorTrace *trace_;
    cplx sum_ = 0.0;
    std::uint64_t draws_ = 0;
    std::uint64_t accepted_ = 0;
    std::vector<std::pair<double, std::uint64_t>> re_, im_;
};

/// Runs the estimation phase over a histogram of draws. `point(i, rng)` evaluates one draw
/// (making its oracle calls); `charge(o, times)` books the calls of `times` further draws at
/// the same index when every handle answers deterministically.
template <class Point, class Charge>
void run_draws(const std::vector<IndexCount> &draws, bool deterministic, Rng &rng, DrawAccumulator &acc,
               Point &&point, Charge &&charge) {
    for (const auto &ic : draws) {
        if (deterministic) {
            const DrawOutcome o = point(ic.index, rng);
            charge(o, ic.count - 1);
            acc.add(ic.index, ic.count, o);
        } else {
            for (std::uint64_t c = 0; c < ic.count; ++c) acc.add(ic.index, 1, point(ic.index, rng));
        }
    }
}

inline double l1_over_l2(const DenseVector &v) {
    const double n = norm2(v);
    return n > 0.0 ? one_norm(v) / n : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Asymmetric inner product x^dagger y with oversample-and-query access to x and exact reads
/// of y. Two phases: prepare() fixes the norm estimate and the histogram; point() then
/// evaluates single draws. Target error eps ||y||_1 with probability 2/3.
class AsymmetricEstimator {
public:
    AsymmetricEstimator(std::shared_ptr<const AccessHandle> hx, DenseVector y, InnerProductConfig cfg)
        : hx_(std::move(hx)), y_(std::move(y)), cfg_(cfg) {
        cfg_.validate();
        if (hx_->dim() != y_.dim()) throw Error(ErrorCode::DimensionMismatch, "x and y differ in dimension");
    }

    void prepare(Rng &rng) {
        const double eps = cfg_.eps;
        n_sq_ = detail::resolve_norm_sq(*hx_, 0.25, 1.0 / 9.0, rng);
        gamma_ = eps * eps / (135.0 * n_sq_);
        hist_samples_ = detail::ceil_count(512.0 / (gamma_ * gamma_) * std::log(18.0 * static_cast<double>(y_.dim())));
        hist_ = SampleHistogram(hx_->sample_valid_counts(hist_samples_, rng, cfg_.starvation_cap));
        draws_ = detail::ceil_count(7.0 * n_sq_ / (eps * eps));
        improve_eps_ = eps / 4.0;
        improve_delta_ = std::min(0.5, eps * eps / (127.0 * n_sq_));
        prepared_ = true;
    }

    /// One draw at index i: accept iff p_hat >= 3 gamma/2, then (p_hat + gamma/2)^-1 x_hat^* y(i).
    detail::DrawOutcome point(std::size_t i, Rng &rng) const {
        require_prepared();
        detail::DrawOutcome o;
        o.p_hat = hist_.frequency(i);
        o.y_hat = y_[i];
        if (!(o.p_hat >= 1.5 * gamma_)) return o;
        o.accepted = true;
        o.x_hat = boosted_query(*hx_, i, improve_eps_, improve_delta_, rng);
        o.value = std::conj(o.x_hat) * y_[i] / (o.p_hat + 0.5 * gamma_);
        return o;
    }

    InnerProductResult run(Rng &rng) {
        LedgerWindow window({hx_->ledger_ptr()});
        prepare(rng);
        InnerProductResult res;
        res.trace.threshold = 1.5 * gamma_;
        detail::DrawAccumulator acc(false, cfg_.record_trace ? &res.trace : nullptr);
        const auto draws = hx_->sample_valid_counts(draws_, rng, cfg_.starvation_cap);
        detail::run_draws(
            draws, hx_->deterministic_queries(), rng, acc, [&](std::size_t i, Rng &g) { return point(i, g); },
            [&](const detail::DrawOutcome &o, std::uint64_t times) {
                if (o.accepted) detail::charge_boosted(*hx_, improve_eps_, improve_delta_, times);
            });
        res.report.estimate = acc.mean();
        res.report.error_bound = cfg_.eps * one_norm(y_);
        res.report.ledger = window.collect();
        res.n_sq_x = n_sq_;
        res.gamma = gamma_;
        res.histogram_samples = hist_samples_;
        res.draws = acc.draws();
        res.accepted_draws = acc.accepted();
        return res;
    }

    double gamma() const noexcept { return gamma_; }
    double n_sq() const noexcept { return n_sq_; }
    std::uint64_t histogram_samples() const noexcept { return hist_samples_; }
    std::uint64_t draw_count() const noexcept { return draws_; }
    const SampleHistogram &histogram() const noexcept { return hist_; }

private:
    void require_prepared() const {
        if (!prepared_) throw Error(ErrorCode::InvalidArgument, "estimator used before prepare()");
    }

    std::shared_ptr<const AccessHandle> hx_;
    DenseVector y_;
    InnerProductConfig cfg_;
    bool prepared_ = false;
    double n_sq_ = 0.0, gamma_ = 0.0, improve_eps_ = 0.0, improve_delta_ = 0.0;
    std::uint64_t hist_samples_ = 0, draws_ = 0;
    SampleHistogram hist_;
};

inline InnerProductResult inner_product_asym(std::shared_ptr<const AccessHandle> hx, const DenseVector &y,
                                             const InnerProductConfig &cfg, Rng &rng) {
    AsymmetricEstimator est(std::move(hx), y, cfg);
    return est.run(rng);
}

/// Symmetric inner product x^dagger y with oversample-and-query access to both vectors.
/// Target error eps (1 + min(||x||_1/||x||, ||y||_1/||y||)) with probability 2/3.
///
/// The per-draw values are averaged by default; Reduction::Median takes the componentwise
/// lower median instead, which is not an unbiased reduction of this point estimator.
class SymmetricEstimator {
public:
    SymmetricEstimator(std::shared_ptr<const AccessHandle> hx, std::shared_ptr<const AccessHandle> hy,
                       InnerProductConfig cfg)
        : hx_(std::move(hx)), hy_(std::move(hy)), cfg_(cfg) {
        cfg_.validate();
        if (hx_->dim() != hy_->dim()) throw Error(ErrorCode::DimensionMismatch, "x and y differ in dimension");
    }

    void prepare(Rng &rng) {
        const double eps = cfg_.eps;
        nx_sq_ = detail::resolve_norm_sq(*hx_, 0.5, 1.0 / 18.0, rng);
        ny_sq_ = detail::resolve_norm_sq(*hy_, 0.5, 1.0 / 18.0, rng);
        gamma_ = std::min(1.0, 1.0 / nx_sq_) * std::min(1.0, 1.0 / ny_sq_) * eps * eps / 100.0;
        eps_x_ = eps * std::sqrt(gamma_) * std::min(1.0, 1.0 / std::sqrt(ny_sq_)) / 100.0;
        eps_y_ = eps * std::sqrt(gamma_) * std::min(1.0, 1.0 / std::sqrt(nx_sq_)) / 100.0;
        hist_samples_ = detail::ceil_count(32.0 / (gamma_ * gamma_) * std::log(18.0 * static_cast<double>(hx_->dim())));
        hist_ = SampleHistogram(detail::mixture_counts(*hx_, *hy_, hist_samples_, rng, cfg_.starvation_cap));
        draws_ = detail::ceil_count(864.0 * (1.0 + 2.0 * nx_sq_) * (1.0 + 2.0 * ny_sq_) / (eps * eps));
        improve_delta_ = 1.0 / (18.0 * static_cast<double>(draws_));
        prepared_ = true;
    }

    /// One draw at index i: reject iff p_hat <= 3 gamma/2, else (p_hat + gamma/2)^-1 x_hat^* y_hat.
    detail::DrawOutcome point(std::size_t i, Rng &rng) const {
        require_prepared();
        detail::DrawOutcome o;
        o.p_hat = hist_.frequency(i);
        if (o.p_hat <= 1.5 * gamma_) return o;
        o.accepted = true;
        o.x_hat = boosted_query(*hx_, i, eps_x_, improve_delta_, rng);
        o.y_hat = boosted_query(*hy_, i, eps_y_, improve_delta_, rng);
        o.value = std::conj(o.x_hat) * o.y_hat / (o.p_hat + 0.5 * gamma_);
        return o;
    }

    InnerProductResult run(Rng &rng) {
        LedgerWindow window({hx_->ledger_ptr(), hy_->ledger_ptr()});
        prepare(rng);
        InnerProductResult res;
        res.trace.threshold = 1.5 * gamma_;
        detail::DrawAccumulator acc(cfg_.reduction == Reduction::Median, cfg_.record_trace ? &res.trace : nullptr);
        const auto draws = detail::mixture_counts(*hx_, *hy_, draws_, rng, cfg_.starvation_cap);
        const bool det = hx_->deterministic_queries() && hy_->deterministic_queries();
        detail::run_draws(
            draws, det, rng, acc, [&](std::size_t i, Rng &g) { return point(i, g); },
            [&](const detail::DrawOutcome &o, std::uint64_t times) {
                if (!o.accepted) return;
                detail::charge_boosted(*hx_, eps_x_, improve_delta_, times);
                detail::charge_boosted(*hy_, eps_y_, improve_delta_, times);
            });
        res.report.estimate = cfg_.reduction == Reduction::Median ? acc.median() : acc.mean();
        res.report.error_bound = cfg_.eps * (1.0 + bound_ratio());
        res.report.ledger = window.collect();
        res.n_sq_x = nx_sq_;
        res.n_sq_y = ny_sq_;
        res.gamma = gamma_;
        res.histogram_samples = hist_samples_;
        res.draws = acc.draws();
        res.accepted_draws = acc.accepted();
        return res;
    }

    double gamma() const noexcept { return gamma_; }
    double eps_x() const noexcept { return eps_x_; }
    double eps_y() const noexcept { return eps_y_; }
    std::uint64_t histogram_samples() const noexcept { return hist_samples_; }
    std::uint64_t draw_count() const noexcept { return draws_; }

private:
    /// min(||x||_1/||x||, ||y||_1/||y||) from stored vectors, or sqrt(d) without them.
    double bound_ratio() const {
        const auto tx = hx_->ground_truth();
        const auto ty = hy_->ground_truth();
        if (tx && ty) return std::min(detail::l1_over_l2(tx->x), detail::l1_over_l2(ty->x));
        return std::sqrt(static_cast<double>(hx_->dim()));
    }

    void require_prepared() const {
        if (!prepared_) throw Error(ErrorCode::InvalidArgument, "estimator used before prepare()");
    }

    std::shared_ptr<const AccessHandle> hx_, hy_;
    InnerProductConfig cfg_;
    bool prepared_ = false;
    double nx_sq_ = 0.0, ny_sq_ = 0.0, gamma_ = 0.0, eps_x_ = 0.0, eps_y_ = 0.0, improve_delta_ = 0.0;
    std::uint64_t hist_samples_ = 0, draws_ = 0;
    SampleHistogram hist_;
};

inline InnerProductResult inner_product_sym(std::shared_ptr<const AccessHandle> hx,
                                            std::shared_ptr<const AccessHandle> hy, const InnerProductConfig &cfg,
                                            Rng &rng) {
    SymmetricEstimator est(std::move(hx), std::move(hy), cfg);
    return est.run(rng);
}

/// x^T y for real unit vectors, from a fair-coin mixture of the two samplers. Each draw
/// queries both entries to C2 eps^2/kappa, sets p_hat = (x_hat^2 + y_hat^2)/2, rejects when
/// sqrt(p_hat) <= 3 gamma/2 with gamma = C1 eps/kappa, and otherwise contributes
/// x_hat y_hat / p_hat. Target error eps + delta with probability 2/3.
class RealExactEstimator {
public:
    RealExactEstimator(std::shared_ptr<const AccessHandle> hx, std::shared_ptr<const AccessHandle> hy,
                       InnerProductConfig cfg)
        : hx_(std::move(hx)), hy_(std::move(hy)), cfg_(cfg) {
        cfg_.validate();
        if (hx_->dim() != hy_->dim()) throw Error(ErrorCode::DimensionMismatch, "x and y differ in dimension");
        for (const auto *h : {hx_.get(), hy_.get()}) {
            if (auto t = h->ground_truth()) {
                if (std::abs(norm2(t->x) - 1.0) > 1e-9) throw Error(ErrorCode::NonUnitNorm, "input vector is not unit");
            }
        }
        if (cfg_.kappa) {
            kappa_ = *cfg_.kappa;
        } else {
            const auto tx = hx_->ground_truth();
            const auto ty = hy_->ground_truth();
            if (!tx || !ty) throw Error(ErrorCode::InvalidArgument, "kappa must be supplied");
            kappa_ = std::min(one_norm(tx->x), one_norm(ty->x));
        }
        if (!(kappa_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "kappa must be positive");
        const double eps = cfg_.eps;
        gamma_ = cfg_.c1 * eps / kappa_;
        eps_q_ = cfg_.c2 * eps * eps / kappa_;
        draws_ = detail::ceil_count(cfg_.real_draws_constant / (eps * eps));
        query_delta_ = 1.0 / (36.0 * static_cast<double>(draws_));
    }

    detail::DrawOutcome point(std::size_t i, Rng &rng) const {
        detail::DrawOutcome o;
        o.x_hat = boosted_query(*hx_, i, eps_q_, query_delta_, rng).real();
        o.y_hat = boosted_query(*hy_, i, eps_q_, query_delta_, rng).real();
        const double a = o.x_hat.real(), b = o.y_hat.real();
        o.p_hat = 0.5 * (a * a + b * b);
        if (std::sqrt(o.p_hat) <= 1.5 * gamma_) return o;
        o.accepted = true;
        o.value = a * b / o.p_hat;
        return o;
    }

    InnerProductResult run(Rng &rng) const {
        LedgerWindow window({hx_->ledger_ptr(), hy_->ledger_ptr()});
        InnerProductResult res;
        res.trace.threshold = 1.5 * gamma_;
        detail::DrawAccumulator acc(false, cfg_.record_trace ? &res.trace : nullptr);
        const auto draws = detail::mixture_counts(*hx_, *hy_, draws_, rng, cfg_.starvation_cap);
        const bool det = hx_->deterministic_queries() && hy_->deterministic_queries();
        detail::run_draws(
            draws, det, rng, acc, [&](std::size_t i, Rng &g) { return point(i, g); },
            [&](const detail::DrawOutcome &, std::uint64_t times) {
                detail::charge_boosted(*hx_, eps_q_, query_delta_, times);
                detail::charge_boosted(*hy_, eps_q_, query_delta_, times);
            });
        res.report.estimate = acc.mean().real();
        res.report.error_bound = cfg_.eps + cfg_.delta;
        res.report.ledger = window.collect();
        res.gamma = gamma_;
        res.draws = acc.draws();
        res.accepted_draws = acc.accepted();
        return res;
    }

    double kappa() const noexcept { return kappa_; }
    double gamma() const noexcept { return gamma_; }
    double query_eps() const noexcept { return eps_q_; }
    double query_delta() const noexcept { return query_delta_; }
    std::uint64_t draw_count() const noexcept { return draws_; }

private:
    std::shared_ptr<const AccessHandle> hx_, hy_;
    InnerProductConfig cfg_;
    double kappa_ = 0.0, gamma_ = 0.0, eps_q_ = 0.0, query_delta_ = 0.0;
    std::uint64_t draws_ = 0;
};

inline InnerProductResult inner_product_real_exact(std::shared_ptr<const AccessHandle> hx,
                                                   std::shared_ptr<const AccessHandle> hy,
                                                   const InnerProductConfig &cfg, Rng &rng) {
    return RealExactEstimator(std::move(hx), std::move(hy), cfg).run(rng);
}

/// Sampling-distribution TVD allowed for the asymmetric estimator under perturbed sampling.
inline double perturbation_budget_asym(double eps, double phi, double c1 = 1.0 / 8.0) {
    return c1 * eps / std::sqrt(phi);
}

/// Per-handle TVD allowed for the symmetric estimator under perturbed sampling.
inline double perturbation_budget_sym(double eps, double phi, double c1 = 1.0 / 8.0) { return c1 * eps / phi; }

namespace detail {

inline double phi_of(const InnerProductConfig &cfg, const AccessHandle &h) {
    const double phi = cfg.phi_bound ? *cfg.phi_bound : h.phi();
    if (!(phi >= 1.0) || !std::isfinite(phi)) throw Error(ErrorCode::InvalidArgument, "phi bound must be finite and >= 1");
    return phi;
}

inline void check_declared_budget(const AccessHandle &h, double allowed) {
    if (const auto *p = dynamic_cast<const PerturbedHandle *>(&h)) {
        if (p->budget() > allowed * (1.0 + 1e-12))
            throw Error(ErrorCode::BudgetExceeded, "handle budget " + std::to_string(p->budget()) +
                                                       " exceeds allowed " + std::to_string(allowed));
    }
}

}  // namespace detail

/// Asymmetric estimator for sampling from D_{x'} close to D_{x_tilde}: thresholds at
/// eps_P = C3 eps^2/phi, entries to C2 eps, histogram of 512 eps_P^-2 ln(18d), ceil(7 phi eps^-2) draws.
inline InnerProductResult inner_product_asym_perturbed(std::shared_ptr<const AccessHandle> hx, const DenseVector &y,
                                                       const InnerProductConfig &cfg, Rng &rng) {
    cfg.validate();
    if (hx->dim() != y.dim()) throw Error(ErrorCode::DimensionMismatch, "x and y differ in dimension");
    const double eps = cfg.eps;
    const double phi = detail::phi_of(cfg, *hx);
    detail::check_declared_budget(*hx, perturbation_budget_asym(eps, phi, cfg.c1));
    LedgerWindow window({hx->ledger_ptr()});

    const double eps_p = cfg.c3 * eps * eps / phi;
    const double eps_q = cfg.c2 * eps;
    const std::uint64_t hist_n =
        detail::ceil_count(512.0 / (eps_p * eps_p) * std::log(18.0 * static_cast<double>(y.dim())));
    const SampleHistogram hist(hx->sample_valid_counts(hist_n, rng, cfg.starvation_cap));
    const std::uint64_t m = detail::ceil_count(7.0 * phi / (eps * eps));
    const double q_delta = 1.0 / (18.0 * static_cast<double>(m));

    InnerProductResult res;
    res.trace.threshold = 1.5 * eps_p;
    detail::DrawAccumulator acc(false, cfg.record_trace ? &res.trace : nullptr);
    auto point = [&](std::size_t i, Rng &g) {
        detail::DrawOutcome o;
        o.p_hat = hist.frequency(i);
        o.y_hat = y[i];
        if (o.p_hat <= 1.5 * eps_p) return o;
        o.accepted = true;
        o.x_hat = boosted_query(*hx, i, eps_q, q_delta, g);
        o.value = std::conj(o.x_hat) * y[i] / (o.p_hat + 0.5 * eps_p);
        return o;
    };
    const auto draws = hx->sample_valid_counts(m, rng, cfg.starvation_cap);
    detail::run_draws(draws, hx->deterministic_queries(), rng, acc, point,
                      [&](const detail::DrawOutcome &o, std::uint64_t times) {
                          if (o.accepted) detail::charge_boosted(*hx, eps_q, q_delta, times);
                      });
    res.report.estimate = acc.mean();
    res.report.error_bound = eps * one_norm(y);
    res.report.ledger = window.collect();
    res.gamma = eps_p;
    res.histogram_samples = hist_n;
    res.draws = acc.draws();
    res.accepted_draws = acc.accepted();
    return res;
}

/// Symmetric estimator for sampling from D_{x'}, D_{y'} close to D_{x_tilde}, D_{y_tilde}:
/// gamma = C2 eps^2/phi, entries to C3 eps^2/phi, histogram of 32 gamma^-2 ln(18d),
/// ceil(864 (1 + 2 phi)^2 eps^-2) draws.
inline InnerProductResult inner_product_sym_perturbed(std::shared_ptr<const AccessHandle> hx,
                                                      std::shared_ptr<const AccessHandle> hy,
                                                      const InnerProductConfig &cfg, Rng &rng) {
    cfg.validate();
    if (hx->dim() != hy->dim()) throw Error(ErrorCode::DimensionMismatch, "x and y differ in dimension");
    const double eps = cfg.eps;
    const double phi = std::max(detail::phi_of(cfg, *hx), detail::phi_of(cfg, *hy));
    const double allowed = perturbation_budget_sym(eps, phi, cfg.c1);
    detail::check_declared_budget(*hx, allowed);
    detail::check_declared_budget(*hy, allowed);
    LedgerWindow window({hx->ledger_ptr(), hy->ledger_ptr()});

    const double gamma = cfg.c2 * eps * eps / phi;
    const double eps_q = cfg.c3 * eps * eps / phi;
    const std::uint64_t hist_n =
        detail::ceil_count(32.0 / (gamma * gamma) * std::log(18.0 * static_cast<double>(hx->dim())));
    const SampleHistogram hist(detail::mixture_counts(*hx, *hy, hist_n, rng, cfg.starvation_cap));
    const std::uint64_t m = detail::ceil_count(864.0 * (1.0 + 2.0 * phi) * (1.0 + 2.0 * phi) / (eps * eps));
    const double q_delta = 1.0 / (18.0 * static_cast<double>(m));

    InnerProductResult res;
    res.trace.threshold = 1.5 * gamma;
    detail::DrawAccumulator acc(cfg.reduction == Reduction::Median, cfg.record_trace ? &res.trace : nullptr);
    auto point = [&](std::size_t i, Rng &g) {
        detail::DrawOutcome o;
        o.p_hat = hist.frequency(i);
        if (o.p_hat <= 1.5 * gamma) return o;
        o.accepted = true;
        o.x_hat = boosted_query(*hx, i, eps_q, q_delta, g);
        o.y_hat = boosted_query(*hy, i, eps_q, q_delta, g);
        o.value = std::conj(o.x_hat) * o.y_hat / (o.p_hat + 0.5 * gamma);
        return o;
    };
    const auto draws = detail::mixture_counts(*hx, *hy, m, rng, cfg.starvation_cap);
    const bool det = hx->deterministic_queries() && hy->deterministic_queries();
    detail::run_draws(draws, det, rng, acc, point, [&](const detail::DrawOutcome &o, std::uint64_t times) {
        if (!o.accepted) return;
        detail::charge_boosted(*hx, eps_q, q_delta, times);
        detail::charge_boosted(*hy, eps_q, q_delta, times);
    });
    res.report.estimate = cfg.reduction == Reduction::Median ? acc.median() : acc.mean();
    double l1 = std::sqrt(static_cast<double>(hx->dim()));
    if (auto tx = hx->ground_truth(), ty = hy->ground_truth(); tx && ty)
        l1 = std::min(one_norm(tx->x), one_norm(ty->x));
    res.report.error_bound = eps * (1.0 + l1);
    res.report.ledger = window.collect();
    res.gamma = gamma;
    res.histogram_samples = hist_n;
    res.draws = acc.draws();
    res.accepted_draws = acc.accepted();
    return res;
}

}  // namespace asq
