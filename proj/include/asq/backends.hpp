#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

#include "asq/access.hpp"
#include "asq/errors.hpp"
#include "asq/numeric.hpp"
#include "asq/rng.hpp"

namespace asq {

/// Sampler for a fixed l2 law behind a per-attempt success probability (post-selection).
class LawSampler {
public:
    LawSampler(const DenseVector &v, double success_prob, double attempt_cost = 0.0)
        : success_(success_prob), attempt_cost_(attempt_cost) {
        std::vector<double> w(v.dim());
        for (std::size_t i = 0; i < v.dim(); ++i) w[i] = std::norm(v[i]);
        law_ = DiscreteLaw(w);
        if (law_.total() <= 0.0) success_ = 0.0;
    }

    double success_probability() const noexcept { return success_; }
    const DiscreteLaw &law() const noexcept { return law_; }

    SampleOutcome draw(Rng &rng, CostLedger &ledger) const {
        ledger.add_cost(attempt_cost_);
        if (success_ < 1.0 && !bernoulli(rng, success_)) {
            ledger.record_sample(false);
            return SampleOutcome::failed();
        }
        ledger.record_sample(true);
        return SampleOutcome::at(law_.sample(rng));
    }

    /// Statistically identical to retrying draw() until n successes, without the loop.
    std::vector<IndexCount> valid_counts(std::uint64_t n, Rng &rng, std::uint32_t cap, CostLedger &ledger) const {
        if (n == 0) return {};
        if (success_ <= 0.0) {
            ledger.record_samples(cap, cap);
            ledger.add_cost(attempt_cost_ * cap);
            throw Error(ErrorCode::SamplerStarvation, "sampler never succeeds");
        }
        std::uint64_t failures = 0;
        if (success_ < 1.0) {
            // Some success is preceded by >= cap failures with probability 1 - (1 - (1-p)^cap)^n.
            const double run = std::pow(1.0 - success_, static_cast<double>(cap));
            const double starve = -std::expm1(static_cast<double>(n) * std::log1p(-run));
            if (starve > 0.0 && bernoulli(rng, starve)) {
                ledger.record_samples(cap, cap);
                ledger.add_cost(attempt_cost_ * cap);
                throw Error(ErrorCode::SamplerStarvation,
                            std::to_string(cap) + " consecutive failed sampling attempts");
            }
            std::negative_binomial_distribution<std::uint64_t> nb(n, success_);
            failures = nb(rng);
        }
        ledger.record_samples(n + failures, failures);
        ledger.add_cost(attempt_cost_ * static_cast<double>(n + failures));
        return law_.counts(n, rng);
    }

private:
    DiscreteLaw law_;
    double success_;
    double attempt_cost_;
};

/// Exact SQ-style access: queries and norms are exact, sampling never fails.
class ExactHandle final : public AccessHandle {
public:
    explicit ExactHandle(DenseVector x, std::shared_ptr<CostLedger> ledger = nullptr)
        : AccessHandle(std::move(ledger)), x_(std::move(x)), sampler_(x_, 1.0), norm_sq_(norm2sq(x_)) {}

    std::size_t dim() const override { return x_.dim(); }
    double phi() const override { return 1.0; }

    SampleOutcome sample(Rng &rng) const override {
        if (norm_sq_ == 0.0) {
            ledger().record_sample(false);
            return SampleOutcome::failed();
        }
        return sampler_.draw(rng, ledger());
    }

    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                std::uint32_t cap = kDefaultStarvationCap) const override {
        return sampler_.valid_counts(n, rng, cap, ledger());
    }

    QueryResult query(std::size_t i, double eps, Rng &) const override {
        check_index(i);
        ledger().record_query(eps);
        return {x_[i], eps};
    }

    void query_many(std::size_t i, double eps, std::span<cplx> out, Rng &) const override {
        check_index(i);
        ledger().record_query(eps, out.size());
        std::fill(out.begin(), out.end(), x_[i]);
    }

    double norm_sq(double eps, Rng &) const override {
        ledger().record_norm(eps);
        return norm_sq_;
    }

    bool deterministic_queries() const override { return true; }
    std::optional<GroundTruth> ground_truth() const override { return GroundTruth{x_, x_, x_}; }

    const DenseVector &vector() const noexcept { return x_; }

private:
    DenseVector x_;
    LawSampler sampler_;
    double norm_sq_;
};

inline std::shared_ptr<ExactHandle> make_exact(DenseVector x, std::shared_ptr<CostLedger> ledger = nullptr) {
    return std::make_shared<ExactHandle>(std::move(x), std::move(ledger));
}

/// Samples from a dominating vector x_tilde while queries still target the inner vector x.
class OversampledHandle final : public AccessHandle {
public:
    OversampledHandle(std::shared_ptr<const AccessHandle> inner, DenseVector x_tilde)
        : AccessHandle(inner->ledger_ptr()), inner_(std::move(inner)), x_tilde_(std::move(x_tilde)),
          sampler_(x_tilde_, 1.0) {
        const auto truth = inner_->ground_truth();
        if (!truth) throw Error(ErrorCode::InvalidArgument, "oversampling needs a handle with stored vector");
        require_same_dim(truth->x, x_tilde_);
        for (std::size_t i = 0; i < x_tilde_.dim(); ++i) {
            if (std::abs(x_tilde_[i]) < std::abs(truth->x[i]) - 1e-12)
                throw Error(ErrorCode::DominanceViolation, "|x_tilde(" + std::to_string(i) + ")| < |x(i)|");
        }
        x_ = truth->x;
        const double nx = norm2sq(x_);
        tilde_norm_sq_ = norm2sq(x_tilde_);
        phi_ = nx > 0.0 ? std::max(1.0, tilde_norm_sq_ / nx) : std::numeric_limits<double>::infinity();
    }

    std::size_t dim() const override { return x_tilde_.dim(); }
    double phi() const override { return phi_; }

    SampleOutcome sample(Rng &rng) const override { return sampler_.draw(rng, ledger()); }
    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                std::uint32_t cap = kDefaultStarvationCap) const override {
        return sampler_.valid_counts(n, rng, cap, ledger());
    }

    QueryResult query(std::size_t i, double eps, Rng &rng) const override { return inner_->query(i, eps, rng); }
    void query_many(std::size_t i, double eps, std::span<cplx> out, Rng &rng) const override {
        inner_->query_many(i, eps, out, rng);
    }

    double norm_sq(double eps, Rng &) const override {
        ledger().record_norm(eps);
        return tilde_norm_sq_;
    }

    bool deterministic_queries() const override { return inner_->deterministic_queries(); }
    std::optional<GroundTruth> ground_truth() const override { return GroundTruth{x_, x_tilde_, x_tilde_}; }

private:
    std::shared_ptr<const AccessHandle> inner_;
    DenseVector x_tilde_;
    DenseVector x_ = x_tilde_;
    LawSampler sampler_;
    double tilde_norm_sq_ = 0.0;
    double phi_ = 1.0;
};

inline std::shared_ptr<OversampledHandle> wrap_oversampled(std::shared_ptr<const AccessHandle> inner,
                                                           DenseVector x_tilde) {
    return std::make_shared<OversampledHandle>(std::move(inner), std::move(x_tilde));
}

/// Samples from D_{x'} instead of D_{x_tilde}; queries and norms go to the inner handle.
class PerturbedHandle final : public AccessHandle {
public:
    PerturbedHandle(std::shared_ptr<const AccessHandle> inner, DenseVector x_prime, double budget)
        : AccessHandle(inner->ledger_ptr()), inner_(std::move(inner)), x_prime_(std::move(x_prime)),
          sampler_(x_prime_, 1.0), budget_(budget) {
        const auto truth = inner_->ground_truth();
        if (!truth) throw Error(ErrorCode::InvalidArgument, "perturbation needs a handle with stored vector");
        require_same_dim(truth->x_tilde, x_prime_);
        realized_ = tvd(l2_distribution(truth->x_tilde), l2_distribution(x_prime_));
        if (!(realized_ <= budget_))
            throw Error(ErrorCode::BudgetExceeded,
                        "tvd " + std::to_string(realized_) + " exceeds budget " + std::to_string(budget_));
        truth_ = GroundTruth{truth->x, truth->x_tilde, x_prime_};
    }

    std::size_t dim() const override { return inner_->dim(); }
    double phi() const override { return inner_->phi(); }

    SampleOutcome sample(Rng &rng) const override { return sampler_.draw(rng, ledger()); }
    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                std::uint32_t cap = kDefaultStarvationCap) const override {
        return sampler_.valid_counts(n, rng, cap, ledger());
    }

    QueryResult query(std::size_t i, double eps, Rng &rng) const override { return inner_->query(i, eps, rng); }
    void query_many(std::size_t i, double eps, std::span<cplx> out, Rng &rng) const override {
        inner_->query_many(i, eps, out, rng);
    }
    double norm_sq(double eps, Rng &rng) const override { return inner_->norm_sq(eps, rng); }

    bool deterministic_queries() const override { return inner_->deterministic_queries(); }
    std::optional<GroundTruth> ground_truth() const override { return truth_; }

    double budget() const noexcept { return budget_; }
    double realized_tvd() const noexcept { return realized_; }

private:
    std::shared_ptr<const AccessHandle> inner_;
    DenseVector x_prime_;
    LawSampler sampler_;
    double budget_;
    double realized_ = 0.0;
    std::optional<GroundTruth> truth_;
};

inline std::shared_ptr<PerturbedHandle> wrap_perturbed(std::shared_ptr<const AccessHandle> inner,
                                                       DenseVector x_prime, double budget) {
    return std::make_shared<PerturbedHandle>(std::move(inner), std::move(x_prime), budget);
}

/// Query corruption for booster tests: with probability p_fail a raw answer sits exactly
/// 3 eps from the truth, otherwise it is uniform in the eps-disc. Sampling and norms are exact.
class FaultInjectingHandle final : public AccessHandle {
public:
    FaultInjectingHandle(DenseVector x, double p_fail, std::shared_ptr<CostLedger> ledger = nullptr)
        : AccessHandle(std::move(ledger)), x_(std::move(x)), sampler_(x_, 1.0), p_fail_(p_fail) {
        if (!(p_fail >= 0.0 && p_fail <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p_fail outside [0,1]");
    }

    std::size_t dim() const override { return x_.dim(); }
    double phi() const override { return 1.0; }
    SampleOutcome sample(Rng &rng) const override { return sampler_.draw(rng, ledger()); }
    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                std::uint32_t cap = kDefaultStarvationCap) const override {
        return sampler_.valid_counts(n, rng, cap, ledger());
    }

    QueryResult query(std::size_t i, double eps, Rng &rng) const override {
        check_index(i);
        ledger().record_query(eps);
        if (bernoulli(rng, p_fail_)) return {x_[i] + 3.0 * eps * random_unit_phase(rng), eps};
        return {x_[i] + uniform_in_disc(rng, eps), eps};
    }

    double norm_sq(double eps, Rng &) const override {
        ledger().record_norm(eps);
        return norm2sq(x_);
    }

    std::optional<GroundTruth> ground_truth() const override { return GroundTruth{x_, x_, x_}; }

private:
    DenseVector x_;
    LawSampler sampler_;
    double p_fail_;
};

/// Sparse estimate of |x(i)| from computational-basis measurement frequencies.
struct AmplitudeTable {
    std::vector<std::pair<std::uint64_t, double>> entries;  // sorted by index, nonzero only
    std::uint64_t shots = 0;
    double eps = 0.0;
    std::size_t reference = 0;  // index of the largest entry, lowest index on ties

    double at(std::uint64_t i) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(i, -1.0));
        return it != entries.end() && it->first == i ? it->second : 0.0;
    }

    /// Copy with entries below `threshold` set to zero and the reference index recomputed.
    AmplitudeTable rounded_below(double threshold) const {
        AmplitudeTable t{{}, shots, eps, 0};
        for (const auto &e : entries)
            if (e.second >= threshold) t.entries.push_back(e);
        t.reference = pick_reference(t.entries);
        return t;
    }

    static std::size_t pick_reference(const std::vector<std::pair<std::uint64_t, double>> &entries) {
        std::size_t best = 0;
        double best_v = -1.0;
        for (const auto &[i, v] : entries) {
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        return best;
    }
};

inline std::uint64_t tomography_shots(std::size_t d, double eps, double delta) {
    return static_cast<std::uint64_t>(std::ceil(8.0 / (eps * eps) * std::log(2.0 * static_cast<double>(d) / delta)));
}

/// Simulated state preparation plus computational-basis measurement of a (sub)normalized
/// vector. Sampling post-selects with success ||x||^2; queries return x(i) e^{-i theta}
/// where theta makes the entry at the reference index real and non-negative.
class PrepMeasureBackend final : public AccessHandle {
public:
    explicit PrepMeasureBackend(DenseVector x, double prep_cost = 1.0, std::shared_ptr<CostLedger> ledger = nullptr)
        : AccessHandle(std::move(ledger)), x_(std::move(x)), norm_sq_(norm2sq(x_)),
          sampler_(x_, std::min(1.0, norm2sq(x_)), prep_cost), prep_cost_(prep_cost) {
        if (norm_sq_ > 1.0 + 1e-9) throw Error(ErrorCode::NotSubnormalized, "state norm exceeds 1");
        normalized_ = std::abs(norm_sq_ - 1.0) <= 1e-12;
    }

    std::size_t dim() const override { return x_.dim(); }
    double phi() const override { return 1.0; }
    double prep_cost() const noexcept { return prep_cost_; }
    bool normalized() const noexcept { return normalized_; }
    double success_probability() const noexcept { return sampler_.success_probability(); }

    SampleOutcome sample(Rng &rng) const override { return sampler_.draw(rng, ledger()); }
    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                std::uint32_t cap = kDefaultStarvationCap) const override {
        return sampler_.valid_counts(n, rng, cap, ledger());
    }

    /// Normalized states have known norm 1 at no cost; otherwise a post-selection rate estimate.
    double norm_sq(double eps, Rng &rng) const override {
        ledger().record_norm(eps);
        if (normalized_) return 1.0;
        const auto shots = static_cast<std::uint64_t>(std::ceil(std::log(6.0) / (2.0 * eps * eps)));
        std::binomial_distribution<std::uint64_t> bin(shots, sampler_.success_probability());
        ledger().add_cost(prep_cost_ * static_cast<double>(shots));
        return static_cast<double>(bin(rng)) / static_cast<double>(shots);
    }

    QueryResult query(std::size_t i, double eps, Rng &rng) const override {
        check_index(i);
        ledger().record_query(eps);
        return {query_amplitude(table_for(eps, rng), i, eps, rng), eps};
    }

    /// ceil(8 eps^-2 ln(2d/delta)) measurements; entry i is sqrt of its empirical frequency.
    AmplitudeTable estimate_abs_amplitudes(double eps, double delta, Rng &rng) const {
        if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
        if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
        AmplitudeTable t;
        t.eps = eps;
        t.shots = tomography_shots(dim(), eps, delta);
        ledger().add_cost(prep_cost_ * static_cast<double>(t.shots));
        std::uint64_t hits = t.shots;
        if (sampler_.success_probability() < 1.0) {
            std::binomial_distribution<std::uint64_t> bin(t.shots, sampler_.success_probability());
            hits = bin(rng);
        }
        if (hits > 0) {
            for (const auto &c : sampler_.law().counts(hits, rng))
                t.entries.emplace_back(c.index, std::sqrt(static_cast<double>(c.count) / static_cast<double>(t.shots)));
        }
        t.reference = AmplitudeTable::pick_reference(t.entries);
        return t;
    }

    /// Phase-consistent entry estimate from a table learned to eps/16 and rounded at eps/2.
    cplx query_amplitude(const AmplitudeTable &tbl, std::size_t i, double eps, Rng &rng) const {
        check_index(i);
        const double ri = tbl.at(i);
        if (ri == 0.0) return 0.0;
        const std::size_t m = tbl.reference;
        const double rm = tbl.at(m);
        if (i == m) return rm;
        // Interferometer outcome-1 probabilities: |x_m - x_i|^2/2 and |x_m - i x_i|^2/2.
        const double p_s = 0.5 * std::norm(x_[m] - x_[i]);
        const double p_t = 0.5 * std::norm(x_[m] - cplx(0.0, 1.0) * x_[i]);
        const double delta_prime = 1.0 / 18.0;
        const auto shots = static_cast<std::uint64_t>(
            std::ceil(8.0 * std::log(2.0 / delta_prime) / (eps * eps * rm * rm)));
        std::binomial_distribution<std::uint64_t> bs(shots, std::min(1.0, p_s));
        std::binomial_distribution<std::uint64_t> bt(shots, std::min(1.0, p_t));
        const double s2 = 2.0 * static_cast<double>(bs(rng)) / static_cast<double>(shots);
        const double t2 = 2.0 * static_cast<double>(bt(rng)) / static_cast<double>(shots);
        ledger().add_cost(2.0 * prep_cost_ * static_cast<double>(shots));
        const double re = (rm * rm + ri * ri - s2) / (2.0 * rm);
        const double im = (t2 - rm * rm - ri * ri) / (2.0 * rm);
        return {re, im};
    }

    /// Rounded table used by queries at precision eps; learned once per eps and then reused.
    const AmplitudeTable &table_for(double eps, Rng &rng) const {
        std::lock_guard lock(mu_);
        auto it = tables_.find(eps);
        if (it == tables_.end())
            it = tables_.emplace(eps, estimate_abs_amplitudes(eps / 16.0, 1.0 / 9.0, rng).rounded_below(eps / 2.0)).first;
        return it->second;
    }

    std::optional<GroundTruth> ground_truth() const override { return GroundTruth{x_, x_, x_}; }

private:
    DenseVector x_;
    double norm_sq_;
    LawSampler sampler_;
    double prep_cost_;
    bool normalized_ = false;
    mutable std::mutex mu_;
    mutable std::map<double, AmplitudeTable> tables_;
};

/// Block encoding of a d x d matrix with rows and columns of norm at most 1.
class MatrixBlockEncoding {
public:
    MatrixBlockEncoding(std::size_t rows, std::size_t cols, std::vector<cplx> entries, double prep_cost = 1.0,
                        std::shared_ptr<CostLedger> ledger = nullptr)
        : rows_(rows), cols_(cols), a_(std::move(entries)), prep_cost_(prep_cost),
          ledger_(ledger ? std::move(ledger) : std::make_shared<CostLedger>()) {
        if (rows_ == 0 || cols_ == 0 || a_.size() != rows_ * cols_)
            throw Error(ErrorCode::DimensionMismatch, "matrix entries do not match rows x cols");
        if (rows_ != cols_) throw Error(ErrorCode::DimensionMismatch, "block encoding needs a square matrix");
        row_norm_sq_.assign(rows_, 0.0);
        std::vector<double> col_norm_sq(cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t k = 0; k < cols_; ++k) {
                const double w = std::norm(a_[i * cols_ + k]);
                row_norm_sq_[i] += w;
                col_norm_sq[k] += w;
            }
        }
        for (std::size_t i = 0; i < rows_; ++i) {
            if (row_norm_sq_[i] > 1.0 + 1e-9) throw Error(ErrorCode::NotSubnormalized, "row norm exceeds 1");
            std::vector<double> w(cols_);
            for (std::size_t k = 0; k < cols_; ++k) w[k] = std::norm(a_[i * cols_ + k]);
            row_laws_.emplace_back(w);
        }
        for (double c : col_norm_sq)
            if (c > 1.0 + 1e-9) throw Error(ErrorCode::NotSubnormalized, "column norm exceeds 1");
        frobenius_sq_ = 0.0;
        for (double c : col_norm_sq) frobenius_sq_ += c;
        col_norm_sq_ = std::move(col_norm_sq);
    }

    std::size_t dim() const noexcept { return rows_; }
    double frobenius_sq() const noexcept { return frobenius_sq_; }
    double column_norm_sq(std::size_t k) const { return col_norm_sq_.at(k); }
    cplx entry(std::size_t i, std::size_t k) const { return a_.at(i * cols_ + k); }
    const std::shared_ptr<CostLedger> &ledger_ptr() const noexcept { return ledger_; }

    /// Overall success probability of one attempt, ||A||_F^2 / d.
    double success_probability() const noexcept { return frobenius_sq_ / static_cast<double>(rows_); }

    /// One post-selection round: uniform basis row i, flag succeeds with prob ||A(i,*)||^2,
    /// output column k with prob |A(i,k)|^2 / ||A(i,*)||^2.
    SampleOutcome sample_column_index(Rng &rng) const {
        ledger_->add_cost(prep_cost_);
        const std::size_t i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(rows_));
        if (row_norm_sq_[i] <= 0.0 || !bernoulli(rng, row_norm_sq_[i])) {
            ledger_->record_sample(false);
            return SampleOutcome::failed();
        }
        ledger_->record_sample(true);
        return SampleOutcome::at(row_laws_[i].sample(rng));
    }

    std::shared_ptr<PrepMeasureBackend> column_handle(std::size_t j) const {
        if (j >= cols_) throw Error(ErrorCode::IndexOutOfRange, "column " + std::to_string(j));
        std::vector<cplx> col(rows_);
        for (std::size_t i = 0; i < rows_; ++i) col[i] = a_[i * cols_ + j];
        return std::make_shared<PrepMeasureBackend>(DenseVector(std::move(col)), prep_cost_, ledger_);
    }

private:
    std::size_t rows_, cols_;
    std::vector<cplx> a_;
    double prep_cost_;
    std::shared_ptr<CostLedger> ledger_;
    std::vector<double> row_norm_sq_;
    std::vector<double> col_norm_sq_;
    std::vector<DiscreteLaw> row_laws_;
    double frobenius_sq_ = 0.0;
};

}  // namespace asq
