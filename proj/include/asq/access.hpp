#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "asq/errors.hpp"
#include "asq/ledger.hpp"
#include "asq/median.hpp"
#include "asq/numeric.hpp"
#include "asq/rng.hpp"

namespace asq {

/// Result of one sampling attempt. A failed attempt carries no index.
class SampleOutcome {
public:
    static SampleOutcome failed() { return SampleOutcome(); }
    static SampleOutcome at(std::size_t index) { return SampleOutcome(index); }

    bool ok() const noexcept { return index_.has_value(); }
    std::size_t index() const { return index_.value(); }

private:
    SampleOutcome() = default;
    explicit SampleOutcome(std::size_t i) : index_(i) {}
    std::optional<std::size_t> index_;
};

/// An entry estimate. There is deliberately no validity flag: two-sided errors are silent.
struct QueryResult {
    cplx value;
    double requested_eps;
};

/// Stored vectors behind a simulated handle, exposed for test-mode checks.
struct GroundTruth {
    DenseVector x;        // vector answered by queries
    DenseVector x_tilde;  // oversampling vector (equals x without oversampling)
    DenseVector x_sample; // vector whose l2 law the sampler follows (x_tilde unless perturbed)
};

inline constexpr std::uint32_t kDefaultStarvationCap = 100;

/// Approximate phi-oversample-and-query access to a vector x in C^d.
///
/// sample(): index from D_{x_tilde} or Failed (one-sided, failure prob <= 1/3).
/// query(i, eps): within eps of x(i) with prob >= 2/3 (two-sided).
/// norm_sq(eps): within eps of ||x_tilde||^2 with prob >= 2/3 (two-sided).
///
/// Handles are immutable apart from their ledger; randomness always comes from the caller's
/// generator, so a handle may be shared by workers that own separate streams.
class AccessHandle {
public:
    explicit AccessHandle(std::shared_ptr<CostLedger> ledger)
        : ledger_(ledger ? std::move(ledger) : std::make_shared<CostLedger>()) {}
    virtual ~AccessHandle() = default;

    AccessHandle(const AccessHandle &) = delete;
    AccessHandle &operator=(const AccessHandle &) = delete;

    virtual std::size_t dim() const = 0;
    /// Declared oversampling factor; +infinity when unbounded (cancelling combinations).
    virtual double phi() const = 0;

    virtual SampleOutcome sample(Rng &rng) const = 0;
    virtual QueryResult query(std::size_t i, double eps, Rng &rng) const = 0;
    virtual double norm_sq(double eps, Rng &rng) const = 0;

    /// n valid samples, retrying failed attempts; throws SamplerStarvation after `cap`
    /// consecutive failures. Returns the histogram sorted by index.
    virtual std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng,
                                                        std::uint32_t cap = kDefaultStarvationCap) const {
        std::vector<std::uint64_t> idx;
        idx.reserve(n);
        for (std::uint64_t k = 0; k < n; ++k) idx.push_back(sample_valid(rng, cap));
        std::sort(idx.begin(), idx.end());
        std::vector<IndexCount> out;
        for (std::size_t a = 0; a < idx.size();) {
            std::size_t b = a;
            while (b < idx.size() && idx[b] == idx[a]) ++b;
            out.push_back({idx[a], b - a});
            a = b;
        }
        return out;
    }

    /// `out.size()` independent raw queries of entry i.
    virtual void query_many(std::size_t i, double eps, std::span<cplx> out, Rng &rng) const {
        for (auto &v : out) v = query(i, eps, rng).value;
    }

    /// True when every raw query returns the exact entry and records exactly one call at the
    /// requested eps in ledger(). Lets callers account for repeated calls without making them.
    virtual bool deterministic_queries() const { return false; }

    virtual std::optional<GroundTruth> ground_truth() const { return std::nullopt; }

    std::size_t sample_valid(Rng &rng, std::uint32_t cap = kDefaultStarvationCap) const {
        for (std::uint32_t fails = 0;;) {
            const SampleOutcome o = sample(rng);
            if (o.ok()) return o.index();
            if (++fails >= cap)
                throw Error(ErrorCode::SamplerStarvation,
                            std::to_string(cap) + " consecutive failed sampling attempts");
        }
    }

    CostLedger &ledger() const noexcept { return *ledger_; }
    const std::shared_ptr<CostLedger> &ledger_ptr() const noexcept { return ledger_; }

protected:
    void check_index(std::size_t i) const {
        if (i >= dim()) throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(i));
    }

private:
    std::shared_ptr<CostLedger> ledger_;
};

/// Median-of-copies boost of a two-sided query (the IMPROVE routine): ceil(18 ln(1/delta))
/// raw queries at eps/sqrt(2), real and imaginary parts medianed separately. Within eps of
/// x(i) with probability >= 1 - delta.
inline cplx boosted_query(const AccessHandle &h, std::size_t i, double eps, double delta, Rng &rng) {
    if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    const std::uint64_t k = median_repetitions(delta);
    const double raw_eps = eps / std::numbers::sqrt2;
    if (h.deterministic_queries()) {
        const cplx v = h.query(i, raw_eps, rng).value;
        h.ledger().record_query(raw_eps, k - 1);
        return v;
    }
    std::vector<cplx> raw(k);
    h.query_many(i, raw_eps, raw, rng);
    std::vector<double> re(k), im(k);
    for (std::size_t j = 0; j < k; ++j) {
        re[j] = raw[j].real();
        im[j] = raw[j].imag();
    }
    return {lower_median(re), lower_median(im)};
}

/// Outcome of an estimator run.
struct EstimatorReport {
    cplx estimate;
    double error_bound = 0.0;
    double success_prob = 2.0 / 3.0;
    LedgerSnapshot ledger;  // calls charged to the run, summed over distinct ledgers
};

/// Sums the calls recorded on a set of ledgers between construction and collect().
class LedgerWindow {
public:
    explicit LedgerWindow(std::vector<std::shared_ptr<CostLedger>> ledgers) {
        for (auto &l : ledgers) {
            bool seen = false;
            for (auto &m : ledgers_) seen = seen || m == l;
            if (!seen) ledgers_.push_back(l);
        }
        for (auto &l : ledgers_) start_.push_back(l->snapshot());
    }

    LedgerSnapshot collect() const {
        LedgerSnapshot total;
        for (std::size_t k = 0; k < ledgers_.size(); ++k) total += ledgers_[k]->snapshot().since(start_[k]);
        return total;
    }

private:
    std::vector<std::shared_ptr<CostLedger>> ledgers_;
    std::vector<LedgerSnapshot> start_;
};

}  // namespace asq
