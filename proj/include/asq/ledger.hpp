#pragma once

#include <cstdint>
#include <map>
#include <mutex>

namespace asq {

/// Plain-value copy of a ledger at one instant.
struct LedgerSnapshot {
    std::uint64_t sample_calls = 0;
    std::uint64_t sample_failures = 0;
    std::map<double, std::uint64_t> query_calls;  // requested eps -> count
    std::map<double, std::uint64_t> norm_calls;
    /// Abstract backend time: state preparations, shots, Bell-sampling cost model units.
    double cost_units = 0.0;

    std::uint64_t total_queries() const {
        std::uint64_t s = 0;
        for (const auto &[eps, n] : query_calls) s += n;
        return s;
    }
    std::uint64_t total_norms() const {
        std::uint64_t s = 0;
        for (const auto &[eps, n] : norm_calls) s += n;
        return s;
    }

    LedgerSnapshot &operator+=(const LedgerSnapshot &o) {
        sample_calls += o.sample_calls;
        sample_failures += o.sample_failures;
        for (const auto &[e, n] : o.query_calls) query_calls[e] += n;
        for (const auto &[e, n] : o.norm_calls) norm_calls[e] += n;
        cost_units += o.cost_units;
        return *this;
    }

    /// Counts accrued between `earlier` and this snapshot of the same ledger.
    LedgerSnapshot since(const LedgerSnapshot &earlier) const {
        LedgerSnapshot d;
        d.sample_calls = sample_calls - earlier.sample_calls;
        d.sample_failures = sample_failures - earlier.sample_failures;
        for (const auto &[e, n] : query_calls) {
            auto it = earlier.query_calls.find(e);
            const std::uint64_t before = it == earlier.query_calls.end() ? 0 : it->second;
            if (n > before) d.query_calls[e] = n - before;
        }
        for (const auto &[e, n] : norm_calls) {
            auto it = earlier.norm_calls.find(e);
            const std::uint64_t before = it == earlier.norm_calls.end() ? 0 : it->second;
            if (n > before) d.norm_calls[e] = n - before;
        }
        d.cost_units = cost_units - earlier.cost_units;
        return d;
    }

    friend bool operator==(const LedgerSnapshot &, const LedgerSnapshot &) = default;
};

/// Oracle-call tally shared by a handle and everything that wraps it. All members are
/// synchronized, and every counter only grows.
class CostLedger {
public:
    void record_samples(std::uint64_t attempts, std::uint64_t failures) {
        std::lock_guard lock(mu_);
        s_.sample_calls += attempts;
        s_.sample_failures += failures;
    }
    void record_sample(bool success) { record_samples(1, success ? 0 : 1); }

    void record_query(double eps, std::uint64_t count = 1) {
        if (count == 0) return;
        std::lock_guard lock(mu_);
        s_.query_calls[eps] += count;
    }

    void record_norm(double eps, std::uint64_t count = 1) {
        if (count == 0) return;
        std::lock_guard lock(mu_);
        s_.norm_calls[eps] += count;
    }

    void add_cost(double units) {
        if (!(units > 0)) return;
        std::lock_guard lock(mu_);
        s_.cost_units += units;
    }

    LedgerSnapshot snapshot() const {
        std::lock_guard lock(mu_);
        return s_;
    }

private:
    mutable std::mutex mu_;
    LedgerSnapshot s_;
};

}  // namespace asq
