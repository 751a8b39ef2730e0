#include <gtest/gtest.h>

#include <cmath>

#include "asq/backends.hpp"
#include "asq/estimators.hpp"
#include "support.hpp"

using namespace asq;

namespace {

/// Exact queries and norms, but each sampling attempt fails with probability 1/3.
class LossySampler final : public AccessHandle {
public:
    explicit LossySampler(DenseVector x) : AccessHandle(nullptr), x_(std::move(x)), sampler_(x_, 2.0 / 3.0) {}
    std::size_t dim() const override { return x_.dim(); }
    double phi() const override { return 1.0; }
    SampleOutcome sample(Rng &rng) const override { return sampler_.draw(rng, ledger()); }
    std::vector<IndexCount> sample_valid_counts(std::uint64_t n, Rng &rng, std::uint32_t cap) const override {
        return sampler_.valid_counts(n, rng, cap, ledger());
    }
    QueryResult query(std::size_t i, double eps, Rng &) const override {
        ledger().record_query(eps);
        return {x_[i], eps};
    }
    double norm_sq(double eps, Rng &) const override {
        ledger().record_norm(eps);
        return norm2sq(x_);
    }
    bool deterministic_queries() const override { return true; }
    std::optional<GroundTruth> ground_truth() const override { return GroundTruth{x_, x_, x_}; }

private:
    DenseVector x_;
    LawSampler sampler_;
};

InnerProductConfig cfg_eps(double eps) {
    InnerProductConfig c;
    c.eps = eps;
    return c;
}

DenseVector unit_real(std::size_t d, Rng &rng) { return normalized(fixtures::random_real(d, rng)); }

/// A unit vector with `k` random nonzero entries.
DenseVector sparse_unit(std::size_t d, std::size_t k, Rng &rng) {
    std::vector<cplx> v(d);
    for (std::size_t j = 0; j < k; ++j) v[rng() % d] = {standard_normal(rng), standard_normal(rng)};
    return normalized(DenseVector(std::move(v)));
}

template <class Run>
int successes(int trials, Rng &rng, Run &&run) {
    int good = 0;
    for (int t = 0; t < trials; ++t) good += run(rng) ? 1 : 0;
    return good;
}

constexpr int kTrials = 300;
// 2/3 - 0.05 of 300.
constexpr int kFloor = 185;

}  // namespace

TEST(InnerProductAsym, BasisVectorsAndOrthogonal) {
    Rng rng(1);
    const auto e1 = DenseVector::basis(4, 0);
    auto h = make_exact(e1);
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) { return std::abs(inner_product_asym(h, e1, cfg_eps(0.1), g).report.estimate - 1.0) <= 0.1; }),
              kFloor);
    const auto x = normalized(DenseVector({1, 1, 0, 0})), y = normalized(DenseVector({1, -1, 0, 0}));
    auto hx = make_exact(x);
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) {
                            return std::abs(inner_product_asym(hx, y, cfg_eps(0.1), g).report.estimate) <=
                                   0.1 * one_norm(y);
                        }),
              kFloor);
}

TEST(InnerProductAsym, RandomPairAgainstBruteForce) {
    Rng rng(2);
    const std::size_t d = 256;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = normalized(fixtures::random_complex(d, rng));
    auto h = make_exact(x);
    const cplx truth = inner(x, y);
    const int good = successes(kTrials, rng, [&](Rng &g) {
        const auto r = inner_product_asym(h, y, cfg_eps(0.1), g);
        return std::abs(r.report.estimate - truth) <= r.report.error_bound;
    });
    EXPECT_GE(good, kFloor);
}

TEST(InnerProductAsym, OversampledHandle) {
    Rng rng(3);
    const std::size_t d = 128;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = fixtures::random_complex(d, rng);
    auto h = wrap_oversampled(make_exact(x), fixtures::dominating(x, 2.0, rng));
    EXPECT_NEAR(h->phi(), 2.0, 1e-9);
    const cplx truth = inner(x, y);
    const int good = successes(kTrials, rng, [&](Rng &g) {
        const auto r = inner_product_asym(h, y, cfg_eps(0.1), g);
        return std::abs(r.report.estimate - truth) <= 0.1 * one_norm(y);
    });
    EXPECT_GE(good, kFloor);
}

TEST(InnerProductAsym, ZeroVectorFailsNormEstimate) {
    Rng rng(4);
    auto h = make_exact(DenseVector({0, 0}));
    try {
        inner_product_asym(h, DenseVector({1, 0}), cfg_eps(0.1), rng);
        FAIL() << "expected RelativeEstimateFailed";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::RelativeEstimateFailed);
    }
    EXPECT_THROW(inner_product_asym(make_exact(DenseVector({1, 0})), DenseVector({1}), cfg_eps(0.1), rng), Error);
    EXPECT_THROW(inner_product_asym(make_exact(DenseVector({1, 0})), DenseVector({1, 0}), cfg_eps(1.5), rng), Error);
}

TEST(InnerProductAsym, LedgerMatchesConstants) {
    Rng rng(5);
    const std::size_t d = 64;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = fixtures::random_complex(d, rng);
    for (bool lossy : {false, true}) {
        std::shared_ptr<const AccessHandle> h;
        if (lossy) h = std::make_shared<LossySampler>(x);
        else h = make_exact(x);
        const double eps = 0.2;
        const auto r = inner_product_asym(h, y, cfg_eps(eps), rng);
        const double n_sq = r.n_sq_x;
        const double gamma = eps * eps / (135.0 * n_sq);
        const double nominal = 512.0 / (gamma * gamma) * std::log(18.0 * d) + 7.0 * n_sq / (eps * eps);
        const auto &l = r.report.ledger;
        const double valid = static_cast<double>(l.sample_calls - l.sample_failures);
        EXPECT_NEAR(valid, nominal, 2.0);
        EXPECT_LE(static_cast<double>(l.sample_calls), 1.01 * 1.5 * nominal);
        // Every accepted draw is one IMPROVE at (eps/4, min(1/2, eps^2/(127 n^2))).
        const auto k = median_repetitions(std::min(0.5, eps * eps / (127.0 * n_sq)));
        ASSERT_EQ(l.query_calls.size(), 1U);
        EXPECT_DOUBLE_EQ(l.query_calls.begin()->first, eps / 4.0 / std::sqrt(2.0));
        EXPECT_EQ(l.query_calls.begin()->second, r.accepted_draws * k);
    }
}

TEST(InnerProductAsym, RejectionConsistency) {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = 16 + rng() % 200;
        // Peaked vectors so that some indices fall below the threshold.
        auto v = fixtures::random_complex(d, rng);
        std::vector<cplx> w(v.entries().begin(), v.entries().end());
        for (std::size_t i = 0; i < d; ++i) w[i] *= std::pow(0.5, static_cast<double>(i % 12));
        const DenseVector x(w);
        InnerProductConfig c = cfg_eps(0.5);
        c.record_trace = true;
        const auto r = inner_product_asym(make_exact(x), fixtures::random_complex(d, rng), c, rng);
        std::uint64_t seen = 0;
        for (const auto &rec : r.trace.records) {
            seen += rec.multiplicity;
            if (rec.accepted) EXPECT_GE(rec.p_hat, r.trace.threshold);
            else EXPECT_EQ(rec.contribution, cplx(0.0));
        }
        EXPECT_EQ(seen, r.draws);
    }
}

TEST(InnerProductAsym, BiasAndVarianceEnvelopes) {
    Rng rng(7);
    for (int t = 0; t < 6; ++t) {
        const std::size_t d = 2 + rng() % 63;
        const auto x = normalized(fixtures::random_complex(d, rng));
        const auto y = fixtures::random_complex(d, rng);
        const double phi = 1.0 + static_cast<double>(t % 3);
        const auto xt = fixtures::dominating(x, phi, rng);
        auto h = wrap_oversampled(make_exact(x), xt);
        const double eps = 0.2;
        AsymmetricEstimator est(h, y, cfg_eps(eps));
        est.prepare(rng);
        const std::uint64_t n = 1000000;
        cplx sum = 0.0;
        double sum_sq = 0.0;
        for (const auto &ic : h->sample_valid_counts(n, rng)) {
            const cplx v = est.point(ic.index, rng).value;
            sum += static_cast<double>(ic.count) * v;
            sum_sq += static_cast<double>(ic.count) * std::norm(v);
        }
        const cplx mean = sum / static_cast<double>(n);
        const double var = sum_sq / static_cast<double>(n) - std::norm(mean);
        const double sigma = std::sqrt(var);
        EXPECT_LE(std::abs(mean - inner(x, y)), 2.0 / 3.0 * eps * one_norm(y) + 3.0 * sigma / 1e3) << "d = " << d;
        EXPECT_LE(var, 10.0 * norm2sq(xt) * norm2sq(y) * 1.01) << "d = " << d;
    }
}

TEST(InnerProductAsym, PointBeforePrepareThrows) {
    AsymmetricEstimator est(make_exact(DenseVector({1, 0})), DenseVector({1, 0}), cfg_eps(0.1));
    Rng rng(8);
    EXPECT_THROW(est.point(0, rng), Error);
}

TEST(InnerProductSym, Examples) {
    Rng rng(9);
    const auto e1 = DenseVector::basis(2, 0), e2 = DenseVector::basis(2, 1);
    auto h1 = make_exact(e1), h2 = make_exact(e2);
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) { return std::abs(inner_product_sym(h1, h1, cfg_eps(0.1), g).report.estimate - 1.0) <= 0.2; }),
              kFloor);
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) { return std::abs(inner_product_sym(h1, h2, cfg_eps(0.1), g).report.estimate) <= 0.2; }),
              kFloor);
}

TEST(InnerProductSym, OnlyOneVectorNeedsToBePeaked) {
    Rng rng(10);
    const std::size_t d = 256;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = sparse_unit(d, 4, rng);
    auto hx = make_exact(x), hy = make_exact(y);
    const cplx truth = inner(x, y);
    const double bound = 0.1 * (1.0 + one_norm(y) / norm2(y));
    const int good = successes(kTrials, rng, [&](Rng &g) {
        const auto r = inner_product_sym(hx, hy, cfg_eps(0.1), g);
        EXPECT_NEAR(r.report.error_bound, bound, 1e-12);
        return std::abs(r.report.estimate - truth) <= bound;
    });
    EXPECT_GE(good, kFloor);
}

TEST(InnerProductSym, LedgerMatchesConstants) {
    Rng rng(11);
    const std::size_t d = 32;
    auto hx = std::make_shared<LossySampler>(normalized(fixtures::random_complex(d, rng)));
    auto hy = make_exact(normalized(fixtures::random_complex(d, rng)));
    const double eps = 0.3;
    SymmetricEstimator est(hx, hy, cfg_eps(eps));
    const auto r = est.run(rng);
    const double hist = 32.0 / (est.gamma() * est.gamma()) * std::log(18.0 * d);
    EXPECT_EQ(est.histogram_samples(), static_cast<std::uint64_t>(std::ceil(hist)));
    EXPECT_EQ(r.draws, est.draw_count());
    EXPECT_NEAR(static_cast<double>(est.draw_count()),
                864.0 * (1 + 2 * r.n_sq_x) * (1 + 2 * r.n_sq_y) / (eps * eps), 1.0);
    const auto &l = r.report.ledger;
    EXPECT_NEAR(static_cast<double>(l.sample_calls - l.sample_failures), hist + est.draw_count(), 2.0);
    const auto k = median_repetitions(1.0 / (18.0 * static_cast<double>(est.draw_count())));
    EXPECT_EQ(l.total_queries(), 2 * r.accepted_draws * k);
}

TEST(InnerProductSym, RejectionConsistency) {
    Rng rng(12);
    for (int t = 0; t < 10; ++t) {
        const std::size_t d = 8 + rng() % 100;
        auto x = fixtures::random_complex(d, rng);
        std::vector<cplx> w(x.entries().begin(), x.entries().end());
        for (std::size_t i = 0; i < d; ++i) w[i] *= std::pow(0.3, static_cast<double>(i % 9));
        InnerProductConfig c = cfg_eps(0.5);
        c.record_trace = true;
        const auto r = inner_product_sym(make_exact(DenseVector(w)), make_exact(sparse_unit(d, 3, rng)), c, rng);
        for (const auto &rec : r.trace.records) {
            if (rec.accepted) EXPECT_GT(rec.p_hat, r.trace.threshold);
            else EXPECT_EQ(rec.contribution, cplx(0.0));
        }
    }
}

TEST(InnerProductSym, MedianReductionCounterexample) {
    // Index 0 carries 68% of the mixture law and a per-draw value near 0.88, so the median
    // sits there while the mean is unbiased for 0.6.
    const auto x = DenseVector({1, 0}), y = DenseVector({0.6, 0.8});
    auto hx = make_exact(x), hy = make_exact(y);
    Rng rng(13);
    InnerProductConfig med = cfg_eps(0.1);
    med.reduction = Reduction::Median;
    const auto rm = inner_product_sym(hx, hy, med, rng);
    EXPECT_NEAR(rm.report.estimate.real(), 0.6 / 0.68, 0.01);
    EXPECT_GT(std::abs(rm.report.estimate - 0.6), rm.report.error_bound);
    const auto rmean = inner_product_sym(hx, hy, cfg_eps(0.1), rng);
    EXPECT_LE(std::abs(rmean.report.estimate - 0.6), rmean.report.error_bound);
}

TEST(InnerProductSym, OversampledBothSides) {
    Rng rng(14);
    const std::size_t d = 128;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = normalized(fixtures::random_complex(d, rng));
    auto hx = wrap_oversampled(make_exact(x), fixtures::dominating(x, 2.0, rng));
    auto hy = wrap_oversampled(make_exact(y), fixtures::dominating(y, 2.0, rng));
    const cplx truth = inner(x, y);
    const double bound = 0.1 * (1.0 + std::min(one_norm(x), one_norm(y)));
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) { return std::abs(inner_product_sym(hx, hy, cfg_eps(0.1), g).report.estimate - truth) <= bound; }),
              kFloor);
}

TEST(InnerProductReal, EqualVectors) {
    Rng rng(15);
    const auto x = unit_real(64, rng);
    auto h = make_exact(x);
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) { return std::abs(inner_product_real_exact(h, h, cfg_eps(0.1), g).report.estimate - 1.0) <= 0.1; }),
              kFloor);
}

TEST(InnerProductReal, RandomPairsD4096) {
    Rng rng(16);
    const std::size_t d = 4096;
    const auto x = unit_real(d, rng), y = unit_real(d, rng);
    auto hx = make_exact(x), hy = make_exact(y);
    RealExactEstimator est(hx, hy, cfg_eps(0.05));
    EXPECT_DOUBLE_EQ(est.kappa(), std::min(one_norm(x), one_norm(y)));
    EXPECT_EQ(est.draw_count(), 3200U);
    EXPECT_DOUBLE_EQ(est.query_delta(), 1.0 / (36.0 * 3200.0));
    const double truth = inner(x, y).real();
    EXPECT_GE(successes(kTrials, rng, [&](Rng &g) { return std::abs(est.run(g).report.estimate - truth) <= 0.05; }),
              kFloor);
}

TEST(InnerProductReal, PerturbedSampling) {
    Rng rng(17);
    const std::size_t d = 1024;
    const auto x = unit_real(d, rng), y = unit_real(d, rng);
    // x' and y' at l2 distance exactly Delta/2 = 0.01.
    auto shift = [&](const DenseVector &v) { return v + cplx(0.01) * unit_real(d, rng); };
    const auto xp = shift(x), yp = shift(y);
    EXPECT_NEAR(norm2(xp - x), 0.01, 1e-12);
    auto hx = wrap_perturbed(make_exact(x), xp, 1.0);
    auto hy = wrap_perturbed(make_exact(y), yp, 1.0);
    InnerProductConfig c = cfg_eps(0.05);
    c.delta = 0.02;
    const double truth = inner(x, y).real();
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) { return std::abs(inner_product_real_exact(hx, hy, c, g).report.estimate - truth) <= 0.07; }),
              kFloor);
}

TEST(InnerProductReal, RejectsNonUnitAndMissingKappa) {
    Rng rng(18);
    try {
        inner_product_real_exact(make_exact(DenseVector({0.5, 0})), make_exact(DenseVector({1, 0})), cfg_eps(0.1), rng);
        FAIL() << "expected NonUnitNorm";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::NonUnitNorm);
    }
}

TEST(InnerProductReal, RejectionConsistency) {
    Rng rng(19);
    const auto x = unit_real(512, rng), y = unit_real(512, rng);
    InnerProductConfig c = cfg_eps(0.2);
    c.record_trace = true;
    const auto r = inner_product_real_exact(make_exact(x), make_exact(y), c, rng);
    for (const auto &rec : r.trace.records) {
        if (rec.accepted) EXPECT_GT(std::sqrt(rec.p_hat), r.trace.threshold);
        else EXPECT_EQ(rec.contribution, cplx(0.0));
    }
}

TEST(InnerProductReal, RatioIsLipschitzAwayFromOrigin) {
    Rng rng(20);
    auto f = [](double a, double b) { return a * b / (a * a + b * b); };
    for (int t = 0; t < 100000; ++t) {
        const double gamma = std::ldexp(1.0, -static_cast<int>(rng() % 10)) * (0.5 + uniform01(rng));
        const double floor = std::sqrt(2.0) * gamma;
        const double r = floor * (1.0 + 4.0 * uniform01(rng));
        const double th = 2.0 * std::numbers::pi * uniform01(rng);
        const double a = r * std::cos(th), b = r * std::sin(th);
        // Keep the segment to (a', b') inside the region where the gradient bound holds.
        const double step = (r - floor) * uniform01(rng);
        const double ph = 2.0 * std::numbers::pi * uniform01(rng);
        const double a2 = a + step * std::cos(ph), b2 = b + step * std::sin(ph);
        ASSERT_LE(std::abs(f(a, b) - f(a2, b2)), step / floor * (1 + 1e-12) + 1e-15);
    }
}

TEST(InnerProductAsymPerturbed, ZeroPerturbationCoincides) {
    Rng seeder(21);
    const auto x = normalized(fixtures::random_complex(64, seeder));
    const auto y = fixtures::random_complex(64, seeder);
    auto raw = make_exact(x);
    auto wrapped = wrap_perturbed(raw, x, 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng a(seed), b(seed);
        const auto ra = inner_product_asym_perturbed(raw, y, cfg_eps(0.1), a);
        const auto rb = inner_product_asym_perturbed(wrapped, y, cfg_eps(0.1), b);
        EXPECT_EQ(ra.report.estimate, rb.report.estimate);
    }
}

TEST(InnerProductAsymPerturbed, HalfBudget) {
    Rng rng(22);
    const std::size_t d = 256;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = fixtures::random_complex(d, rng);
    const double budget = perturbation_budget_asym(0.1, 1.0);
    EXPECT_DOUBLE_EQ(budget, 0.0125);
    const auto xp = perturb_to_tvd(x, budget / 2.0, rng);
    auto h = wrap_perturbed(make_exact(x), xp, budget);
    EXPECT_NEAR(h->realized_tvd(), budget / 2.0, 1e-9);
    const cplx truth = inner(x, y);
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) {
                            const auto r = inner_product_asym_perturbed(h, y, cfg_eps(0.1), g);
                            return std::abs(r.report.estimate - truth) <= 0.1 * one_norm(y);
                        }),
              kFloor);
}

TEST(InnerProductAsymPerturbed, BudgetViolationsRejected) {
    Rng rng(23);
    const auto x = normalized(fixtures::random_complex(32, rng));
    const auto far = perturb_to_tvd(x, 0.05, rng);
    EXPECT_THROW(wrap_perturbed(make_exact(x), far, 0.01), Error);
    auto declared = wrap_perturbed(make_exact(x), far, 0.06);
    try {
        inner_product_asym_perturbed(declared, x, cfg_eps(0.1), rng);
        FAIL() << "expected BudgetExceeded";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
    }
}

TEST(InnerProductSymPerturbed, ZeroPerturbationCoincides) {
    Rng seeder(24);
    const auto x = normalized(fixtures::random_complex(32, seeder));
    const auto y = normalized(fixtures::random_complex(32, seeder));
    auto rx = make_exact(x), ry = make_exact(y);
    auto wx = wrap_perturbed(rx, x, 0.0), wy = wrap_perturbed(ry, y, 0.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng a(seed), b(seed);
        EXPECT_EQ(inner_product_sym_perturbed(rx, ry, cfg_eps(0.2), a).report.estimate,
                  inner_product_sym_perturbed(wx, wy, cfg_eps(0.2), b).report.estimate);
    }
}

TEST(InnerProductSymPerturbed, HalfBudget) {
    Rng rng(25);
    const std::size_t d = 256;
    const auto x = normalized(fixtures::random_complex(d, rng));
    const auto y = sparse_unit(d, 6, rng);
    const double budget = perturbation_budget_sym(0.1, 1.0);
    auto hx = wrap_perturbed(make_exact(x), perturb_to_tvd(x, budget / 2.0, rng), budget);
    auto hy = wrap_perturbed(make_exact(y), perturb_to_tvd(y, budget / 2.0, rng), budget);
    const cplx truth = inner(x, y);
    const double bound = 0.1 * (1.0 + std::min(one_norm(x), one_norm(y)));
    EXPECT_GE(successes(kTrials, rng,
                        [&](Rng &g) {
                            const auto r = inner_product_sym_perturbed(hx, hy, cfg_eps(0.1), g);
                            EXPECT_NEAR(r.report.error_bound, bound, 1e-12);
                            return std::abs(r.report.estimate - truth) <= bound;
                        }),
              kFloor);
}

TEST(InnerProductSymPerturbed, BudgetViolationRejected) {
    Rng rng(26);
    const auto x = normalized(fixtures::random_complex(32, rng));
    auto hx = wrap_perturbed(make_exact(x), perturb_to_tvd(x, 0.02, rng), 0.02);
    try {
        inner_product_sym_perturbed(hx, make_exact(x), cfg_eps(0.1), rng);
        FAIL() << "expected BudgetExceeded";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
    }
}
