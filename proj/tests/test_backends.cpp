#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "asq/backends.hpp"
#include "support.hpp"

using namespace asq;

namespace {

DenseVector vec(std::initializer_list<cplx> v) { return DenseVector(std::vector<cplx>(v)); }

std::vector<std::uint64_t> tally(const AccessHandle &h, std::uint64_t n, Rng &rng) {
    std::vector<std::uint64_t> obs(h.dim());
    for (std::uint64_t k = 0; k < n; ++k) {
        const auto o = h.sample(rng);
        if (o.ok()) ++obs[o.index()];
    }
    return obs;
}

std::vector<double> law_of(const DenseVector &v) {
    const auto d = l2_distribution(v);
    return {d.weights().begin(), d.weights().end()};
}

/// Random d x d matrix scaled so that every row and column has norm at most 1.
std::vector<cplx> random_block(std::size_t d, Rng &rng) {
    std::vector<cplx> a(d * d);
    for (auto &v : a) v = {standard_normal(rng), standard_normal(rng)};
    double worst = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double r = 0.0, c = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            r += std::norm(a[i * d + k]);
            c += std::norm(a[k * d + i]);
        }
        worst = std::max({worst, r, c});
    }
    const double s = 0.95 / std::sqrt(worst);
    for (auto &v : a) v *= s;
    return a;
}

}  // namespace

TEST(PrepMeasure, ShotCountFormula) {
    // ceil(800 ln 20480) = 7942.
    EXPECT_EQ(tomography_shots(1024, 0.1, 0.1), 7942U);
}

TEST(PrepMeasure, BasisVectorTable) {
    const PrepMeasureBackend b(DenseVector::basis(4, 0));
    Rng rng(1);
    const auto t = b.estimate_abs_amplitudes(0.1, 0.1, rng);
    ASSERT_EQ(t.entries.size(), 1U);
    EXPECT_EQ(t.entries[0].first, 0U);
    EXPECT_EQ(t.entries[0].second, 1.0);
    EXPECT_EQ(t.reference, 0U);
}

TEST(PrepMeasure, TwoLevelTableAccuracy) {
    const PrepMeasureBackend b(vec({1 / std::numbers::sqrt2, 1 / std::numbers::sqrt2}));
    Rng rng(2);
    int good = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto tbl = b.estimate_abs_amplitudes(0.05, 0.1, rng);
        good += std::abs(tbl.at(0) - 0.70711) <= 0.05 && std::abs(tbl.at(1) - 0.70711) <= 0.05;
    }
    EXPECT_GE(good, 900);
}

TEST(PrepMeasure, TomographySoundnessAtD256) {
    Rng rng(3);
    int bad = 0;
    for (int t = 0; t < 200; ++t) {
        const auto x = normalized(fixtures::random_complex(256, rng));
        const PrepMeasureBackend b(x);
        const auto tbl = b.estimate_abs_amplitudes(0.1, 0.1, rng);
        double worst = 0.0;
        for (std::size_t i = 0; i < 256; ++i) worst = std::max(worst, std::abs(tbl.at(i) - std::abs(x[i])));
        bad += worst > 0.1;
    }
    EXPECT_LE(bad, static_cast<int>((0.1 + 0.05) * 200));
}

TEST(PrepMeasure, ReferenceEntryAndZeroShortCircuit) {
    const PrepMeasureBackend b(DenseVector::basis(2, 0));
    Rng rng(4);
    EXPECT_EQ(b.query(0, 0.1, rng).value, cplx(1.0, 0.0));
    const double before = b.ledger().snapshot().cost_units;
    const auto &tbl = b.table_for(0.1, rng);
    EXPECT_EQ(b.query_amplitude(tbl, 1, 0.1, rng), cplx(0.0, 0.0));
    EXPECT_EQ(b.ledger().snapshot().cost_units, before);
}

TEST(PrepMeasure, PhaseFixedByReference) {
    const auto x = vec({1 / std::numbers::sqrt2, cplx(0, 1 / std::numbers::sqrt2)});
    Rng rng(5);
    int good = 0;
    const int trials = 300;
    int ref_one = 0;
    for (int t = 0; t < trials; ++t) {
        const PrepMeasureBackend b(x);
        const cplx got = b.query(1, 0.02, rng).value;
        // Equal magnitudes: either index may become the reference; its entry is made real.
        const std::size_t m = b.table_for(0.02, rng).reference;
        ref_one += m == 1;
        const cplx expected = x[1] * std::conj(x[m]) / std::abs(x[m]);
        good += std::abs(got - expected) <= 0.02;
    }
    EXPECT_GE(good, 2 * trials / 3);
    EXPECT_GT(ref_one, 0);
    EXPECT_LT(ref_one, trials);
}

TEST(PrepMeasure, PhaseConsistencyAcrossIndices) {
    Rng rng(6);
    int good = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const auto x = normalized(fixtures::random_complex(8, rng));
        const PrepMeasureBackend b(x);
        const auto &tbl = b.table_for(0.05, rng);
        const std::size_t m = tbl.reference;
        const cplx phase = std::conj(x[m]) / std::abs(x[m]);
        bool ok = true;
        for (std::size_t i : {std::size_t{(m + 1) % 8}, std::size_t{(m + 3) % 8}}) {
            const cplx got = b.query_amplitude(tbl, i, 0.05, rng);
            // Entries rounded to zero in the table are legitimately reported as 0.
            const cplx want = tbl.at(i) == 0.0 ? cplx(0.0) : phase * x[i];
            ok = ok && std::abs(got - want) <= 0.05;
        }
        good += ok;
    }
    EXPECT_GE(good, 2 * trials / 3);
}

TEST(PrepMeasure, PostSelectionRates) {
    Rng rng(7);
    {
        const PrepMeasureBackend b(vec({0.5, 0.5}));
        const auto obs = tally(b, 10000, rng);
        const auto fails = b.ledger().snapshot().sample_failures;
        EXPECT_NEAR(static_cast<double>(fails) / 10000.0, 0.5, 0.02);
        EXPECT_EQ(obs[0] + obs[1] + fails, 10000U);
    }
    {
        const PrepMeasureBackend b(vec({0.6, 0.0}));
        const auto obs = tally(b, 10000, rng);
        EXPECT_EQ(obs[1], 0U);
        EXPECT_NEAR(static_cast<double>(obs[0]) / 10000.0, 0.36, 0.02);
    }
    {
        const PrepMeasureBackend b(normalized(vec({1, 2, 3})));
        tally(b, 1000, rng);
        EXPECT_EQ(b.ledger().snapshot().sample_failures, 0U);
    }
    EXPECT_THROW(PrepMeasureBackend(vec({1, 1})), Error);
}

TEST(Samplers, OneSidedLawMatchesGoodnessOfFit) {
    Rng rng(8);
    const auto x = fixtures::random_complex(64, rng);
    const auto xs = (0.9 / norm2(x)) * x;
    const auto law = law_of(x);
    std::vector<std::shared_ptr<AccessHandle>> handles{
        make_exact(x), std::make_shared<PrepMeasureBackend>(xs), std::make_shared<FaultInjectingHandle>(x, 1.0 / 3.0)};
    for (const auto &h : handles) {
        std::vector<std::uint64_t> obs(64);
        std::uint64_t ok = 0;
        while (ok < 100000) {
            const auto o = h->sample(rng);
            if (!o.ok()) continue;
            ++obs[o.index()];
            ++ok;
        }
        EXPECT_GT(fixtures::chi_square_p(obs, law), 1e-3);
    }
}

TEST(Samplers, BulkCountsMatchLoopStatistics) {
    Rng rng(9);
    const auto x = (0.8 / std::sqrt(3.0)) * vec({1, cplx(0, 1), -1});
    const PrepMeasureBackend b(x);
    std::vector<std::uint64_t> obs(3);
    for (const auto &c : b.sample_valid_counts(200000, rng)) obs[c.index] += c.count;
    EXPECT_GT(fixtures::chi_square_p(obs, law_of(x)), 1e-3);
    const auto s = b.ledger().snapshot();
    // Attempts per success are geometric with mean 1/0.64.
    const double attempts = static_cast<double>(s.sample_calls) / 200000.0;
    EXPECT_NEAR(attempts, 1.0 / 0.64, 0.02);
    EXPECT_EQ(s.sample_calls - s.sample_failures, 200000U);
}

TEST(Samplers, StarvationOnZeroVector) {
    const PrepMeasureBackend b(vec({0, 0}));
    Rng rng(10);
    try {
        b.sample_valid(rng);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::SamplerStarvation);
    }
    EXPECT_THROW(b.sample_valid_counts(5, rng), Error);
}

TEST(Oversampled, Examples) {
    const auto x = vec({0.6, 0.8});
    EXPECT_DOUBLE_EQ(wrap_oversampled(make_exact(x), x)->phi(), 1.0);
    EXPECT_NEAR(wrap_oversampled(make_exact(x), vec({0.8, 0.8}))->phi(), 1.28, 1e-12);

    auto h = wrap_oversampled(make_exact(vec({1, 0})), vec({1, 1}));
    EXPECT_DOUBLE_EQ(h->phi(), 2.0);
    Rng rng(11);
    std::vector<std::uint64_t> obs(2);
    for (int k = 0; k < 20000; ++k) ++obs[h->sample_valid(rng)];
    EXPECT_GT(fixtures::chi_square_p(obs, {0.5, 0.5}), 1e-3);
    // Queries still target x.
    EXPECT_EQ(h->query(1, 0.1, rng).value, cplx(0.0, 0.0));
    EXPECT_DOUBLE_EQ(h->norm_sq(0.1, rng), 2.0);
}

TEST(Oversampled, RejectsDominanceViolation) {
    try {
        wrap_oversampled(make_exact(vec({0.6, 0.8})), vec({0.6, 0.79}));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::DominanceViolation);
    }
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
        const auto x = fixtures::random_complex(16, rng);
        std::vector<cplx> xt(16);
        for (std::size_t i = 0; i < 16; ++i) xt[i] = x[i] * (1.0 + uniform01(rng));
        const auto h = wrap_oversampled(make_exact(x), DenseVector(xt));
        const auto g = h->ground_truth().value();
        for (std::size_t i = 0; i < 16; ++i) EXPECT_GE(std::abs(g.x_tilde[i]), std::abs(g.x[i]));
        EXPECT_LE(norm2sq(g.x_tilde), h->phi() * norm2sq(g.x) * (1 + 1e-12));
    }
}

TEST(Perturbed, Examples) {
    const auto x = vec({1, 0});
    Rng rng(13);
    auto same = wrap_perturbed(make_exact(x), x, 0.0);
    EXPECT_EQ(same->realized_tvd(), 0.0);

    const auto xp = normalized(vec({0.995, 0.0999}));
    const double t = tvd(l2_distribution(x), l2_distribution(xp));
    EXPECT_NEAR(t, 2 * 0.0999 * 0.0999 / (0.995 * 0.995 + 0.0999 * 0.0999), 1e-12);
    auto p = wrap_perturbed(make_exact(x), xp, 0.05);
    EXPECT_NEAR(p->realized_tvd(), t, 1e-15);
    EXPECT_EQ(p->query(1, 0.1, rng).value, cplx(0.0, 0.0));

    try {
        wrap_perturbed(make_exact(x), xp, 0.0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
    }
}

TEST(ColumnSampler, Examples) {
    Rng rng(14);
    {
        const MatrixBlockEncoding id(2, 2, {1, 0, 0, 1});
        EXPECT_DOUBLE_EQ(id.success_probability(), 1.0);
        std::vector<std::uint64_t> obs(2);
        for (int k = 0; k < 20000; ++k) {
            const auto o = id.sample_column_index(rng);
            ASSERT_TRUE(o.ok());
            ++obs[o.index()];
        }
        EXPECT_GT(fixtures::chi_square_p(obs, {0.5, 0.5}), 1e-3);
    }
    {
        const MatrixBlockEncoding a(2, 2, {1, 0, 0, 0});
        int ok = 0;
        for (int k = 0; k < 10000; ++k) {
            const auto o = a.sample_column_index(rng);
            if (o.ok()) {
                EXPECT_EQ(o.index(), 0U);
                ++ok;
            }
        }
        EXPECT_LT(fixtures::binomial_z(ok, 10000, 0.5), 4.0);
    }
    {
        const MatrixBlockEncoding z(2, 2, {0, 0, 0, 0});
        for (int k = 0; k < 100; ++k) EXPECT_FALSE(z.sample_column_index(rng).ok());
        EXPECT_EQ(z.ledger_ptr()->snapshot().sample_failures, 100U);
    }
}

TEST(ColumnSampler, RandomLawGoodnessOfFit) {
    Rng rng(15);
    for (int rep = 0; rep < 3; ++rep) {
        const MatrixBlockEncoding a(4, 4, random_block(4, rng));
        std::vector<std::uint64_t> obs(4);
        std::vector<double> law(4);
        for (std::size_t k = 0; k < 4; ++k) law[k] = a.column_norm_sq(k) / a.frobenius_sq();
        for (int got = 0; got < 100000;) {
            const auto o = a.sample_column_index(rng);
            if (!o.ok()) continue;
            ++obs[o.index()];
            ++got;
        }
        EXPECT_GT(fixtures::chi_square_p(obs, law), 1e-3);
    }
}

TEST(ColumnSampler, ColumnHandles) {
    Rng rng(16);
    const MatrixBlockEncoding id(2, 2, {1, 0, 0, 1});
    auto h0 = id.column_handle(0);
    for (int k = 0; k < 100; ++k) EXPECT_TRUE(h0->sample(rng).ok());
    EXPECT_THROW(id.column_handle(2), Error);

    const MatrixBlockEncoding diag(2, 2, {0.6, 0, 0, 0.8});
    auto h = diag.column_handle(0);
    int ok = 0;
    for (int k = 0; k < 10000; ++k) ok += h->sample(rng).ok();
    EXPECT_NEAR(ok / 10000.0, 0.36, 0.02);

    const MatrixBlockEncoding zero_col(2, 2, {0.5, 0, 0.5, 0});
    auto hz = zero_col.column_handle(1);
    for (int k = 0; k < 100; ++k) EXPECT_FALSE(hz->sample(rng).ok());

    EXPECT_THROW(MatrixBlockEncoding(2, 2, {1, 1, 0, 0}), Error);
}
