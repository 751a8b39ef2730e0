#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "asq/pauli.hpp"
#include "asq/states.hpp"
#include "support.hpp"

using namespace asq;

namespace {

constexpr double kTol = 1e-9;
const double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

// Single-qubit tableau indices: X sits on the high bit, Z on the low bit.
constexpr std::size_t kI = 0, kZ = 1, kX = 2, kY = 3;

DenseVector state_for(unsigned n, int kind, Rng &rng) {
    switch (kind % 3) {
        case 0: return random_state(std::size_t{1} << n, rng);
        case 1: return low_magic_state(n, static_cast<unsigned>(rng() % 4), rng);
        default: return StateBuilder(n).random_clifford(10, rng).state();
    }
}

}  // namespace

TEST(PauliIndex, MasksRoundTripAndBitLayout) {
    for (unsigned n = 1; n <= 4; ++n) {
        const std::uint64_t count = std::uint64_t{1} << (2 * n);
        for (std::uint64_t i = 0; i < count; ++i) EXPECT_EQ(pauli_index(pauli_masks(i, n), n), i);
    }
    // X on qubit 0 of two qubits sets the top tableau bit and flips basis bit 1.
    const auto m = pauli_masks(8, 2);
    EXPECT_EQ(m.x, 2U);
    EXPECT_EQ(m.z, 0U);
    const auto plus_zero = StateBuilder(2).h(0).state();
    EXPECT_NEAR(pauli_expectation(plus_zero, 8, 2), 1.0, kTol);
    EXPECT_NEAR(pauli_expectation(plus_zero, 1, 2), 1.0, kTol);  // Z on qubit 1
    EXPECT_NEAR(pauli_expectation(plus_zero, 4, 2), 0.0, kTol);  // Z on qubit 0
    EXPECT_THROW(qubits_of(6), Error);
}

TEST(PauliRepresentation, ZeroState) {
    const auto rep = pauli_representation(DenseVector({1, 0}));
    ASSERT_EQ(rep.values.size(), 4U);
    EXPECT_NEAR(rep.values[kI], kInvSqrt2, kTol);
    EXPECT_NEAR(rep.values[kX], 0.0, kTol);
    EXPECT_NEAR(rep.values[kY], 0.0, kTol);
    EXPECT_NEAR(rep.values[kZ], kInvSqrt2, kTol);
}

TEST(PauliRepresentation, TState) {
    const auto rep = pauli_representation(t_state());
    EXPECT_NEAR(rep.values[kI], kInvSqrt2, kTol);
    EXPECT_NEAR(rep.values[kX], 0.5, kTol);
    EXPECT_NEAR(rep.values[kY], 0.5, kTol);
    EXPECT_NEAR(rep.values[kZ], 0.0, kTol);
}

TEST(PauliRepresentation, RejectsBadInput) {
    try {
        pauli_representation(DenseVector({1, 0, 0}));
        FAIL() << "expected DimensionNotPowerOfTwo";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionNotPowerOfTwo);
    }
    try {
        pauli_representation(DenseVector({1, 1}));
        FAIL() << "expected NotNormalized";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::NotNormalized);
    }
    EXPECT_THROW(pauli_representation(DenseVector({1, 0}), 2U), Error);
}

TEST(PauliRepresentation, TransformMatchesDirectExpectations) {
    Rng rng(1);
    for (unsigned n = 1; n <= 4; ++n) {
        for (int t = 0; t < 6; ++t) {
            const auto psi = state_for(n, t, rng);
            const auto rep = pauli_representation(psi);
            const double sqrt_d = std::sqrt(static_cast<double>(psi.dim()));
            for (std::uint64_t i = 0; i < rep.values.size(); ++i)
                ASSERT_NEAR(rep.values[i], pauli_expectation(psi, i, n) / sqrt_d, 1e-12) << "n=" << n << " i=" << i;
        }
    }
}

TEST(PauliRepresentation, ParsevalAndIdentityEntry) {
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
        const unsigned n = 1 + static_cast<unsigned>(t % 8);
        const auto rep = pauli_representation(state_for(n, t / 8, rng));
        double s = 0.0;
        for (double v : rep.values) s += v * v;
        ASSERT_NEAR(s, 1.0, kTol);
        ASSERT_NEAR(rep.values[0], 1.0 / std::sqrt(static_cast<double>(rep.state_dim())), 1e-12);
    }
}

TEST(PauliRepresentation, OverlapIdentity) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const unsigned n = 1 + static_cast<unsigned>(t % 5);
        const auto psi = state_for(n, t, rng), phi = state_for(n, t + 1, rng);
        const auto a = pauli_representation(psi), b = pauli_representation(phi);
        double dot = 0.0;
        for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
        ASSERT_NEAR(dot, std::norm(inner(psi, phi)), kTol);
    }
}

TEST(MagicReport, StabilizerStatesHaveNoMagic) {
    for (unsigned n = 1; n <= 5; ++n) {
        std::vector<cplx> zero(std::size_t{1} << n);
        zero[0] = 1.0;
        const auto r = magic_report(pauli_representation(DenseVector(zero)));
        EXPECT_NEAR(r.m0, 0.0, kTol);
        EXPECT_NEAR(r.m_half, 0.0, kTol);
        EXPECT_NEAR(r.m2, 0.0, kTol);
        EXPECT_NEAR(r.stab_norm, 1.0, kTol);
    }
    Rng rng(4);
    const auto r = magic_report(pauli_representation(StateBuilder(4).random_clifford(20, rng).state()));
    EXPECT_NEAR(r.m_half, 0.0, kTol);
    EXPECT_NEAR(r.stab_norm, 1.0, kTol);
}

TEST(MagicReport, TStateValues) {
    const auto r = magic_report(pauli_representation(t_state()));
    EXPECT_NEAR(r.stab_norm, (1.0 + std::numbers::sqrt2) / 2.0, kTol);
    EXPECT_NEAR(r.m_half, 2.0 * std::log((1.0 + std::numbers::sqrt2) / 2.0), kTol);
    EXPECT_NEAR(r.m_half, 0.3764528129, 1e-9);
    EXPECT_NEAR(r.exp_half_m_half, r.stab_norm, kTol);
}

TEST(MagicReport, RangeAndStabNormIdentity) {
    Rng rng(5);
    for (int t = 0; t < 300; ++t) {
        const unsigned n = 1 + static_cast<unsigned>(t % 6);
        const auto rep = pauli_representation(state_for(n, t, rng));
        const auto r = magic_report(rep);
        const double ln_d = n * std::numbers::ln2;
        for (double m : {r.m0, r.m_half, r.m2}) {
            EXPECT_GE(m, -kTol);
            EXPECT_LE(m, ln_d + kTol);
        }
        EXPECT_NEAR(r.m_half, 2.0 * std::log(r.stab_norm), kTol);
        EXPECT_NEAR(r.exp_half_m_half, one_norm(rep.as_vector()) / std::sqrt(static_cast<double>(rep.state_dim())), kTol);
    }
}

TEST(MagicReport, CliffordInvariance) {
    Rng rng(6);
    for (int t = 0; t < 40; ++t) {
        const unsigned n = 1 + static_cast<unsigned>(t % 5);
        StateBuilder b(n);
        b.random_clifford(4, rng);
        for (int k = 0; k < 1 + t % 3; ++k) b.t(static_cast<unsigned>(rng() % n)).h(static_cast<unsigned>(rng() % n));
        const double before = stabilizer_entropy(pauli_representation(b.state()), 0.5);
        b.random_clifford(1 + static_cast<unsigned>(rng() % 20), rng);
        const double after = stabilizer_entropy(pauli_representation(b.state()), 0.5);
        ASSERT_NEAR(before, after, kTol);
    }
}

TEST(PauliCdf, Examples) {
    EXPECT_NEAR(pauli_cdf(pauli_representation(DenseVector({1, 0})), 0.5), 0.0, kTol);
    const auto t = pauli_representation(t_state());
    EXPECT_NEAR(pauli_cdf(t, 0.6), 0.5, kTol);
    EXPECT_NEAR(pauli_cdf(t, 1.0 + 1e-6), 1.0, kTol);
    EXPECT_NEAR(pauli_cdf(t, 0.4), 0.0, kTol);
}

TEST(PauliCdf, MonotoneAndBoundedByMagic) {
    Rng rng(7);
    const std::vector<double> taus{0.01, 0.1, 0.25, 0.5, 1.0};
    for (int t = 0; t < 1000; ++t) {
        const unsigned n = 1 + static_cast<unsigned>(t % 6);
        const auto rep = pauli_representation(state_for(n, t, rng));
        const double stab = stab_norm(rep);
        double prev = 0.0;
        for (double tau : taus) {
            const double f = pauli_cdf(rep, tau);
            ASSERT_GE(f, prev - 1e-15);
            ASSERT_LE(f, std::sqrt(tau) * stab + kTol) << "tau=" << tau;
            prev = f;
        }
    }
}

TEST(PauliSampler, ZeroStateIsUniformOnStabilizerGroup) {
    const unsigned n = 3;
    std::vector<cplx> zero(8);
    zero[0] = 1.0;
    const PauliSamplerHandle h(pauli_representation(DenseVector(zero)));
    Rng rng(8);
    std::vector<std::uint64_t> obs(8);
    for (const auto &ic : h.sample_valid_counts(100000, rng)) {
        const auto m = pauli_masks(ic.index, n);
        ASSERT_EQ(m.x, 0U) << "sampled a string outside I/Z patterns";
        obs[m.z] += ic.count;
    }
    EXPECT_GT(fixtures::chi_square_p(obs, std::vector<double>(8, 0.125)), 1e-3);
    for (int t = 0; t < 200; ++t) {
        const auto s = h.sample(rng);
        ASSERT_TRUE(s.ok());
        EXPECT_EQ(pauli_masks(s.index(), n).x, 0U);
    }
}

TEST(PauliSampler, QueriesNormsAndShots) {
    Rng rng(9);
    const auto psi = low_magic_state(3, 2, rng);
    const auto rep = pauli_representation(psi);
    const PauliSamplerHandle h(rep);
    const double d = 8.0;
    for (double eps : {0.5, 0.1, 0.02}) {
        EXPECT_NEAR(h.query(0, eps, rng).value.real(), 1.0 / std::sqrt(d), 1e-15);
        EXPECT_EQ(h.query_shots(eps), std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(2 * std::log(6.0) / (eps * eps * d)))));
    }
    // Shot-noise estimates land within eps of pi(i) at the advertised rate of 2/3 or better.
    int good = 0;
    for (int t = 0; t < 3000; ++t) {
        const std::size_t i = rng() % rep.values.size();
        good += std::abs(h.query(i, 0.05, rng).value.real() - rep.values[i]) <= 0.05;
    }
    EXPECT_GE(good, 2000);
    const auto before = h.ledger().snapshot();
    EXPECT_EQ(h.norm_sq(0.1, rng), 1.0);
    const auto diff = h.ledger().snapshot().since(before);
    EXPECT_EQ(diff.total_norms(), 1U);
    EXPECT_EQ(diff.cost_units, 0.0);
}

TEST(PauliSampler, CorollaryCostPerSample) {
    const CorollaryCost c;
    EXPECT_NEAR(c.samples_per_draw(0.3768, 6) / 1.9214e8, 1.0, 1e-4);
    std::vector<cplx> zero(64);
    zero[0] = 1.0;
    const PauliSamplerHandle h(pauli_representation(DenseVector(zero)));
    EXPECT_NEAR(h.cost_per_sample(), c.samples_per_draw(0.0, 6), 1e-6);
    Rng rng(10);
    h.sample_valid_counts(10, rng);
    EXPECT_NEAR(h.ledger().snapshot().cost_units, 10 * h.cost_per_sample(), 1e-3);
}

TEST(PauliSampler, PerturbedLawStaysWithinBudget) {
    Rng rng(11);
    CorollaryCost c;
    c.perturb = true;
    c.tvd = 0.1;
    const auto rep = pauli_representation(low_magic_state(3, 1, rng));
    const PauliSamplerHandle h(rep, c);
    const auto truth = h.ground_truth();
    ASSERT_TRUE(truth);
    EXPECT_LE(tvd(l2_distribution(truth->x), l2_distribution(truth->x_sample)), 0.1);
}

TEST(DistributedOverlap, SameAndOrthogonalStates) {
    Rng rng(12);
    const auto psi = low_magic_state(3, 1, rng);
    int same = 0;
    for (int t = 0; t < 100; ++t) same += std::abs(distributed_overlap(psi, psi, 0.1, rng).report.estimate.real() - 1.0) <= 0.1;
    EXPECT_GE(same, 67);
    const auto a = StateBuilder(3).state(), b = StateBuilder(3).x(2).state();
    int orth = 0;
    for (int t = 0; t < 100; ++t) orth += std::abs(distributed_overlap(a, b, 0.1, rng).report.estimate.real()) <= 0.1;
    EXPECT_GE(orth, 67);
}

TEST(DistributedOverlap, KappaIsLargerOneNorm) {
    Rng rng(13);
    const auto a = pauli_representation(low_magic_state(4, 2, rng));
    const auto b = pauli_representation(StateBuilder(4).state());
    EXPECT_NEAR(overlap_kappa(a, b), std::max(one_norm(a.as_vector()), one_norm(b.as_vector())), kTol);
}
