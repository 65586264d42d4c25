#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskdiff/forward.hpp"

using namespace maskdiff;

namespace {

const Vocabulary kVocab = Vocabulary::with_data_tokens(2);  // a, b, mask

NoiseSchedule log_linear() { return NoiseSchedule{}; }

double max_diff(const Simplex& a, const Simplex& b) {
    double d = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
}

}  // namespace

TEST_CASE("marginal interpolates data and prior") {
    const NoiseSchedule s = log_linear();
    const PriorSpec masked = PriorSpec::masked(kVocab);

    const Simplex near_data = marginal(1, 0.0, s, masked, kVocab);
    CHECK(near_data[1] > 1.0 - 1e-4);

    const Simplex near_prior = marginal(1, 1.0, s, masked, kVocab);
    CHECK(near_prior[kVocab.mask_index] > 1.0 - 1e-4);

    // alpha = 0.4 at t = 0.6 under the log-linear schedule
    const Simplex mid = marginal(1, 0.6, s, masked, kVocab);
    CHECK(mid[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(mid[1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(mid[2] == doctest::Approx(0.6).epsilon(1e-12));

    CHECK_THROWS_AS(marginal(kVocab.mask_index, 0.5, s, masked, kVocab),
                    DataContainsMask);
}

TEST_CASE("marginal mask mass equals 1 - alpha exactly") {
    const NoiseSchedule s = log_linear();
    const PriorSpec masked = PriorSpec::masked(kVocab);
    for (double t = 0.05; t < 1.0; t += 0.07) {
        const Simplex m = marginal(0, t, s, masked, kVocab);
        CHECK(m[kVocab.mask_index] ==
              doctest::Approx(1.0 - s.alpha(t)).epsilon(1e-15));
    }
}

TEST_CASE("transition transfers mass to the prior") {
    const NoiseSchedule s = log_linear();
    const PriorSpec masked = PriorSpec::masked(kVocab);

    CHECK_THROWS_AS(transition(0, 0.5, 0.5, s, masked, kVocab), TimeOrderError);

    // alpha_s = 0.8 at t=0.2, alpha_t = 0.4 at t=0.6: alpha_{t|s} = 0.5
    const Simplex tr = transition(0, 0.2, 0.6, s, masked, kVocab);
    CHECK(tr[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(tr[kVocab.mask_index] == doctest::Approx(0.5).epsilon(1e-12));

    const Simplex absorbed =
        transition(kVocab.mask_index, 0.2, 0.9, s, masked, kVocab);
    CHECK(absorbed[kVocab.mask_index] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("chapman-kolmogorov composition") {
    const PriorSpec masked = PriorSpec::masked(kVocab);
    NoiseSchedule scheds[4];
    scheds[0].kind = ScheduleKind::log_linear;
    scheds[1].kind = ScheduleKind::cosine;
    scheds[2].kind = ScheduleKind::cosine_squared;
    scheds[3].kind = ScheduleKind::linear;
    scheds[3].sigma_max = 10.0;  // production default underflows alpha

    Rng rng(5);
    for (const NoiseSchedule& s : scheds) {
        for (int trial = 0; trial < 20; ++trial) {
            double r = 0.05 + 0.3 * rng.next_unit();
            double mid = r + 0.05 + 0.3 * rng.next_unit();
            double t = mid + 0.05 + 0.2 * rng.next_unit();
            const Token z0 = trial % 2 == 0 ? 0 : kVocab.mask_index;

            const Simplex direct = transition(z0, r, t, s, masked, kVocab);
            const Simplex leg1 = transition(z0, r, mid, s, masked, kVocab);
            Simplex composed;
            composed.probs.assign(static_cast<size_t>(kVocab.K), 0.0);
            for (int z1 = 0; z1 < kVocab.K; ++z1) {
                if (leg1[z1] == 0.0) {
                    continue;
                }
                const Simplex leg2 =
                    transition(z1, mid, t, s, masked, kVocab);
                for (int z2 = 0; z2 < kVocab.K; ++z2) {
                    composed.probs[static_cast<size_t>(z2)] += leg1[z1] * leg2[z2];
                }
            }
            CHECK(max_diff(direct, composed) < 1e-12);
        }
    }
}

TEST_CASE("general posterior against enumeration with a uniform prior") {
    Vocabulary v3 = Vocabulary::with_data_tokens(2);
    v3.K = 3;
    const NoiseSchedule sched = log_linear();
    const PriorSpec uniform = PriorSpec::uniform(v3);
    // alpha_s = 0.9 -> s = 0.1; alpha_t = 0.6 -> t = 0.4
    const double s = 0.1, t = 0.4;
    for (Token x = 0; x < 2; ++x) {
        for (Token z_t = 0; z_t < v3.K; ++z_t) {
            // brute-force Bayes over the two-step chain
            Simplex expected;
            expected.probs.assign(static_cast<size_t>(v3.K), 0.0);
            const Simplex q_s = marginal(x, s, sched, uniform, v3);
            double denom = 0.0;
            for (int z_s = 0; z_s < v3.K; ++z_s) {
                const Simplex step = transition(z_s, s, t, sched, uniform, v3);
                expected.probs[static_cast<size_t>(z_s)] = q_s[z_s] * step[z_t];
                denom += q_s[z_s] * step[z_t];
            }
            for (auto& p : expected.probs) {
                p /= denom;
            }
            const Simplex got =
                posterior_general(z_t, x, s, t, sched, uniform, v3);
            CHECK(max_diff(got, expected) < 1e-12);
        }
    }
}

TEST_CASE("masked posterior simplification") {
    const NoiseSchedule sched = log_linear();
    // alpha_s = 0.6 (s=0.4), alpha_t = 0.4 (t=0.6)
    const Simplex p = posterior_masked(kVocab.mask_index, 0, 0.4, 0.6, sched, kVocab);
    CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(p[kVocab.mask_index] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const Simplex copied = posterior_masked(1, 1, 0.4, 0.6, sched, kVocab);
    CHECK(copied[1] == doctest::Approx(1.0).epsilon(1e-15));

    const Simplex degenerate =
        posterior_masked_alpha(kVocab.mask_index, 0, 0.5, 0.5, kVocab);
    CHECK(degenerate[kVocab.mask_index] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("general posterior collapses to the masked form") {
    const NoiseSchedule sched = log_linear();
    const PriorSpec masked = PriorSpec::masked(kVocab);
    double worst = 0.0;
    for (int a = 0; a < 20; ++a) {
        for (int b = 0; b < 20; ++b) {
            const double alpha_s = (a + 1.0) / 21.0;
            const double alpha_t = (b + 1.0) / 21.0;
            if (alpha_s <= alpha_t) {
                continue;
            }
            const double s = 1.0 - alpha_s;
            const double t = 1.0 - alpha_t;
            for (Token z_t : {Token(0), kVocab.mask_index}) {
                const Simplex general =
                    posterior_general(z_t, 0, s, t, sched, masked, kVocab);
                const Simplex simplified =
                    posterior_masked(z_t, 0, s, t, sched, kVocab);
                worst = std::max(worst, max_diff(general, simplified));
            }
        }
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("unreachable latents are rejected") {
    const NoiseSchedule sched = log_linear();
    const PriorSpec masked = PriorSpec::masked(kVocab);
    // Under the masked prior, z_t = b is unreachable from x = a.
    CHECK_THROWS_AS(posterior_general(1, 0, 0.2, 0.6, sched, masked, kVocab),
                    UnreachableLatent);
}

TEST_CASE("bayes consistency of the masked posterior") {
    const NoiseSchedule sched = log_linear();
    const PriorSpec masked = PriorSpec::masked(kVocab);
    const double s = 0.3, t = 0.7;
    for (Token x = 0; x < kVocab.n_data(); ++x) {
        const Simplex q_t_marg = marginal(x, t, sched, masked, kVocab);
        const Simplex q_s_marg = marginal(x, s, sched, masked, kVocab);
        for (Token z_t : {x, static_cast<Token>(kVocab.mask_index)}) {
            const Simplex post = posterior_masked(z_t, x, s, t, sched, kVocab);
            // q(z_s | z_t, x) q(z_t | x) = q(z_t | z_s) q(z_s | x)
            for (int z_s = 0; z_s < kVocab.K; ++z_s) {
                if (post[z_s] == 0.0) {
                    continue;
                }
                const Simplex fwd = transition(z_s, s, t, sched, masked, kVocab);
                CHECK(post[z_s] * q_t_marg[z_t] ==
                      doctest::Approx(fwd[z_t] * q_s_marg[z_s]).epsilon(1e-12));
            }
        }
    }
}
