#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskdiff/forward.hpp"
#include "maskdiff/score.hpp"

using namespace maskdiff;

namespace {

const Vocabulary kVocab3 = Vocabulary::with_data_tokens(2);  // a, b, mask
const NoiseSchedule kLogLinear{};

DenoiserOutput masked_point_six(const Vocabulary& vocab) {
    // single masked position with <x_theta, a> = 0.6, <x_theta, b> = 0.4
    std::vector<Token> z = {vocab.mask_index};
    std::vector<double> logits = {std::log(0.6), std::log(0.4), 0.0};
    return subs_wrap(logits, z, vocab);
}

}  // namespace

TEST_CASE("forward rate matrix entries and column sums") {
    const RateMatrix m = forward_rate(0.5, kLogLinear, 3);
    // alpha'/alpha = -1/0.5 = -2 under the log-linear schedule
    CHECK(m.at(2, 0) == doctest::Approx(2.0).epsilon(1e-12));   // a -> mask
    CHECK(m.at(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));  // diagonal
    CHECK(m.at(2, 2) == doctest::Approx(0.0).epsilon(1e-15));   // mask absorbs
    CHECK(m.at(0, 1) == 0.0);  // distinct non-mask states never mix
    CHECK(m.at(1, 0) == 0.0);
    for (int y = 0; y < 3; ++y) {
        CHECK(std::abs(m.column_sum(y)) < 1e-12);
    }
}

TEST_CASE("concrete score cases") {
    const DenoiserOutput xout = masked_point_six(kVocab3);
    const ConcreteScore masked =
        concrete_score(kVocab3.mask_index, xout, 0, 0.5, kVocab3);
    CHECK(masked[kVocab3.mask_index] == 1.0);
    // (alpha/(1-alpha)) <x_theta, a> = 1 * 0.6
    CHECK(masked[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(masked[1] == doctest::Approx(0.4).epsilon(1e-12));

    std::vector<Token> z = {0};
    const DenoiserOutput carried = subs_wrap({0.0, 0.0, 0.0}, z, kVocab3);
    const ConcreteScore unmasked = concrete_score(0, carried, 0, 0.5, kVocab3);
    CHECK(unmasked[0] == 1.0);
    CHECK(unmasked[kVocab3.mask_index] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(unmasked[1] == 0.0);
}

TEST_CASE("reverse rate cases") {
    const DenoiserOutput xout = masked_point_six(kVocab3);
    // from the mask into token a at t=0.5: -(alpha'/(1-alpha)) * 0.6 = 1.2
    CHECK(reverse_rate(0, kVocab3.mask_index, xout, 0, 0.5, kLogLinear, kVocab3) ==
          doctest::Approx(1.2).epsilon(1e-10));
    // negative diagonal mass alpha'/(1-alpha) = -2
    CHECK(reverse_rate(kVocab3.mask_index, kVocab3.mask_index, xout, 0, 0.5,
                       kLogLinear, kVocab3) ==
          doctest::Approx(-2.0).epsilon(1e-10));
    // nothing flows out of unmasked states
    std::vector<Token> z = {0};
    const DenoiserOutput carried = subs_wrap({0.0, 0.0, 0.0}, z, kVocab3);
    for (Token yp = 0; yp < kVocab3.K; ++yp) {
        CHECK(reverse_rate(yp, 0, carried, 0, 0.5, kLogLinear, kVocab3) == 0.0);
    }
}

TEST_CASE("exact score zeroes the score-entropy integrand") {
    // With s = q_t(y'|x)/q_t(y|x) each summand collapses through K(a).
    const double t = 0.37;
    const double alpha = kLogLinear.alpha(t);
    const Token x = 0;
    ConcreteScore exact;
    exact.s.assign(3, 0.0);
    exact.s[0] = alpha / (1.0 - alpha);
    exact.s[2] = 1.0;
    const double v =
        sedd_nelbo_integrand(kVocab3.mask_index, x, exact, t, kLogLinear, kVocab3);
    CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("unmasked latents contribute nothing") {
    const DenoiserOutput xout = masked_point_six(kVocab3);
    const ConcreteScore sc = concrete_score(0, xout, 0, 0.4, kVocab3);
    CHECK(sedd_nelbo_integrand(0, 0, sc, 0.4, kLogLinear, kVocab3) == 0.0);
    CHECK(mdlm_integrand(0, 0, xout, 0, 0.4, kLogLinear, kVocab3) == 0.0);
}

TEST_CASE("unreachable latents are rejected") {
    const DenoiserOutput xout = masked_point_six(kVocab3);
    const ConcreteScore sc =
        concrete_score(kVocab3.mask_index, xout, 0, 0.4, kVocab3);
    CHECK_THROWS_AS(sedd_nelbo_integrand(1, 0, sc, 0.4, kLogLinear, kVocab3),
                    UnreachableLatent);
}

TEST_CASE("score-entropy and simplified integrands agree under SUBS") {
    TabularDenoiser den(kVocab3, 2, 50, TabularDenoiser::Mode::kSubs);
    Rng rng(51);
    const EquivalenceReport eq = equivalence_report(den, kLogLinear, 500, rng);
    CHECK(eq.max_abs_deviation < 1e-10);
    CHECK(eq.max_rate_deviation < 1e-12);
    CHECK(eq.cases.size() == 500);
}

TEST_CASE("constant denoiser stays within the equivalence gate") {
    // zero-initialized trainable model: uniform over data tokens everywhere
    ContextBagModel model(kVocab3, {2, 4, 4, false});
    model.init_zero();
    Rng rng(52);
    const EquivalenceReport eq = equivalence_report(model, kLogLinear, 200, rng);
    CHECK(eq.max_abs_deviation < 1e-10);
}

TEST_CASE("transition kernel matches I + R_t h to second order") {
    const PriorSpec masked = PriorSpec::masked(kVocab3);
    NoiseSchedule scheds[2];
    scheds[0].kind = ScheduleKind::cosine;
    scheds[1].kind = ScheduleKind::linear;
    scheds[1].sigma_max = 10.0;
    for (const NoiseSchedule& sched : scheds) {
        const double t = 0.4;
        double err[2];
        const double hs[2] = {1e-3, 1e-4};
        for (int hi = 0; hi < 2; ++hi) {
            const double h = hs[hi];
            const RateMatrix rate = forward_rate(t, sched, kVocab3.K);
            double worst = 0.0;
            for (Token y = 0; y < kVocab3.K; ++y) {
                const Simplex step = transition(y, t, t + h, sched, masked, kVocab3);
                for (int yp = 0; yp < kVocab3.K; ++yp) {
                    const double first_order =
                        (yp == y ? 1.0 : 0.0) + rate.at(yp, y) * h;
                    worst = std::max(worst, std::abs(step[yp] - first_order));
                }
            }
            err[hi] = worst;
        }
        // halving h by 10 should cut the residual by about 100
        CHECK(err[1] <= err[0] / 25.0);
        CHECK(err[0] < 1e-4);
    }
}
