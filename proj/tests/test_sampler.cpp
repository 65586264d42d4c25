#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "maskdiff/oracle.hpp"
#include "maskdiff/sampler.hpp"

using namespace maskdiff;

namespace {

const Vocabulary kVocab3 = Vocabulary::with_data_tokens(2);
const Vocabulary kVocab4 = Vocabulary::with_data_tokens(3);
const NoiseSchedule kLogLinear{};

}  // namespace

TEST_CASE("reverse step copies unmasked positions") {
    TabularDenoiser den(kVocab3, 3, 1, TabularDenoiser::Mode::kSubs);
    const std::vector<Token> z = {0, 1, 0};
    Rng rng(2);
    const auto out = reverse_step(z, den.predict(z, 0.5), 0.8, 0.4, rng, kVocab3);
    CHECK(out == z);
}

TEST_CASE("degenerate step keeps masks in place") {
    TabularDenoiser den(kVocab3, 2, 1, TabularDenoiser::Mode::kSubs);
    const std::vector<Token> z = {kVocab3.mask_index, 1};
    Rng rng(3);
    const auto out = reverse_step(z, den.predict(z, 0.5), 0.4, 0.4, rng, kVocab3);
    CHECK(out == z);
}

TEST_CASE("full-range step lands on the predicted token") {
    // point mass x_theta on token 0; alpha_s ~ 1, alpha_t ~ 0
    std::vector<Token> z = {kVocab3.mask_index};
    std::vector<double> logits = {60.0, 0.0, 0.0};
    const DenoiserOutput xout = subs_wrap(logits, z, kVocab3);
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const auto out =
            reverse_step(z, xout, 1.0 - 1e-9, 1e-9, rng, kVocab3);
        CHECK(out[0] == 0);
    }
}

TEST_CASE("single-step sampling unmasks everything with one call") {
    TabularDenoiser den(kVocab4, 4, 9, TabularDenoiser::Mode::kSubs);
    Rng rng(4);
    const SampleResult r = ancestral_sample(den, kLogLinear, 1, rng, false);
    CHECK(r.stats.denoiser_calls == 1);
    CHECK(r.stats.steps == 1);
    CHECK(!has_mask(r.tokens, kVocab4));
    CHECK(r.stats.tokens_unmasked_per_step[0] == 4);
}

TEST_CASE("finished samples never contain the mask and unmasking is monotone") {
    TabularDenoiser den(kVocab4, 5, 10, TabularDenoiser::Mode::kSubs);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const SampleResult r = ancestral_sample(den, kLogLinear, 12, rng, false);
        CHECK(!has_mask(r.tokens, kVocab4));
        const int total = std::accumulate(
            r.stats.tokens_unmasked_per_step.begin(),
            r.stats.tokens_unmasked_per_step.end(), 0);
        CHECK(total == 5);  // nondecreasing unmasked set, each position once
        for (int c : r.stats.tokens_unmasked_per_step) {
            CHECK(c >= 0);
        }
    }
}

TEST_CASE("cached and uncached trajectories are bit identical") {
    ContextBagModel model(kVocab4, {6, 10, 12, false});
    Rng init(11);
    model.init_random(init);
    for (int T : {4, 16, 64}) {
        long saved_runs = 0;
        for (uint64_t seed = 0; seed < 50; ++seed) {
            Rng r1 = Rng(seed).fork(1);
            Rng r2 = Rng(seed).fork(1);
            const SampleResult off =
                ancestral_sample(model, kLogLinear, T, r1, false);
            const SampleResult on =
                ancestral_sample(model, kLogLinear, T, r2, true);
            CHECK(off.tokens == on.tokens);
            CHECK(on.stats.denoiser_calls <= off.stats.denoiser_calls);
            CHECK(off.stats.denoiser_calls == T);
            saved_runs += on.stats.denoiser_calls < off.stats.denoiser_calls;
        }
        if (T >= 16) {
            CHECK(saved_runs == 50);  // more steps than positions forces reuse
        }
    }
}

TEST_CASE("cache demands a time-free denoiser") {
    ContextBagModel model(kVocab4, {3, 6, 6, true});
    Rng init(12);
    model.init_random(init);
    Rng rng(13);
    CHECK_THROWS_AS(ancestral_sample(model, kLogLinear, 4, rng, true),
                    CacheRequiresTimeFree);
    CHECK_NOTHROW(ancestral_sample(model, kLogLinear, 4, rng, false));
}

TEST_CASE("empirical sample distribution matches the DP oracle") {
    TabularDenoiser den(kVocab3, 2, 20, TabularDenoiser::Mode::kSubs);
    const int T = 4;
    const std::vector<double> exact = sampler_distribution(den, kLogLinear, T);
    std::vector<long> counts(exact.size(), 0);
    const long n = 20000;
    Rng base(21);
    for (long i = 0; i < n; ++i) {
        Rng rng = base.fork(static_cast<uint64_t>(i));
        const SampleResult r = ancestral_sample(den, kLogLinear, T, rng, false);
        size_t idx = 0;
        for (Token t : r.tokens) {
            idx = idx * 2 + static_cast<size_t>(t);
        }
        ++counts[idx];
    }
    double tv = 0.0;
    for (size_t i = 0; i < exact.size(); ++i) {
        tv += std::abs(static_cast<double>(counts[i]) / n - exact[i]);
    }
    CHECK(tv * 0.5 <= 0.03);
}

TEST_CASE("semi-AR with zero rounds equals plain sampling") {
    TabularDenoiser den(kVocab4, 6, 30, TabularDenoiser::Mode::kSubs);
    Rng r1(31), r2(31);
    const SampleResult plain = ancestral_sample(den, kLogLinear, 8, r1, false);
    const SampleResult sar =
        semi_ar_generate(den, kLogLinear, 8, 3, 0, r2, false);
    CHECK(plain.tokens == sar.tokens);
}

TEST_CASE("semi-AR preserves prefixes and extends length") {
    ContextBagModel model(kVocab4, {8, 10, 12, false});
    Rng init(32);
    model.init_random(init);
    Rng rng(33);
    const int L = 8, Lp = 4, rounds = 3;
    const SampleResult out =
        semi_ar_generate(model, kLogLinear, 16, Lp, rounds, rng, true);
    CHECK(static_cast<int>(out.tokens.size()) == L + rounds * Lp);
    CHECK(!has_mask(out.tokens, kVocab4));

    CHECK_THROWS_AS(semi_ar_generate(model, kLogLinear, 4, 8, 1, rng, true),
                    BlockSizeError);
    CHECK_THROWS_AS(semi_ar_generate(model, kLogLinear, 4, 0, 1, rng, true),
                    BlockSizeError);
}

TEST_CASE("invalid step counts are rejected") {
    TabularDenoiser den(kVocab3, 2, 40, TabularDenoiser::Mode::kSubs);
    Rng rng(41);
    CHECK_THROWS_AS(ancestral_sample(den, kLogLinear, 0, rng, false),
                    InvalidSteps);
}
