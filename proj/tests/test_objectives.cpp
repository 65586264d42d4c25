#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskdiff/objectives.hpp"
#include "maskdiff/schedule.hpp"

using namespace maskdiff;

namespace {

const Vocabulary kVocab = Vocabulary::with_data_tokens(3);
const NoiseSchedule kLogLinear{};

DenoiserOutput subs_point(const std::vector<Token>& z, const Vocabulary& vocab,
                          Token target) {
    std::vector<double> logits(z.size() * static_cast<size_t>(vocab.K), 0.0);
    for (size_t l = 0; l < z.size(); ++l) {
        logits[l * static_cast<size_t>(vocab.K) + static_cast<size_t>(target)] =
            60.0;
    }
    return subs_wrap(logits, z, vocab);
}

}  // namespace

TEST_CASE("unsimplified KL term") {
    TabularDenoiser raw(kVocab, 1, 99, TabularDenoiser::Mode::kRaw);
    const std::vector<Token> z = {kVocab.mask_index};
    const DenoiserOutput xout = raw.predict(z, 0.5);

    // z_t = x short-circuits to zero
    CHECK(kl_term_unsimplified(xout, 0, 1, 1, 0.7, 0.4, kVocab) == 0.0);

    // with <x_theta, m> = 0 the bracket collapses to the simplified term
    TabularDenoiser subs = raw.with_mode(TabularDenoiser::Mode::kSubs);
    const DenoiserOutput xs = subs.predict(z, 0.5);
    const double a_s = 0.7, a_t = 0.4;
    const double got =
        kl_term_unsimplified(xs, 0, 1, kVocab.mask_index, a_s, a_t, kVocab);
    const double expected =
        -(a_s - a_t) / (1.0 - a_t) * xs.log_prob(0, 1);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));

    // perfect prediction gives zero KL
    const DenoiserOutput perfect = subs_point(z, kVocab, 1);
    CHECK(std::abs(kl_term_unsimplified(perfect, 0, 1, kVocab.mask_index, a_s,
                                        a_t, kVocab)) < 1e-12);
}

TEST_CASE("exhaustive ladder equalities under SUBS") {
    Rng rng(13);
    for (int inst = 0; inst < 4; ++inst) {
        TabularDenoiser den(kVocab, 3, rng.next_u64(),
                            TabularDenoiser::Mode::kSubs);
        std::vector<Token> x(3);
        for (auto& t : x) {
            t = static_cast<Token>(rng.next_unit() * kVocab.n_data());
        }
        for (int T : {2, 4, 8}) {
            const double d3 = diffusion_loss_discrete_exhaustive(
                {ObjectiveKind::d3pm_full, T}, x, den);
            const double r2 = diffusion_loss_discrete_exhaustive(
                {ObjectiveKind::rb2, T}, x, den);
            const double r21 = diffusion_loss_discrete_exhaustive(
                {ObjectiveKind::rb2_rb1_discrete, T}, x, den);
            CHECK(std::abs(d3 - r2) < 1e-12);
            CHECK(std::abs(r2 - r21) < 1e-12);
            CHECK(r21 >= 0.0);
        }
    }
}

TEST_CASE("mask-unconstrained d3pm exceeds the forced-zero bound") {
    Rng rng(14);
    bool strict_somewhere = false;
    for (int inst = 0; inst < 10; ++inst) {
        TabularDenoiser subs(kVocab, 2, rng.next_u64(),
                             TabularDenoiser::Mode::kSubs);
        TabularDenoiser raw = subs.with_mode(TabularDenoiser::Mode::kRaw);
        std::vector<Token> x = {static_cast<Token>(inst % 3),
                                static_cast<Token>((inst + 1) % 3)};
        const int T = 2 + inst % 5;
        const double unconstrained = diffusion_loss_discrete_exhaustive(
            {ObjectiveKind::d3pm_full, T}, x, raw);
        const double forced = diffusion_loss_discrete_exhaustive(
            {ObjectiveKind::rb2, T}, x, subs);
        CHECK(unconstrained >= forced - 1e-9);
        strict_somewhere = strict_somewhere || unconstrained > forced + 1e-6;
    }
    CHECK(strict_somewhere);
}

TEST_CASE("monte carlo matches the exhaustive value") {
    Rng rng(15);
    TabularDenoiser den(kVocab, 2, 777, TabularDenoiser::Mode::kSubs);
    const std::vector<Token> x = {0, 2};
    const ObjectiveVariant variant{ObjectiveKind::rb2_rb1_discrete, 4};
    const double exact = diffusion_loss_discrete_exhaustive(variant, x, den);
    const int n = 20000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = diffusion_loss_discrete_mc(variant, x, den, rng);
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq - sum * sum / n) / (n - 1) / n);
    CHECK(std::abs(mean - exact) < 3.0 * se + 1e-12);
}

TEST_CASE("reconstruction and prior terms") {
    CHECK(prior_loss() == 0.0);
    CHECK(reconstruction_loss_continuous() == 0.0);

    // Uniform two-token bayes posterior at L=1, T=1: the mask branch has
    // weight 1/2 and costs log 2, the data branch is carried over for free.
    const Vocabulary v3 = Vocabulary::with_data_tokens(2);
    BayesDenoiser den(DataDistribution::uniform(v3, 1));
    const double r = reconstruction_loss_exhaustive({0}, den, 1);
    CHECK(r == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

    // Point-mass data: reconstruction is free at every T.
    BayesDenoiser point(DataDistribution::point_mass(v3, {1}));
    CHECK(reconstruction_loss_exhaustive({1}, point, 3) ==
          doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("perfect denoiser drives every variant to zero") {
    const Vocabulary v3 = Vocabulary::with_data_tokens(2);
    BayesDenoiser den(DataDistribution::point_mass(v3, {1, 0}));
    const std::vector<Token> x = {1, 0};
    for (ObjectiveKind kind : {ObjectiveKind::d3pm_full, ObjectiveKind::rb2,
                               ObjectiveKind::rb2_rb1_discrete}) {
        const double v =
            diffusion_loss_discrete_exhaustive({kind, 4}, x, den);
        CHECK(std::abs(v) < 1e-12);
    }
    CHECK(nelbo_continuous_quadrature(x, den, kLogLinear).value ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two-order chain rule oracle, then quadrature tightness") {
    // Independent oracle: for the exact conditional denoiser every
    // unmasking order telescopes to -log p(x). Verified here by direct
    // enumeration of both orders on an L=2 instance before trusting the
    // quadrature path.
    const Vocabulary v3 = Vocabulary::with_data_tokens(2);
    Rng rng(23);
    const DataDistribution dist = DataDistribution::random(v3, 2, rng);
    auto conditional = [&](int pos, const std::vector<Token>& ctx) {
        // q(x^pos | observed positions of ctx), straight from the table
        double num[2] = {0.0, 0.0};
        for (size_t i = 0; i < dist.n_sequences(); ++i) {
            const std::vector<Token> seq = dist.index_to_seq(i);
            bool ok = true;
            for (size_t l = 0; l < ctx.size(); ++l) {
                if (ctx[l] != v3.mask_index && seq[l] != ctx[l]) {
                    ok = false;
                }
            }
            if (ok) {
                num[seq[static_cast<size_t>(pos)]] += dist.p[i];
            }
        }
        const double tot = num[0] + num[1];
        return std::pair<double, double>{num[0] / tot, num[1] / tot};
    };
    const Token m = v3.mask_index;
    for (size_t i = 0; i < dist.n_sequences(); ++i) {
        const std::vector<Token> x = dist.index_to_seq(i);
        const auto first0 = conditional(0, {m, m});
        const auto then1 = conditional(1, {x[0], m});
        const double order1 =
            -std::log(x[0] == 0 ? first0.first : first0.second) -
            std::log(x[1] == 0 ? then1.first : then1.second);
        const auto first1 = conditional(1, {m, m});
        const auto then0 = conditional(0, {m, x[1]});
        const double order2 =
            -std::log(x[1] == 0 ? first1.first : first1.second) -
            std::log(x[0] == 0 ? then0.first : then0.second);
        const double target = -std::log(dist.p[i]);
        CHECK(order1 == doctest::Approx(target).epsilon(1e-10));
        CHECK(order2 == doctest::Approx(target).epsilon(1e-10));

        // Continuous NELBO with the exact posterior matches the same value.
        BayesDenoiser den(dist);
        const double nelbo = nelbo_continuous_quadrature(x, den, kLogLinear).value;
        CHECK(std::abs(nelbo - target) < 1e-3);
    }
}

TEST_CASE("quadrature is schedule invariant for time-free denoisers") {
    TabularDenoiser den(kVocab, 3, 555, TabularDenoiser::Mode::kSubs);
    const std::vector<Token> x = {0, 2, 1};
    NoiseSchedule scheds[4];
    scheds[0].kind = ScheduleKind::log_linear;
    scheds[1].kind = ScheduleKind::cosine;
    scheds[2].kind = ScheduleKind::cosine_squared;
    scheds[3].kind = ScheduleKind::linear;
    scheds[3].sigma_max = 10.0;
    double lo = 1e300, hi = -1e300;
    for (const auto& s : scheds) {
        const double v = nelbo_continuous_quadrature(x, den, s).value;
        CHECK(v >= 0.0);  // nonnegative-weighted -log-likelihoods
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi - lo < 1e-3);
}

TEST_CASE("warmup keeps the first step from moving parameters") {
    const Vocabulary v3 = Vocabulary::with_data_tokens(2);
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.batch_size = 4;
    cfg.lr = 0.1;
    cfg.warmup_steps = 10;
    cfg.seed = 99;
    ContextBagModel trained(v3, {3, 4, 4, false});
    train(trained, {{0, 1, 0}}, cfg, kLogLinear);

    ContextBagModel reference(v3, {3, 4, 4, false});
    Rng init = Rng(cfg.seed).fork(0);  // same stream the trainer uses
    reference.init_random(init);
    CHECK(trained.params() == reference.params());
}

TEST_CASE("discrete NELBO converges monotonically to the continuous value") {
    TabularDenoiser den(kVocab, 2, 321, TabularDenoiser::Mode::kSubs);
    const std::vector<Token> x = {1, 2};
    const double cont = nelbo_continuous_quadrature(x, den, kLogLinear).value;
    double prev_gap = 1e300;
    for (int T : {4, 16, 64, 256}) {
        const double v = diffusion_loss_discrete_exhaustive(
            {ObjectiveKind::rb2_rb1_discrete, T}, x, den);
        const double gap = std::abs(v - cont);
        CHECK(gap <= prev_gap + 1e-9);
        prev_gap = gap;
    }
    CHECK(prev_gap < 2e-3);
}

TEST_CASE("mc estimator is unbiased for the continuous NELBO") {
    const Vocabulary v3 = Vocabulary::with_data_tokens(2);
    Rng rng(29);
    const DataDistribution dist = DataDistribution::random(v3, 2, rng);
    BayesDenoiser den(dist);
    const std::vector<Token> x = dist.index_to_seq(2);
    const double exact = nelbo_continuous_quadrature(x, den, kLogLinear).value;
    const NelboEstimate mc =
        nelbo_continuous_mc(x, den, kLogLinear, 100000, rng, TimeSampler::iid);
    const double se = std::sqrt(mc.per_datapoint_variance / mc.n_samples);
    CHECK(std::abs(mc.value - exact) < 3.0 * se + 1e-3);
}

TEST_CASE("low discrepancy times cover every stratum") {
    Rng rng(31);
    auto times = low_discrepancy_times(4, rng);
    std::sort(times.begin(), times.end());
    for (int i = 0; i < 4; ++i) {
        CHECK(times[static_cast<size_t>(i)] >= i / 4.0 - 1e-12);
        CHECK(times[static_cast<size_t>(i)] < (i + 1) / 4.0);
    }
    const auto single = low_discrepancy_times(1, rng);
    CHECK(single.size() == 1);
    CHECK(single[0] >= 0.0);
    CHECK(single[0] < 1.0);
    CHECK_THROWS_AS(low_discrepancy_times(0, rng), InvalidSteps);
}

TEST_CASE("stratified times cut the batch-mean estimator variance") {
    // Fixed batch; the only randomness in the estimator is the time draw,
    // with the mask expectation carried out exactly per datapoint.
    const Vocabulary v5 = Vocabulary::with_data_tokens(4);
    const DataDistribution dist = DataDistribution::from_markov1(
        v5, 5,
        {{0.55, 0.35, 0.05, 0.05},
         {0.05, 0.55, 0.35, 0.05},
         {0.05, 0.05, 0.55, 0.35},
         {0.35, 0.05, 0.05, 0.55}},
        {0.25, 0.25, 0.25, 0.25});
    BayesDenoiser den(dist);
    Rng pick(43);
    std::vector<std::vector<Token>> batch;
    for (int b = 0; b < 8; ++b) {
        batch.push_back(
            dist.index_to_seq(static_cast<size_t>(pick.next_unit() *
                                                  dist.n_sequences())));
    }
    const int trials = 300;
    Rng rng(44);
    std::vector<double> ls(trials), is(trials);
    double mean_l = 0.0, mean_i = 0.0;
    const int N = static_cast<int>(batch.size());
    for (int tr = 0; tr < trials; ++tr) {
        Rng r1 = rng.fork(static_cast<uint64_t>(tr) * 2);
        Rng r2 = rng.fork(static_cast<uint64_t>(tr) * 2 + 1);
        const auto strat = low_discrepancy_times(N, r1);
        double acc_l = 0.0, acc_i = 0.0;
        for (int b = 0; b < N; ++b) {
            acc_l += nelbo_time_integrand(batch[static_cast<size_t>(b)], den,
                                          kLogLinear, strat[static_cast<size_t>(b)]);
            acc_i += nelbo_time_integrand(batch[static_cast<size_t>(b)], den,
                                          kLogLinear, r2.next_unit());
        }
        ls[static_cast<size_t>(tr)] = acc_l / N;
        is[static_cast<size_t>(tr)] = acc_i / N;
        mean_l += ls[static_cast<size_t>(tr)];
        mean_i += is[static_cast<size_t>(tr)];
    }
    mean_l /= trials;
    mean_i /= trials;
    double var_l = 0.0, var_i = 0.0;
    for (int tr = 0; tr < trials; ++tr) {
        var_l += (ls[static_cast<size_t>(tr)] - mean_l) *
                 (ls[static_cast<size_t>(tr)] - mean_l);
        var_i += (is[static_cast<size_t>(tr)] - mean_i) *
                 (is[static_cast<size_t>(tr)] - mean_i);
    }
    CHECK(var_l < var_i);
    // the two estimators agree on the value itself
    CHECK(std::abs(mean_l - mean_i) <
          5.0 * std::sqrt(var_i / trials) + 1e-12);
}

TEST_CASE("training is reproducible and reaches the entropy floor") {
    const Vocabulary v5 = Vocabulary::with_data_tokens(4);
    // uniform data: in expectation the model cannot beat L log K_data, so
    // the held-out NELBO converges to the entropy floor
    Rng gen(41);
    auto draw_uniform = [&](int n) {
        std::vector<std::vector<Token>> seqs;
        for (int i = 0; i < n; ++i) {
            std::vector<Token> seq(6);
            for (auto& t : seq) {
                t = static_cast<Token>(gen.next_unit() * 4);
            }
            seqs.push_back(seq);
        }
        return seqs;
    };
    const auto corpus = draw_uniform(512);
    const auto heldout = draw_uniform(128);
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 16;
    cfg.lr = 1e-2;
    cfg.warmup_steps = 20;
    cfg.seed = 7;
    cfg.log_every = 50;

    ContextBagModel m1(v5, {6, 16, 24, false});
    const TrainResult r1 = train(m1, corpus, cfg, kLogLinear);
    ContextBagModel m2(v5, {6, 16, 24, false});
    const TrainResult r2 = train(m2, corpus, cfg, kLogLinear);
    CHECK(m1.params() == m2.params());
    CHECK(r1.loss_trace == r2.loss_trace);

    double nelbo = 0.0;
    for (const auto& seq : heldout) {
        nelbo += nelbo_continuous_quadrature(seq, m1, kLogLinear).value;
    }
    nelbo /= static_cast<double>(heldout.size());
    const double floor = 6.0 * std::log(4.0);
    CHECK(nelbo >= floor * 0.98);
    CHECK(nelbo <= floor * 1.02);
}

TEST_CASE("training memorizes a single-sequence corpus") {
    const Vocabulary v5 = Vocabulary::with_data_tokens(4);
    const std::vector<std::vector<Token>> corpus = {{0, 1, 2, 3, 0, 1}};
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch_size = 8;
    cfg.lr = 1e-2;
    cfg.warmup_steps = 50;
    cfg.seed = 13;
    cfg.log_every = 500;
    ContextBagModel model(v5, {6, 16, 32, false});
    train(model, corpus, cfg, kLogLinear);
    const double nelbo =
        nelbo_continuous_quadrature(corpus[0], model, kLogLinear).value;
    CHECK(nelbo < 0.05);
}

TEST_CASE("training rejects bad inputs") {
    const Vocabulary v3 = Vocabulary::with_data_tokens(2);
    ContextBagModel model(v3, {2, 4, 4, false});
    TrainConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(train(model, {}, cfg, kLogLinear), EmptyInput);
    CHECK_THROWS_AS(train(model, {{0, 1, 0}}, cfg, kLogLinear), ShapeError);
    cfg.objective = {ObjectiveKind::d3pm_full, 4};
    CHECK_THROWS_AS(train(model, {{0, 1}}, cfg, kLogLinear), ConfigError);
}
