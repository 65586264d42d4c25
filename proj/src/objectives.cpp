#include "maskdiff/objectives.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace maskdiff {

namespace {

constexpr double kDefaultClamp = 1e-5;
constexpr size_t kExhaustiveStateGuard = 4096;
constexpr int kExhaustiveStepGuard = 1024;

void check_exhaustive_guard(const Vocabulary& vocab, int L, int T) {
    double states = 1.0;
    for (int l = 0; l < L; ++l) {
        states *= vocab.K;
    }
    if (states > static_cast<double>(kExhaustiveStateGuard)) {
        throw TooLarge("exhaustive mode limited to K^L <= 4096");
    }
    if (T > kExhaustiveStepGuard) {
        throw TooLarge("exhaustive mode limited to T <= 1024");
    }
}

// Mask patterns are binary per position, so expectation sweeps need only
// 2^L cases.
void check_pattern_guard(int L) {
    if (L > 12) {
        throw TooLarge("exact mask-pattern expectation limited to 2^L <= 4096");
    }
}

// Sum of -log<x_theta^l, x^l> over the masked positions of z.
double masked_nll(const DenoiserOutput& xout, const std::vector<Token>& x,
                  const std::vector<Token>& z, const Vocabulary& vocab) {
    double total = 0.0;
    for (size_t l = 0; l < x.size(); ++l) {
        if (vocab.is_mask(z[l])) {
            total -= xout.log_prob(static_cast<int>(l), x[l]);
        }
    }
    return total;
}

// All-positions variant used by the unconstrained reconstruction term.
double full_nll(const DenoiserOutput& xout, const std::vector<Token>& x) {
    double total = 0.0;
    for (size_t l = 0; l < x.size(); ++l) {
        total -= xout.log_prob(static_cast<int>(l), x[l]);
    }
    return total;
}

}  // namespace

ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "d3pm_full") return ObjectiveKind::d3pm_full;
    if (s == "rb2") return ObjectiveKind::rb2;
    if (s == "rb2_rb1_discrete") return ObjectiveKind::rb2_rb1_discrete;
    if (s == "continuous") return ObjectiveKind::continuous;
    throw ConfigError("unknown objective kind: " + s);
}

std::string to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::d3pm_full: return "d3pm_full";
        case ObjectiveKind::rb2: return "rb2";
        case ObjectiveKind::rb2_rb1_discrete: return "rb2_rb1_discrete";
        case ObjectiveKind::continuous: return "continuous";
    }
    return "?";
}

void ObjectiveVariant::validate() const {
    if (kind != ObjectiveKind::continuous && T < 1) {
        throw InvalidSteps("discrete objective needs T >= 1");
    }
}

double kl_term_unsimplified(const DenoiserOutput& xout, int pos, Token x,
                            Token z_t, double alpha_s, double alpha_t,
                            const Vocabulary& vocab) {
    if (z_t == x) {
        return 0.0;
    }
    if (!vocab.is_mask(z_t)) {
        throw ShapeError("latent must be the data token or the mask");
    }
    const double pm = xout.prob(pos, vocab.mask_index);
    const double px = xout.prob(pos, x);
    if (px == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double one_mt = 1.0 - alpha_t;
    const double one_ms = 1.0 - alpha_s;
    const double mix_t = alpha_t * pm + one_mt;
    const double mix_s = alpha_s * pm + one_ms;
    const double term1 =
        (alpha_s - alpha_t) / one_mt * std::log(mix_t / (one_mt * px));
    const double term2 =
        one_ms / one_mt * std::log((one_ms * mix_t) / (one_mt * mix_s));
    return term1 + term2;
}

double reconstruction_loss_exhaustive(const std::vector<Token>& x,
                                      const Denoiser& den, int T) {
    if (T < 1) {
        throw InvalidSteps("reconstruction loss needs T >= 1");
    }
    const Vocabulary& vocab = den.vocab();
    const int L = static_cast<int>(x.size());
    check_pattern_guard(L);
    const double mask_prob = 1.0 / static_cast<double>(T + 1);
    double total = 0.0;
    std::vector<Token> z(x);
    for (uint32_t pattern = 0; pattern < (1u << L); ++pattern) {
        double weight = 1.0;
        for (int l = 0; l < L; ++l) {
            const bool masked = (pattern >> l) & 1u;
            z[static_cast<size_t>(l)] =
                masked ? vocab.mask_index : x[static_cast<size_t>(l)];
            weight *= masked ? mask_prob : 1.0 - mask_prob;
        }
        if (weight == 0.0) {
            continue;
        }
        const DenoiserOutput xout = den.predict(z, 0.0);
        total += weight * full_nll(xout, x);
    }
    return total;
}

double reconstruction_loss_mc(const std::vector<Token>& x, const Denoiser& den,
                              int T, Rng& rng) {
    if (T < 1) {
        throw InvalidSteps("reconstruction loss needs T >= 1");
    }
    const Vocabulary& vocab = den.vocab();
    const double alpha0 = static_cast<double>(T) / static_cast<double>(T + 1);
    std::vector<Token> z(x);
    for (size_t l = 0; l < x.size(); ++l) {
        if (rng.next_unit() >= alpha0) {
            z[l] = vocab.mask_index;
        }
    }
    return full_nll(den.predict(z, 0.0), x);
}

double reconstruction_loss_continuous() { return 0.0; }

double prior_loss() {
    // q(z_{t(T)} | x) and p_theta(z_{t(T)}) are both the all-mask point mass.
    return 0.0;
}

double diffusion_loss_discrete_exhaustive(const ObjectiveVariant& variant,
                                          const std::vector<Token>& x,
                                          const Denoiser& den) {
    variant.validate();
    if (variant.kind == ObjectiveKind::continuous) {
        throw ConfigError("exhaustive discrete evaluation needs a discrete variant");
    }
    const Vocabulary& vocab = den.vocab();
    const int L = static_cast<int>(x.size());
    const int T = variant.T;
    check_exhaustive_guard(vocab, L, T);
    validate_data_seq(x, vocab);

    const std::vector<double> grid = discrete_alpha_grid(T);
    double diffusion = 0.0;
    std::vector<Token> z(x);
    for (int i = 1; i <= T; ++i) {
        const double a_s = grid[static_cast<size_t>(i) - 1];
        const double a_t = grid[static_cast<size_t>(i)];
        const double t_in = static_cast<double>(i) / static_cast<double>(T);
        for (uint32_t pattern = 0; pattern < (1u << L); ++pattern) {
            double weight = 1.0;
            for (int l = 0; l < L; ++l) {
                const bool masked = (pattern >> l) & 1u;
                z[static_cast<size_t>(l)] =
                    masked ? vocab.mask_index : x[static_cast<size_t>(l)];
                weight *= masked ? 1.0 - a_t : a_t;
            }
            if (weight == 0.0) {
                continue;
            }
            const DenoiserOutput xout = den.predict(z, t_in);
            double term = 0.0;
            for (int l = 0; l < L; ++l) {
                const bool masked = (pattern >> l) & 1u;
                switch (variant.kind) {
                    case ObjectiveKind::d3pm_full:
                        if (masked) {
                            term += kl_term_unsimplified(
                                xout, l, x[static_cast<size_t>(l)],
                                vocab.mask_index, a_s, a_t, vocab);
                        }
                        break;
                    case ObjectiveKind::rb2:
                        if (masked) {
                            term -= (a_s - a_t) / (1.0 - a_t) *
                                    xout.log_prob(l, x[static_cast<size_t>(l)]);
                        }
                        break;
                    case ObjectiveKind::rb2_rb1_discrete:
                        // carry-over makes unmasked terms zero automatically
                        term -= (a_s - a_t) / (1.0 - a_t) *
                                xout.log_prob(l, x[static_cast<size_t>(l)]);
                        break;
                    case ObjectiveKind::continuous:
                        break;
                }
            }
            diffusion += weight * term;
        }
    }
    return diffusion + reconstruction_loss_exhaustive(x, den, T);
}

double diffusion_loss_discrete_mc(const ObjectiveVariant& variant,
                                  const std::vector<Token>& x,
                                  const Denoiser& den, Rng& rng) {
    variant.validate();
    if (variant.kind == ObjectiveKind::continuous) {
        throw ConfigError("discrete MC evaluation needs a discrete variant");
    }
    const Vocabulary& vocab = den.vocab();
    const int T = variant.T;
    const std::vector<double> grid = discrete_alpha_grid(T);
    int i = 1 + static_cast<int>(rng.next_unit() * T);
    i = std::min(i, T);
    const double a_s = grid[static_cast<size_t>(i) - 1];
    const double a_t = grid[static_cast<size_t>(i)];
    const double t_in = static_cast<double>(i) / static_cast<double>(T);

    std::vector<Token> z(x);
    for (size_t l = 0; l < x.size(); ++l) {
        if (rng.next_unit() >= a_t) {
            z[l] = vocab.mask_index;
        }
    }
    const DenoiserOutput xout = den.predict(z, t_in);
    double term = 0.0;
    for (size_t l = 0; l < x.size(); ++l) {
        const bool masked = vocab.is_mask(z[l]);
        switch (variant.kind) {
            case ObjectiveKind::d3pm_full:
                if (masked) {
                    term += kl_term_unsimplified(xout, static_cast<int>(l), x[l],
                                                 vocab.mask_index, a_s, a_t, vocab);
                }
                break;
            case ObjectiveKind::rb2:
                if (masked) {
                    term -= (a_s - a_t) / (1.0 - a_t) *
                            xout.log_prob(static_cast<int>(l), x[l]);
                }
                break;
            case ObjectiveKind::rb2_rb1_discrete:
                term -= (a_s - a_t) / (1.0 - a_t) *
                        xout.log_prob(static_cast<int>(l), x[l]);
                break;
            case ObjectiveKind::continuous:
                break;
        }
    }
    return static_cast<double>(T) * term +
           reconstruction_loss_mc(x, den, T, rng);
}

double expected_masked_nll(const std::vector<Token>& x, const Denoiser& den,
                           double mask_prob, double t_input) {
    const Vocabulary& vocab = den.vocab();
    const int L = static_cast<int>(x.size());
    check_pattern_guard(L);
    double total = 0.0;
    std::vector<Token> z(x);
    for (uint32_t pattern = 0; pattern < (1u << L); ++pattern) {
        double pw = 1.0;
        for (int l = 0; l < L; ++l) {
            const bool masked = (pattern >> l) & 1u;
            z[static_cast<size_t>(l)] =
                masked ? vocab.mask_index : x[static_cast<size_t>(l)];
            pw *= masked ? mask_prob : 1.0 - mask_prob;
        }
        if (pw == 0.0) {
            continue;
        }
        total += pw * masked_nll(den.predict(z, t_input), x, z, vocab);
    }
    return total;
}

std::vector<double> masked_nll_by_pattern(const std::vector<Token>& x,
                                          const Denoiser& den, double t_input) {
    const Vocabulary& vocab = den.vocab();
    const int L = static_cast<int>(x.size());
    check_pattern_guard(L);
    std::vector<double> table(1u << L, 0.0);
    std::vector<Token> z(x);
    for (uint32_t pattern = 0; pattern < (1u << L); ++pattern) {
        for (int l = 0; l < L; ++l) {
            z[static_cast<size_t>(l)] = (pattern >> l) & 1u
                                            ? vocab.mask_index
                                            : x[static_cast<size_t>(l)];
        }
        table[pattern] = masked_nll(den.predict(z, t_input), x, z, vocab);
    }
    return table;
}

double expected_masked_nll_from_table(const std::vector<double>& table, int L,
                                      double mask_prob) {
    double total = 0.0;
    for (uint32_t pattern = 0; pattern < table.size(); ++pattern) {
        double pw = 1.0;
        for (int l = 0; l < L; ++l) {
            pw *= (pattern >> l) & 1u ? mask_prob : 1.0 - mask_prob;
        }
        if (pw != 0.0) {
            total += pw * table[pattern];
        }
    }
    return total;
}

std::vector<double> group_nll_table_by_mask_count(
    const std::vector<double>& table, int L) {
    std::vector<double> grouped(static_cast<size_t>(L) + 1, 0.0);
    for (uint32_t pattern = 0; pattern < table.size(); ++pattern) {
        grouped[static_cast<size_t>(std::popcount(pattern))] += table[pattern];
    }
    return grouped;
}

double expected_masked_nll_from_grouped(const std::vector<double>& grouped,
                                        double mask_prob) {
    const int L = static_cast<int>(grouped.size()) - 1;
    double total = 0.0;
    for (int k = 0; k <= L; ++k) {
        total += std::pow(mask_prob, k) * std::pow(1.0 - mask_prob, L - k) *
                 grouped[static_cast<size_t>(k)];
    }
    return total;
}

double discrete_nelbo_from_grouped(const std::vector<double>& grouped, int T) {
    const std::vector<double> grid = discrete_alpha_grid(T);
    double total = 0.0;
    for (int i = 1; i <= T; ++i) {
        const double a_s = grid[static_cast<size_t>(i) - 1];
        const double a_t = grid[static_cast<size_t>(i)];
        total += (a_s - a_t) / (1.0 - a_t) *
                 expected_masked_nll_from_grouped(grouped, 1.0 - a_t);
    }
    // reconstruction term at alpha_{t(0)} = T/(T+1)
    total += expected_masked_nll_from_grouped(grouped, 1.0 - grid[0]);
    return total;
}

double nelbo_time_integrand(const std::vector<Token>& x, const Denoiser& den,
                            const NoiseSchedule& sched, double t) {
    t = sched.clamp_t(t);
    const double mask_prob = 1.0 - sched.alpha(t);
    // -w(t) * E[nll] with w(t) = alpha'/(1-alpha) < 0, so the value is >= 0.
    return -sched.loss_weight(t) * expected_masked_nll(x, den, mask_prob, t);
}

NelboEstimate nelbo_continuous_quadrature(const std::vector<Token>& x,
                                          const Denoiser& den,
                                          const NoiseSchedule& sched,
                                          int n_nodes) {
    const Vocabulary& vocab = den.vocab();
    const int L = static_cast<int>(x.size());
    check_pattern_guard(L);
    validate_data_seq(x, vocab);

    // Fixed gamma range from the mask-probability clamp; the same grid for
    // every schedule, which is what makes the objective schedule-free here.
    const double g_lo = std::log(kDefaultClamp);
    const double g_hi = std::log1p(-kDefaultClamp);
    // Time inputs fall back to the nearest representable point when the
    // schedule's own clamped gamma range is narrower than the grid.
    const double sched_lo = sched.gamma_of_t(sched.eps);
    const double sched_hi = sched.gamma_of_t(1.0 - sched.eps);
    std::vector<double> nodes, weights;
    gauss_legendre(n_nodes, &nodes, &weights);

    // Time-free denoisers admit a single per-pattern sweep reused at every
    // node; time-conditioned ones re-predict per node.
    std::vector<double> table;
    if (!den.time_conditioned()) {
        table = masked_nll_by_pattern(x, den, 0.5);
    }

    double value = 0.0;
    for (int j = 0; j < n_nodes; ++j) {
        const double gamma =
            0.5 * (nodes[static_cast<size_t>(j)] + 1.0) * (g_hi - g_lo) + g_lo;
        const double gw = 0.5 * (g_hi - g_lo) * weights[static_cast<size_t>(j)];
        const double mask_prob = std::exp(gamma);
        if (!table.empty()) {
            value += gw * expected_masked_nll_from_table(table, L, mask_prob);
            continue;
        }
        const double t_in =
            sched.t_of_gamma(std::clamp(gamma, sched_lo, sched_hi));
        value += gw * expected_masked_nll(x, den, mask_prob, t_in);
    }
    NelboEstimate est;
    est.value = value;
    est.per_datapoint_variance = 0.0;
    est.n_samples = n_nodes;
    return est;
}

NelboEstimate nelbo_continuous_mc(const std::vector<Token>& x,
                                  const Denoiser& den,
                                  const NoiseSchedule& sched, int n, Rng& rng,
                                  TimeSampler sampler) {
    if (n < 1) {
        throw InvalidSteps("MC estimate needs n >= 1");
    }
    const Vocabulary& vocab = den.vocab();
    validate_data_seq(x, vocab);
    std::vector<double> times;
    if (sampler == TimeSampler::low_discrepancy) {
        times = low_discrepancy_times(n, rng);
    } else {
        times.resize(static_cast<size_t>(n));
        for (double& t : times) {
            t = rng.next_unit();
        }
    }
    std::vector<Token> z(x);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int j = 0; j < n; ++j) {
        const double t = sched.clamp_t(times[static_cast<size_t>(j)]);
        const double alpha = sched.alpha(t);
        for (size_t l = 0; l < x.size(); ++l) {
            z[l] = rng.next_unit() < alpha ? x[l] : vocab.mask_index;
        }
        const double v =
            sched.loss_weight(t) *
            -masked_nll(den.predict(z, t), x, z, vocab);
        sum += v;
        sum_sq += v * v;
    }
    NelboEstimate est;
    est.value = sum / n;
    est.per_datapoint_variance =
        n > 1 ? (sum_sq - sum * sum / n) / (n - 1) : 0.0;
    est.n_samples = n;
    return est;
}

std::vector<double> low_discrepancy_times(int N, Rng& rng) {
    if (N < 1) {
        throw InvalidSteps("stratified sampler needs N >= 1");
    }
    std::vector<double> t(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        double v = (static_cast<double>(i) + rng.next_unit()) / N;
        t[static_cast<size_t>(i)] =
            std::clamp(v, kDefaultClamp, 1.0 - kDefaultClamp);
    }
    for (int i = N - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_unit() * (i + 1));
        std::swap(t[static_cast<size_t>(i)],
                  t[static_cast<size_t>(std::min(j, i))]);
    }
    return t;
}

void gauss_legendre(int n, std::vector<double>* nodes,
                    std::vector<double>* weights) {
    nodes->assign(static_cast<size_t>(n), 0.0);
    weights->assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        // Chebyshev initial guess, Newton on the Legendre recurrence.
        double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                break;
            }
        }
        (*nodes)[static_cast<size_t>(i)] = x;
        (*weights)[static_cast<size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

TrainResult train(ContextBagModel& model,
                  const std::vector<std::vector<Token>>& corpus,
                  const TrainConfig& cfg, const NoiseSchedule& sched,
                  const std::function<void(long, double)>& log_hook) {
    if (corpus.empty()) {
        throw EmptyInput("empty training corpus");
    }
    cfg.objective.validate();
    if (cfg.objective.kind != ObjectiveKind::continuous &&
        cfg.objective.kind != ObjectiveKind::rb2_rb1_discrete) {
        throw ConfigError("training supports the continuous and rb2_rb1 objectives");
    }
    const Vocabulary& vocab = model.vocab();
    const int L = model.seq_len();
    for (const auto& seq : corpus) {
        if (static_cast<int>(seq.size()) != L) {
            throw ShapeError("corpus sequence length does not match the model");
        }
        validate_data_seq(seq, vocab);
    }
    const bool discrete = cfg.objective.kind == ObjectiveKind::rb2_rb1_discrete;
    std::vector<double> grid;
    if (discrete) {
        grid = discrete_alpha_grid(cfg.objective.T);
    }

    Rng master(cfg.seed);
    Rng init_rng = master.fork(0);
    model.init_random(init_rng);
    Rng rng = master.fork(1);

    std::vector<AdamState> adam(model.params().size());
    auto grads = model.zero_like_params();
    std::vector<std::vector<Token>> zs(static_cast<size_t>(cfg.batch_size));
    std::vector<const std::vector<Token>*> xs(static_cast<size_t>(cfg.batch_size));
    std::vector<ContextBagModel::BatchItem> batch(
        static_cast<size_t>(cfg.batch_size));

    TrainResult result;
    for (long step = 0; step < cfg.steps; ++step) {
        const std::vector<double> times =
            low_discrepancy_times(cfg.batch_size, rng);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t idx =
                static_cast<size_t>(rng.next_unit() * corpus.size()) %
                corpus.size();
            const std::vector<Token>& x = corpus[idx];
            xs[static_cast<size_t>(b)] = &x;
            double t = times[static_cast<size_t>(b)];
            double alpha_t = 0.0;
            double weight = 0.0;
            if (discrete) {
                const int T = cfg.objective.T;
                int i = 1 + static_cast<int>(t * T);
                i = std::min(i, T);
                const double a_s = grid[static_cast<size_t>(i) - 1];
                alpha_t = grid[static_cast<size_t>(i)];
                weight = static_cast<double>(T) * (alpha_t - a_s) / (1.0 - alpha_t);
                t = static_cast<double>(i) / static_cast<double>(T);
            } else {
                t = sched.clamp_t(t);
                alpha_t = sched.alpha(t);
                weight = sched.loss_weight(t);
            }
            auto& z = zs[static_cast<size_t>(b)];
            z = x;
            for (int l = 0; l < L; ++l) {
                if (rng.next_unit() >= alpha_t) {
                    z[static_cast<size_t>(l)] = vocab.mask_index;
                }
            }
            batch[static_cast<size_t>(b)] = ContextBagModel::BatchItem{
                xs[static_cast<size_t>(b)], &z, t, weight / cfg.batch_size};
        }
        for (auto& g : grads) {
            std::fill(g.begin(), g.end(), 0.0);
        }
        double loss = 0.0;
        try {
            loss = model.loss_and_grad(batch, &grads);
        } catch (const NumericalError& e) {
            throw NumericalError("training aborted at step " +
                                 std::to_string(step) + ": " + e.what());
        }
        const double lr =
            cfg.warmup_steps > 0
                ? cfg.lr * std::min(1.0, static_cast<double>(step) /
                                             static_cast<double>(cfg.warmup_steps))
                : cfg.lr;
        auto& params = *model.mutable_params();
        for (size_t a = 0; a < params.size(); ++a) {
            adam_step(params[a], grads[a], adam[a], step + 1, lr,
                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        }
        const double nats_per_token = loss / L;
        result.final_loss = nats_per_token;
        if (step % cfg.log_every == 0 || step == cfg.steps - 1) {
            result.loss_trace.emplace_back(step, nats_per_token);
            if (log_hook) {
                log_hook(step, nats_per_token);
            }
        }
    }
    return result;
}

}  // namespace maskdiff
