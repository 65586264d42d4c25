#include "maskdiff/score.hpp"

#include <algorithm>
#include <cmath>

namespace maskdiff {

namespace {

double k_sedd(double a) {
    return a > 0.0 ? a * std::log(a) - a : 0.0;  // K(0) = 0 by continuity
}

}  // namespace

double RateMatrix::column_sum(int y) const {
    double sum = 0.0;
    for (int yp = 0; yp < K; ++yp) {
        sum += at(yp, y);
    }
    return sum;
}

RateMatrix forward_rate(double t, const NoiseSchedule& sched, int K) {
    const double ratio = sched.alpha_ratio(t);  // alpha'/alpha, negative
    const int mask = K - 1;
    RateMatrix m;
    m.K = K;
    m.r.assign(static_cast<size_t>(K) * K, 0.0);
    for (int y = 0; y < K; ++y) {
        for (int yp = 0; yp < K; ++yp) {
            const double id = yp == y ? 1.0 : 0.0;
            const double mass = yp == mask ? 1.0 : 0.0;
            m.r[static_cast<size_t>(yp) * K + static_cast<size_t>(y)] =
                ratio * (id - mass);
        }
    }
    return m;
}

ConcreteScore concrete_score(Token z_t, const DenoiserOutput& xout, int pos,
                             double alpha_t, const Vocabulary& vocab) {
    if (!xout.subs) {
        throw ShapeError("concrete score requires a SUBS-constrained output");
    }
    ConcreteScore sc;
    sc.s.assign(static_cast<size_t>(vocab.K), 0.0);
    if (vocab.is_mask(z_t)) {
        const double coeff = alpha_t / (1.0 - alpha_t);
        for (int y = 0; y < vocab.K; ++y) {
            if (!vocab.is_mask(y)) {
                sc.s[static_cast<size_t>(y)] = coeff * xout.prob(pos, y);
            }
        }
        sc.s[static_cast<size_t>(vocab.mask_index)] = 1.0;
    } else {
        sc.s[static_cast<size_t>(vocab.mask_index)] = (1.0 - alpha_t) / alpha_t;
        sc.s[static_cast<size_t>(z_t)] = 1.0;
    }
    return sc;
}

double reverse_rate(Token y_prime, Token y, const DenoiserOutput& xout, int pos,
                    double t, const NoiseSchedule& sched,
                    const Vocabulary& vocab) {
    if (!xout.subs) {
        throw ShapeError("reverse rate requires a SUBS-constrained output");
    }
    if (!vocab.is_mask(y)) {
        return 0.0;
    }
    const double w = sched.loss_weight(t);  // alpha'/(1-alpha)
    const double xo = xout.prob(pos, y_prime);
    const double mass = vocab.is_mask(y_prime) ? 1.0 : 0.0;
    return -w * (xo - mass);
}

double sedd_nelbo_integrand(Token y, Token x, const ConcreteScore& score,
                            double t, const NoiseSchedule& sched,
                            const Vocabulary& vocab) {
    const double alpha = sched.alpha(sched.clamp_t(t));
    auto q_t = [&](Token v) -> double {
        if (v == x) return alpha;
        if (vocab.is_mask(v)) return 1.0 - alpha;
        return 0.0;
    };
    const double q_y = q_t(y);
    if (q_y <= 0.0) {
        throw UnreachableLatent("latent has zero forward probability");
    }
    const double ratio_out = sched.alpha_ratio(t);  // alpha'/alpha
    double total = 0.0;
    for (int yp = 0; yp < vocab.K; ++yp) {
        if (yp == y) {
            continue;
        }
        // R_t(y, y') = rate of y' -> y: (alpha'/alpha)(delta - <y, m>).
        const double rate =
            ratio_out * ((yp == y ? 1.0 : 0.0) - (vocab.is_mask(y) ? 1.0 : 0.0));
        if (rate == 0.0) {
            continue;
        }
        const double ratio_q = q_t(yp) / q_y;
        const double s = score[yp];
        double inner = s + k_sedd(ratio_q);
        if (ratio_q > 0.0) {
            inner -= ratio_q * std::log(s);
        }
        total += rate * inner;
    }
    return total;
}

double mdlm_integrand(Token y, Token x, const DenoiserOutput& xout, int pos,
                      double t, const NoiseSchedule& sched,
                      const Vocabulary& vocab) {
    if (!vocab.is_mask(y)) {
        return 0.0;
    }
    return sched.loss_weight(t) * xout.log_prob(pos, x);
}

EquivalenceReport equivalence_report(const Denoiser& den,
                                     const NoiseSchedule& sched, int n_cases,
                                     Rng& rng) {
    const Vocabulary& vocab = den.vocab();
    const int L = den.seq_len();
    EquivalenceReport report;
    report.cases.reserve(static_cast<size_t>(n_cases));
    for (int c = 0; c < n_cases; ++c) {
        // Keep alpha/(1-alpha) moderate so the analytic cancellation inside
        // the score-entropy terms stays below the 1e-10 gate.
        const double t = 0.01 + 0.98 * rng.next_unit();
        const Token x = static_cast<Token>(rng.next_unit() * vocab.n_data());
        const bool latent_masked = rng.next_unit() < 0.5;
        const Token y = latent_masked ? vocab.mask_index : x;
        const int pos = static_cast<int>(rng.next_unit() * L);

        std::vector<Token> z(static_cast<size_t>(L), vocab.mask_index);
        z[static_cast<size_t>(pos)] = y;
        const DenoiserOutput xout = den.predict(z, t);
        const double alpha = sched.alpha(t);
        const ConcreteScore sc = concrete_score(y, xout, pos, alpha, vocab);

        EquivalenceCase ec;
        ec.t = t;
        ec.y = y;
        ec.x = x;
        ec.sedd = sedd_nelbo_integrand(y, x, sc, t, sched, vocab);
        ec.mdlm = mdlm_integrand(y, x, xout, pos, t, sched, vocab);
        ec.deviation = std::abs(ec.sedd - ec.mdlm);

        const RateMatrix fwd = forward_rate(t, sched, vocab.K);
        double rate_dev = 0.0;
        for (int yp = 0; yp < vocab.K; ++yp) {
            if (yp == y) {
                continue;
            }
            const double via_score = sc[yp] * fwd.at(y, yp);
            const double direct =
                reverse_rate(yp, y, xout, pos, t, sched, vocab);
            rate_dev = std::max(rate_dev, std::abs(via_score - direct));
        }
        ec.rate_deviation = rate_dev;
        report.max_abs_deviation =
            std::max(report.max_abs_deviation, ec.deviation);
        report.max_rate_deviation =
            std::max(report.max_rate_deviation, ec.rate_deviation);
        report.cases.push_back(ec);
    }
    return report;
}

}  // namespace maskdiff
