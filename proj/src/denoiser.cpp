#include "maskdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maskdiff {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr size_t kMaxTableSize = 1000000;
constexpr int kTimeFeatures = 8;
constexpr double kPi = 3.14159265358979323846;

size_t checked_pow(int base, int exp) {
    size_t n = 1;
    for (int i = 0; i < exp; ++i) {
        n *= static_cast<size_t>(base);
        if (n > kMaxTableSize) {
            throw TooLarge("data distribution table exceeds the tiny-instance guard");
        }
    }
    return n;
}

}  // namespace

uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t hash_combine(uint64_t h, uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

double DenoiserOutput::prob(int pos, Token tok) const {
    const double lp = log_prob(pos, tok);
    return lp == kNegInf ? 0.0 : std::exp(lp);
}

LogSimplex DenoiserOutput::at(int pos) const {
    LogSimplex out;
    out.logp.assign(logp.begin() + static_cast<long>(pos) * K,
                    logp.begin() + static_cast<long>(pos + 1) * K);
    out.subs = subs;
    return out;
}

Simplex DenoiserOutput::probs_at(int pos) const {
    Simplex s;
    s.probs.resize(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        s.probs[static_cast<size_t>(k)] = prob(pos, k);
    }
    return s;
}

DenoiserOutput subs_wrap(const std::vector<double>& raw_logits,
                         const std::vector<Token>& z, const Vocabulary& vocab) {
    const int L = static_cast<int>(z.size());
    if (raw_logits.size() != static_cast<size_t>(L) * vocab.K) {
        throw ShapeError("raw logits shape does not match sequence");
    }
    DenoiserOutput out;
    out.L = L;
    out.K = vocab.K;
    out.subs = true;
    out.logp.assign(static_cast<size_t>(L) * vocab.K, kNegInf);
    std::vector<double> row(static_cast<size_t>(vocab.K));
    for (int l = 0; l < L; ++l) {
        double* dst = out.logp.data() + static_cast<size_t>(l) * vocab.K;
        if (!vocab.is_mask(z[static_cast<size_t>(l)])) {
            dst[z[static_cast<size_t>(l)]] = 0.0;  // carry-over point mass
            continue;
        }
        for (int k = 0; k < vocab.K; ++k) {
            row[static_cast<size_t>(k)] =
                raw_logits[static_cast<size_t>(l) * vocab.K + k];
        }
        row[static_cast<size_t>(vocab.mask_index)] = kNegInf;
        const std::vector<double> ls = log_softmax(row);
        std::copy(ls.begin(), ls.end(), dst);
    }
    return out;
}

DenoiserOutput raw_softmax_wrap(const std::vector<double>& raw_logits,
                                const std::vector<Token>& z,
                                const Vocabulary& vocab) {
    const int L = static_cast<int>(z.size());
    if (raw_logits.size() != static_cast<size_t>(L) * vocab.K) {
        throw ShapeError("raw logits shape does not match sequence");
    }
    DenoiserOutput out;
    out.L = L;
    out.K = vocab.K;
    out.subs = false;
    out.logp.resize(static_cast<size_t>(L) * vocab.K);
    std::vector<double> row(static_cast<size_t>(vocab.K));
    for (int l = 0; l < L; ++l) {
        for (int k = 0; k < vocab.K; ++k) {
            row[static_cast<size_t>(k)] =
                raw_logits[static_cast<size_t>(l) * vocab.K + k];
        }
        const std::vector<double> ls = log_softmax(row);
        std::copy(ls.begin(), ls.end(),
                  out.logp.begin() + static_cast<long>(l) * vocab.K);
    }
    return out;
}

DataDistribution DataDistribution::uniform(const Vocabulary& vocab, int L) {
    DataDistribution d;
    d.vocabulary = vocab;
    d.L = L;
    const size_t n = checked_pow(vocab.n_data(), L);
    d.p.assign(n, 1.0 / static_cast<double>(n));
    return d;
}

DataDistribution DataDistribution::point_mass(const Vocabulary& vocab,
                                              const std::vector<Token>& seq) {
    validate_data_seq(seq, vocab);
    DataDistribution d;
    d.vocabulary = vocab;
    d.L = static_cast<int>(seq.size());
    const size_t n = checked_pow(vocab.n_data(), d.L);
    d.p.assign(n, 0.0);
    d.p[d.seq_to_index(seq)] = 1.0;
    return d;
}

DataDistribution DataDistribution::random(const Vocabulary& vocab, int L,
                                          Rng& rng) {
    DataDistribution d;
    d.vocabulary = vocab;
    d.L = L;
    const size_t n = checked_pow(vocab.n_data(), L);
    d.p.resize(n);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        d.p[i] = rng.next_unit() + 0.02;  // keep support full
        total += d.p[i];
    }
    for (double& v : d.p) {
        v /= total;
    }
    return d;
}

DataDistribution DataDistribution::from_markov1(
    const Vocabulary& vocab, int L,
    const std::vector<std::vector<double>>& table,
    const std::vector<double>& pi0) {
    const int n_data = vocab.n_data();
    if (static_cast<int>(table.size()) != n_data ||
        static_cast<int>(pi0.size()) != n_data) {
        throw ShapeError("markov table shape does not match vocabulary");
    }
    DataDistribution d;
    d.vocabulary = vocab;
    d.L = L;
    const size_t n = checked_pow(n_data, L);
    d.p.resize(n);
    for (size_t idx = 0; idx < n; ++idx) {
        const std::vector<Token> seq = d.index_to_seq(idx);
        double prob = pi0[static_cast<size_t>(seq[0])];
        for (int l = 1; l < L; ++l) {
            prob *= table[static_cast<size_t>(seq[static_cast<size_t>(l) - 1])]
                         [static_cast<size_t>(seq[static_cast<size_t>(l)])];
        }
        d.p[idx] = prob;
    }
    return d;
}

std::vector<Token> DataDistribution::index_to_seq(size_t idx) const {
    const int n_data = vocabulary.n_data();
    std::vector<Token> seq(static_cast<size_t>(L));
    for (int l = L - 1; l >= 0; --l) {
        seq[static_cast<size_t>(l)] = static_cast<Token>(idx % n_data);
        idx /= static_cast<size_t>(n_data);
    }
    return seq;
}

size_t DataDistribution::seq_to_index(const std::vector<Token>& seq) const {
    const int n_data = vocabulary.n_data();
    size_t idx = 0;
    for (Token t : seq) {
        idx = idx * static_cast<size_t>(n_data) + static_cast<size_t>(t);
    }
    return idx;
}

double DataDistribution::prob_of(const std::vector<Token>& seq) const {
    validate_data_seq(seq, vocabulary);
    return p[seq_to_index(seq)];
}

double DataDistribution::entropy() const {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

void DataDistribution::validate() const {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) {
            throw InvalidDistribution("negative data probability");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw InvalidDistribution("data distribution sums to " + std::to_string(sum));
    }
}

BayesDenoiser::BayesDenoiser(DataDistribution dist) : dist_(std::move(dist)) {
    dist_.validate();
}

DenoiserOutput BayesDenoiser::predict(const std::vector<Token>& z,
                                      double /*t*/) const {
    const Vocabulary& vocab = dist_.vocabulary;
    const int L = dist_.L;
    if (static_cast<int>(z.size()) != L) {
        throw ShapeError("latent length does not match the data distribution");
    }
    DenoiserOutput out;
    out.L = L;
    out.K = vocab.K;
    out.subs = true;
    out.logp.assign(static_cast<size_t>(L) * vocab.K, kNegInf);

    std::vector<double> marg(static_cast<size_t>(L) * vocab.K, 0.0);
    double total = 0.0;
    const size_t n = dist_.n_sequences();
    for (size_t idx = 0; idx < n; ++idx) {
        const double w = dist_.p[idx];
        if (w == 0.0) {
            continue;
        }
        const std::vector<Token> x = dist_.index_to_seq(idx);
        bool consistent = true;
        for (int l = 0; l < L; ++l) {
            const Token zl = z[static_cast<size_t>(l)];
            if (!vocab.is_mask(zl) && zl != x[static_cast<size_t>(l)]) {
                consistent = false;
                break;
            }
        }
        if (!consistent) {
            continue;
        }
        total += w;
        for (int l = 0; l < L; ++l) {
            marg[static_cast<size_t>(l) * vocab.K +
                 static_cast<size_t>(x[static_cast<size_t>(l)])] += w;
        }
    }
    if (total <= 0.0) {
        throw UnreachableLatent("latent inconsistent with the data distribution support");
    }
    for (int l = 0; l < L; ++l) {
        double* dst = out.logp.data() + static_cast<size_t>(l) * vocab.K;
        const Token zl = z[static_cast<size_t>(l)];
        if (!vocab.is_mask(zl)) {
            dst[zl] = 0.0;  // carry-over
            continue;
        }
        for (int k = 0; k < vocab.n_data(); ++k) {
            const double q = marg[static_cast<size_t>(l) * vocab.K +
                                  static_cast<size_t>(k)] / total;
            dst[k] = q > 0.0 ? std::log(q) : kNegInf;
        }
    }
    return out;
}

TabularDenoiser::TabularDenoiser(Vocabulary vocab, int L, uint64_t seed,
                                 Mode mode)
    : vocab_(std::move(vocab)), L_(L), seed_(seed), mode_(mode) {}

TabularDenoiser TabularDenoiser::with_mode(Mode mode) const {
    return TabularDenoiser(vocab_, L_, seed_, mode);
}

DenoiserOutput TabularDenoiser::predict(const std::vector<Token>& z,
                                        double /*t*/) const {
    if (static_cast<int>(z.size()) != L_) {
        throw ShapeError("latent length does not match the denoiser");
    }
    uint64_t h = mix64(seed_);
    for (Token t : z) {
        h = hash_combine(h, static_cast<uint64_t>(t) + 1);
    }
    std::vector<double> logits(static_cast<size_t>(L_) * vocab_.K);
    for (int l = 0; l < L_; ++l) {
        uint64_t hp = hash_combine(h, static_cast<uint64_t>(l) + 101);
        for (int k = 0; k < vocab_.K; ++k) {
            hp = mix64(hp + static_cast<uint64_t>(k) + 1);
            const double u = static_cast<double>(hp >> 11) * 0x1.0p-53;
            logits[static_cast<size_t>(l) * vocab_.K + static_cast<size_t>(k)] =
                2.0 * u - 1.0;
        }
    }
    return mode_ == Mode::kSubs ? subs_wrap(logits, z, vocab_)
                                : raw_softmax_wrap(logits, z, vocab_);
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad,
               AdamState& state, long step, double lr, double beta1,
               double beta2, double eps_adam) {
    if (grad.size() != params.size()) {
        throw ShapeError("gradient shape does not match parameters");
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps_adam);
    }
}

ContextBagModel::ContextBagModel(Vocabulary vocab, Config cfg)
    : vocab_(std::move(vocab)), cfg_(cfg) {
    vocab_.validate();
    if (cfg_.L < 1 || cfg_.d_emb < 1 || cfg_.d_hidden < 1) {
        throw ConfigError("invalid model dimensions");
    }
    const size_t K = static_cast<size_t>(vocab_.K);
    const size_t L = static_cast<size_t>(cfg_.L);
    const size_t de = static_cast<size_t>(cfg_.d_emb);
    const size_t dh = static_cast<size_t>(cfg_.d_hidden);
    const size_t n_logits = L * (K - 1);
    params_.clear();
    params_.push_back(std::vector<double>(K * L * de, 0.0));    // emb
    params_.push_back(std::vector<double>(dh * de, 0.0));       // w1
    params_.push_back(std::vector<double>(dh, 0.0));            // b1
    params_.push_back(std::vector<double>(n_logits * dh, 0.0)); // w2
    params_.push_back(std::vector<double>(n_logits, 0.0));      // b2
    if (cfg_.time_conditioning) {
        params_.push_back(std::vector<double>(de * kTimeFeatures, 0.0));  // wt
    }
}

void ContextBagModel::init_zero() {
    for (auto& arr : params_) {
        std::fill(arr.begin(), arr.end(), 0.0);
    }
}

void ContextBagModel::init_random(Rng& rng) {
    for (auto& arr : params_) {
        for (double& v : arr) {
            v = 0.2 * rng.next_unit() - 0.1;
        }
    }
}

std::vector<std::string> ContextBagModel::param_names() const {
    std::vector<std::string> names = {"emb", "w1", "b1", "w2", "b2"};
    if (cfg_.time_conditioning) {
        names.push_back("wt");
    }
    return names;
}

std::vector<std::vector<int>> ContextBagModel::param_shapes() const {
    std::vector<std::vector<int>> shapes = {
        {vocab_.K, cfg_.L, cfg_.d_emb},
        {cfg_.d_hidden, cfg_.d_emb},
        {cfg_.d_hidden},
        {cfg_.L * (vocab_.K - 1), cfg_.d_hidden},
        {cfg_.L * (vocab_.K - 1)},
    };
    if (cfg_.time_conditioning) {
        shapes.push_back({cfg_.d_emb, kTimeFeatures});
    }
    return shapes;
}

std::vector<std::vector<double>> ContextBagModel::zero_like_params() const {
    std::vector<std::vector<double>> g;
    g.reserve(params_.size());
    for (const auto& arr : params_) {
        g.emplace_back(arr.size(), 0.0);
    }
    return g;
}

std::vector<double> ContextBagModel::time_features(double t) const {
    std::vector<double> f(kTimeFeatures);
    double freq = 1.0;
    for (int i = 0; i < kTimeFeatures / 2; ++i) {
        f[static_cast<size_t>(2 * i)] = std::sin(kPi * freq * t);
        f[static_cast<size_t>(2 * i + 1)] = std::cos(kPi * freq * t);
        freq *= 2.0;
    }
    return f;
}

std::vector<double> ContextBagModel::raw_logits(const std::vector<Token>& z,
                                                double t) const {
    if (static_cast<int>(z.size()) != cfg_.L) {
        throw ShapeError("latent length does not match the model");
    }
    validate_tokens(z, vocab_);
    const int K = vocab_.K;
    const int L = cfg_.L;
    const int de = cfg_.d_emb;
    const int dh = cfg_.d_hidden;
    const auto& emb = params_[0];
    const auto& w1 = params_[1];
    const auto& b1 = params_[2];
    const auto& w2 = params_[3];
    const auto& b2 = params_[4];

    std::vector<double> c(static_cast<size_t>(de), 0.0);
    for (int l = 0; l < L; ++l) {
        const size_t base =
            (static_cast<size_t>(z[static_cast<size_t>(l)]) * L +
             static_cast<size_t>(l)) * static_cast<size_t>(de);
        for (int j = 0; j < de; ++j) {
            c[static_cast<size_t>(j)] += emb[base + static_cast<size_t>(j)];
        }
    }
    if (cfg_.time_conditioning) {
        const auto& wt = params_[5];
        const std::vector<double> tf = time_features(t);
        for (int j = 0; j < de; ++j) {
            double acc = 0.0;
            for (int f = 0; f < kTimeFeatures; ++f) {
                acc += wt[static_cast<size_t>(j) * kTimeFeatures +
                          static_cast<size_t>(f)] * tf[static_cast<size_t>(f)];
            }
            c[static_cast<size_t>(j)] += acc;
        }
    }

    std::vector<double> h(static_cast<size_t>(dh));
    for (int i = 0; i < dh; ++i) {
        double acc = b1[static_cast<size_t>(i)];
        const size_t row = static_cast<size_t>(i) * static_cast<size_t>(de);
        for (int j = 0; j < de; ++j) {
            acc += w1[row + static_cast<size_t>(j)] * c[static_cast<size_t>(j)];
        }
        h[static_cast<size_t>(i)] = std::tanh(acc);
    }

    // Logits over all K slots; the mask slot stays at 0 and is overwritten
    // by the wrapper.
    std::vector<double> logits(static_cast<size_t>(L) * K, 0.0);
    const int n_out = K - 1;
    for (int l = 0; l < L; ++l) {
        for (int v = 0; v < n_out; ++v) {
            const size_t row =
                (static_cast<size_t>(l) * n_out + static_cast<size_t>(v)) *
                static_cast<size_t>(dh);
            double acc = b2[static_cast<size_t>(l) * n_out + static_cast<size_t>(v)];
            for (int i = 0; i < dh; ++i) {
                acc += w2[row + static_cast<size_t>(i)] * h[static_cast<size_t>(i)];
            }
            logits[static_cast<size_t>(l) * K + static_cast<size_t>(v)] = acc;
        }
    }
    return logits;
}

DenoiserOutput ContextBagModel::predict(const std::vector<Token>& z,
                                        double t) const {
    return subs_wrap(raw_logits(z, t), z, vocab_);
}

double ContextBagModel::loss_and_grad(
    std::span<const BatchItem> batch,
    std::vector<std::vector<double>>* grads) const {
    const int K = vocab_.K;
    const int L = cfg_.L;
    const int de = cfg_.d_emb;
    const int dh = cfg_.d_hidden;
    const int n_out = K - 1;
    const auto& emb = params_[0];
    const auto& w1 = params_[1];
    const auto& b1 = params_[2];
    const auto& w2 = params_[3];

    double loss = 0.0;
    for (const BatchItem& item : batch) {
        const std::vector<Token>& x = *item.x;
        const std::vector<Token>& z = *item.z;
        if (static_cast<int>(x.size()) != L || static_cast<int>(z.size()) != L) {
            throw ShapeError("batch item length does not match the model");
        }
        for (int l = 0; l < L; ++l) {
            const Token zl = z[static_cast<size_t>(l)];
            if (!vocab_.is_mask(zl) && zl != x[static_cast<size_t>(l)]) {
                throw NumericalError("carry-over position disagrees with the target");
            }
        }

        // Forward, keeping the intermediates needed for backprop.
        std::vector<double> c(static_cast<size_t>(de), 0.0);
        for (int l = 0; l < L; ++l) {
            const size_t base =
                (static_cast<size_t>(z[static_cast<size_t>(l)]) * L +
                 static_cast<size_t>(l)) * static_cast<size_t>(de);
            for (int j = 0; j < de; ++j) {
                c[static_cast<size_t>(j)] += emb[base + static_cast<size_t>(j)];
            }
        }
        std::vector<double> tf;
        if (cfg_.time_conditioning) {
            const auto& wt = params_[5];
            tf = time_features(item.t);
            for (int j = 0; j < de; ++j) {
                double acc = 0.0;
                for (int f = 0; f < kTimeFeatures; ++f) {
                    acc += wt[static_cast<size_t>(j) * kTimeFeatures +
                              static_cast<size_t>(f)] * tf[static_cast<size_t>(f)];
                }
                c[static_cast<size_t>(j)] += acc;
            }
        }
        std::vector<double> h(static_cast<size_t>(dh));
        for (int i = 0; i < dh; ++i) {
            double acc = b1[static_cast<size_t>(i)];
            const size_t row = static_cast<size_t>(i) * static_cast<size_t>(de);
            for (int j = 0; j < de; ++j) {
                acc += w1[row + static_cast<size_t>(j)] * c[static_cast<size_t>(j)];
            }
            h[static_cast<size_t>(i)] = std::tanh(acc);
        }

        std::vector<double> glogit(static_cast<size_t>(L) * n_out, 0.0);
        std::vector<double> probs(static_cast<size_t>(n_out));
        for (int l = 0; l < L; ++l) {
            if (!vocab_.is_mask(z[static_cast<size_t>(l)])) {
                continue;  // carry-over: log term is exactly zero
            }
            double max_logit = -std::numeric_limits<double>::infinity();
            std::vector<double> row_logits(static_cast<size_t>(n_out));
            for (int v = 0; v < n_out; ++v) {
                const size_t rw =
                    (static_cast<size_t>(l) * n_out + static_cast<size_t>(v)) *
                    static_cast<size_t>(dh);
                double acc = params_[4][static_cast<size_t>(l) * n_out +
                                        static_cast<size_t>(v)];
                for (int i = 0; i < dh; ++i) {
                    acc += w2[rw + static_cast<size_t>(i)] * h[static_cast<size_t>(i)];
                }
                row_logits[static_cast<size_t>(v)] = acc;
                max_logit = std::max(max_logit, acc);
            }
            double zsum = 0.0;
            for (int v = 0; v < n_out; ++v) {
                probs[static_cast<size_t>(v)] =
                    std::exp(row_logits[static_cast<size_t>(v)] - max_logit);
                zsum += probs[static_cast<size_t>(v)];
            }
            const Token target = x[static_cast<size_t>(l)];
            loss += item.weight * (row_logits[static_cast<size_t>(target)] -
                                   max_logit - std::log(zsum));
            if (grads != nullptr) {
                for (int v = 0; v < n_out; ++v) {
                    const double p = probs[static_cast<size_t>(v)] / zsum;
                    glogit[static_cast<size_t>(l) * n_out + static_cast<size_t>(v)] =
                        item.weight * ((v == target ? 1.0 : 0.0) - p);
                }
            }
        }
        if (grads == nullptr) {
            continue;
        }

        auto& gemb = (*grads)[0];
        auto& gw1 = (*grads)[1];
        auto& gb1 = (*grads)[2];
        auto& gw2 = (*grads)[3];
        auto& gb2 = (*grads)[4];

        std::vector<double> gh(static_cast<size_t>(dh), 0.0);
        for (int l = 0; l < L; ++l) {
            for (int v = 0; v < n_out; ++v) {
                const double g =
                    glogit[static_cast<size_t>(l) * n_out + static_cast<size_t>(v)];
                if (g == 0.0) {
                    continue;
                }
                const size_t rw =
                    (static_cast<size_t>(l) * n_out + static_cast<size_t>(v)) *
                    static_cast<size_t>(dh);
                gb2[static_cast<size_t>(l) * n_out + static_cast<size_t>(v)] += g;
                for (int i = 0; i < dh; ++i) {
                    gw2[rw + static_cast<size_t>(i)] += g * h[static_cast<size_t>(i)];
                    gh[static_cast<size_t>(i)] += g * w2[rw + static_cast<size_t>(i)];
                }
            }
        }
        std::vector<double> gc(static_cast<size_t>(de), 0.0);
        for (int i = 0; i < dh; ++i) {
            const double gpre = gh[static_cast<size_t>(i)] *
                                (1.0 - h[static_cast<size_t>(i)] * h[static_cast<size_t>(i)]);
            if (gpre == 0.0) {
                continue;
            }
            gb1[static_cast<size_t>(i)] += gpre;
            const size_t row = static_cast<size_t>(i) * static_cast<size_t>(de);
            for (int j = 0; j < de; ++j) {
                gw1[row + static_cast<size_t>(j)] += gpre * c[static_cast<size_t>(j)];
                gc[static_cast<size_t>(j)] += gpre * w1[row + static_cast<size_t>(j)];
            }
        }
        for (int l = 0; l < L; ++l) {
            const size_t base =
                (static_cast<size_t>(z[static_cast<size_t>(l)]) * L +
                 static_cast<size_t>(l)) * static_cast<size_t>(de);
            for (int j = 0; j < de; ++j) {
                gemb[base + static_cast<size_t>(j)] += gc[static_cast<size_t>(j)];
            }
        }
        if (cfg_.time_conditioning) {
            auto& gwt = (*grads)[5];
            for (int j = 0; j < de; ++j) {
                for (int f = 0; f < kTimeFeatures; ++f) {
                    gwt[static_cast<size_t>(j) * kTimeFeatures +
                        static_cast<size_t>(f)] +=
                        gc[static_cast<size_t>(j)] * tf[static_cast<size_t>(f)];
                }
            }
        }
    }
    if (!std::isfinite(loss)) {
        throw NumericalError("non-finite loss");
    }
    return loss;
}

}  // namespace maskdiff
