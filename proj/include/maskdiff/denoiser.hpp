#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "maskdiff/core.hpp"

namespace maskdiff {

uint64_t mix64(uint64_t z);
uint64_t hash_combine(uint64_t h, uint64_t v);

// Per-position log-space distributions produced by a denoiser. When `subs`
// is set the output satisfies zero masking probabilities and carry-over
// unmasking at every position.
struct DenoiserOutput {
    int L = 0;
    int K = 0;
    std::vector<double> logp;  // row-major, L*K
    bool subs = false;

    double log_prob(int pos, Token tok) const {
        return logp[static_cast<size_t>(pos) * K + static_cast<size_t>(tok)];
    }
    double prob(int pos, Token tok) const;
    LogSimplex at(int pos) const;
    Simplex probs_at(int pos) const;
};

// Zero Masking Probabilities + Carry-Over Unmasking, applied as output
// substitutions: the mask logit is replaced with -inf before the per-position
// log-softmax, and positions with an unmasked latent become a point mass on
// that latent.
DenoiserOutput subs_wrap(const std::vector<double>& raw_logits,
                         const std::vector<Token>& z, const Vocabulary& vocab);

// Plain per-position log-softmax over all K categories, no substitutions.
// Used by the unsimplified-objective wiring where the model may place mass
// on the mask token.
DenoiserOutput raw_softmax_wrap(const std::vector<double>& raw_logits,
                                const std::vector<Token>& z,
                                const Vocabulary& vocab);

class Denoiser {
  public:
    virtual ~Denoiser() = default;
    virtual DenoiserOutput predict(const std::vector<Token>& z, double t) const = 0;
    virtual bool time_conditioned() const { return false; }
    virtual int seq_len() const = 0;
    virtual const Vocabulary& vocab() const = 0;
};

// Explicit probability table over all n_data^L data sequences. Tiny
// instances only; the constructor enforces n_data^L <= 10^6.
struct DataDistribution {
    Vocabulary vocabulary;
    int L = 0;
    std::vector<double> p;

    static DataDistribution uniform(const Vocabulary& vocab, int L);
    static DataDistribution point_mass(const Vocabulary& vocab,
                                       const std::vector<Token>& seq);
    static DataDistribution random(const Vocabulary& vocab, int L, Rng& rng);
    static DataDistribution from_markov1(const Vocabulary& vocab, int L,
                                         const std::vector<std::vector<double>>& table,
                                         const std::vector<double>& pi0);

    size_t n_sequences() const { return p.size(); }
    std::vector<Token> index_to_seq(size_t idx) const;
    size_t seq_to_index(const std::vector<Token>& seq) const;
    double prob_of(const std::vector<Token>& seq) const;
    double entropy() const;  // nats
    void validate() const;
};

// Exact posterior q(x^l | z_t) by enumeration over the data distribution.
// Satisfies both SUBS constraints by construction and ignores time.
class BayesDenoiser : public Denoiser {
  public:
    explicit BayesDenoiser(DataDistribution dist);

    DenoiserOutput predict(const std::vector<Token>& z, double t) const override;
    int seq_len() const override { return dist_.L; }
    const Vocabulary& vocab() const override { return dist_.vocabulary; }
    const DataDistribution& distribution() const { return dist_; }

  private:
    DataDistribution dist_;
};

// Seeded deterministic denoiser with pseudo-random per-position outputs.
// kSubs projects through subs_wrap; kRaw keeps mass on the mask token and is
// the mask-unconstrained wiring used by the unsimplified objective.
class TabularDenoiser : public Denoiser {
  public:
    enum class Mode { kSubs, kRaw };

    TabularDenoiser(Vocabulary vocab, int L, uint64_t seed, Mode mode);

    DenoiserOutput predict(const std::vector<Token>& z, double t) const override;
    int seq_len() const override { return L_; }
    const Vocabulary& vocab() const override { return vocab_; }
    // Same raw logits, other wrapping.
    TabularDenoiser with_mode(Mode mode) const;

  private:
    Vocabulary vocab_;
    int L_;
    uint64_t seed_;
    Mode mode_;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
};

// One bias-corrected Adam update; `step` is 1-based.
void adam_step(std::vector<double>& params, const std::vector<double>& grad,
               AdamState& state, long step, double lr, double beta1,
               double beta2, double eps_adam);

// Trainable stand-in for the transformer backbone: position-tagged token
// embeddings summed into a context bag, one tanh hidden layer, per-position
// logits over the non-mask tokens, SUBS substitutions on the way out.
class ContextBagModel : public Denoiser {
  public:
    struct Config {
        int L = 0;
        int d_emb = 16;
        int d_hidden = 32;
        bool time_conditioning = false;
    };

    struct BatchItem {
        const std::vector<Token>* x = nullptr;  // clean data sequence
        const std::vector<Token>* z = nullptr;  // latent, consistent with x
        double t = 0.0;
        double weight = 0.0;  // NELBO coefficient, negative
    };

    ContextBagModel(Vocabulary vocab, Config cfg);

    void init_zero();
    void init_random(Rng& rng);  // uniform in [-0.1, 0.1]

    DenoiserOutput predict(const std::vector<Token>& z, double t) const override;
    bool time_conditioned() const override { return cfg_.time_conditioning; }
    int seq_len() const override { return cfg_.L; }
    const Vocabulary& vocab() const override { return vocab_; }
    const Config& config() const { return cfg_; }

    // loss = sum_b weight_b * sum_l log<x_theta^l, x^l>, nonnegative since
    // the weights are negative. Gradients are accumulated into `grads`
    // (same array layout as param_arrays), sequentially over the batch.
    double loss_and_grad(std::span<const BatchItem> batch,
                         std::vector<std::vector<double>>* grads) const;

    std::vector<std::vector<double>>* mutable_params() { return &params_; }
    const std::vector<std::vector<double>>& params() const { return params_; }
    std::vector<std::vector<double>> zero_like_params() const;
    // Array names and shapes, aligned with params(): emb [K,L,d_emb],
    // w1 [d_hidden,d_emb], b1 [d_hidden], w2 [L*(K-1),d_hidden],
    // b2 [L*(K-1)], wt [d_emb,8] (time conditioning only).
    std::vector<std::string> param_names() const;
    std::vector<std::vector<int>> param_shapes() const;

    std::vector<double> raw_logits(const std::vector<Token>& z, double t) const;

  private:
    Vocabulary vocab_;
    Config cfg_;
    // params_[0]=emb, [1]=w1, [2]=b1, [3]=w2, [4]=b2, [5]=wt (optional)
    std::vector<std::vector<double>> params_;

    std::vector<double> time_features(double t) const;
};

}  // namespace maskdiff
