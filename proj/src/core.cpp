#include "maskdiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maskdiff {

namespace {

constexpr double kSimplexTol = 1e-12;

inline uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Vocabulary Vocabulary::with_data_tokens(int n_data) {
    if (n_data < 1) {
        throw ConfigError("vocabulary needs at least one data token");
    }
    Vocabulary v;
    v.K = n_data + 1;
    v.mask_index = n_data;
    v.symbols.reserve(static_cast<size_t>(v.K));
    for (int i = 0; i < n_data; ++i) {
        v.symbols.push_back("v" + std::to_string(i));
    }
    v.symbols.push_back("<mask>");
    return v;
}

void Vocabulary::validate() const {
    if (K < 2) {
        throw ConfigError("vocabulary must have K >= 2");
    }
    if (mask_index < 0 || mask_index >= K) {
        throw ConfigError("mask_index out of range");
    }
    if (!symbols.empty() && static_cast<int>(symbols.size()) != K) {
        throw ConfigError("symbol table size does not match K");
    }
}

bool has_mask(const std::vector<Token>& seq, const Vocabulary& vocab) {
    return std::any_of(seq.begin(), seq.end(),
                       [&](Token t) { return vocab.is_mask(t); });
}

void validate_tokens(const std::vector<Token>& seq, const Vocabulary& vocab) {
    for (Token t : seq) {
        if (t < 0 || t >= vocab.K) {
            throw ShapeError("token id " + std::to_string(t) +
                             " outside vocabulary of size " + std::to_string(vocab.K));
        }
    }
}

void validate_data_seq(const std::vector<Token>& seq, const Vocabulary& vocab) {
    validate_tokens(seq, vocab);
    if (has_mask(seq, vocab)) {
        throw DataContainsMask("data sequence contains the mask token");
    }
}

void Simplex::validate() const {
    if (probs.empty()) {
        throw InvalidDistribution("empty distribution");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) {  // catches negatives and NaN
            throw InvalidDistribution("negative or non-finite probability");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTol) {
        throw InvalidDistribution("probabilities sum to " + std::to_string(sum));
    }
}

Simplex point_mass(int k, int index) {
    Simplex s;
    s.probs.assign(static_cast<size_t>(k), 0.0);
    s.probs[static_cast<size_t>(index)] = 1.0;
    return s;
}

uint64_t Rng::next_u64() {
    ++counter_;
    return splitmix64(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

Rng Rng::fork(uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

Token sample_categorical(const Simplex& p, Rng& rng) {
    p.validate();
    const double u = rng.next_unit();
    double cum = 0.0;
    const int n = p.size();
    for (int i = 0; i < n; ++i) {
        cum += p[i];
        if (u < cum) {
            return i;
        }
    }
    // u landed in the rounding slack past the last positive entry.
    for (int i = n - 1; i >= 0; --i) {
        if (p[i] > 0.0) {
            return i;
        }
    }
    throw InvalidDistribution("no positive probability entry");
}

double log_prob_of(const LogSimplex& p, Token target, int mask_index) {
    if (target < 0 || target >= static_cast<Token>(p.logp.size())) {
        throw ShapeError("target index out of range");
    }
    if (p.subs && target == mask_index) {
        throw MaskQueryError("queried mask probability of a SUBS-constrained output");
    }
    return p.logp[static_cast<size_t>(target)];
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    double max_logit = neg_inf;
    for (double v : logits) {
        max_logit = std::max(max_logit, v);
    }
    std::vector<double> out(logits.size(), neg_inf);
    if (max_logit == neg_inf) {
        throw NumericalError("log_softmax of all -inf logits");
    }
    double sum = 0.0;
    for (double v : logits) {
        sum += std::exp(v - max_logit);
    }
    const double lse = max_logit + std::log(sum);
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] == neg_inf ? neg_inf : logits[i] - lse;
    }
    return out;
}

}  // namespace maskdiff
