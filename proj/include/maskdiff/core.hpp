#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskdiff {

using Token = int32_t;

// Error taxonomy shared across the library. Every failure mode surfaced by
// the public API throws one of these.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define MASKDIFF_DEFINE_ERROR(name) \
    struct name : Error {           \
        using Error::Error;         \
    }

MASKDIFF_DEFINE_ERROR(InvalidDistribution);
MASKDIFF_DEFINE_ERROR(MaskQueryError);
MASKDIFF_DEFINE_ERROR(TimeOrderError);
MASKDIFF_DEFINE_ERROR(UnreachableLatent);
MASKDIFF_DEFINE_ERROR(DataContainsMask);
MASKDIFF_DEFINE_ERROR(InvalidSteps);
MASKDIFF_DEFINE_ERROR(DomainError);
MASKDIFF_DEFINE_ERROR(ShapeError);
MASKDIFF_DEFINE_ERROR(NumericalError);
MASKDIFF_DEFINE_ERROR(CacheRequiresTimeFree);
MASKDIFF_DEFINE_ERROR(BlockSizeError);
MASKDIFF_DEFINE_ERROR(TooLarge);
MASKDIFF_DEFINE_ERROR(EmptyInput);
MASKDIFF_DEFINE_ERROR(ConfigError);
MASKDIFF_DEFINE_ERROR(IoError);

#undef MASKDIFF_DEFINE_ERROR

// K categories, the last one reserved for the mask token.
struct Vocabulary {
    int K = 0;
    int mask_index = 0;
    std::vector<std::string> symbols;  // optional, size K when present

    static Vocabulary with_data_tokens(int n_data);

    int n_data() const { return K - 1; }
    bool is_mask(Token t) const { return t == mask_index; }
    void validate() const;
};

// Sequences are plain token vectors; `kind` from the data model is implicit:
// data sequences never contain the mask index, latents may.
bool has_mask(const std::vector<Token>& seq, const Vocabulary& vocab);
void validate_tokens(const std::vector<Token>& seq, const Vocabulary& vocab);
void validate_data_seq(const std::vector<Token>& seq, const Vocabulary& vocab);

struct Simplex {
    std::vector<double> probs;

    int size() const { return static_cast<int>(probs.size()); }
    double operator[](int i) const { return probs[static_cast<size_t>(i)]; }
    // Throws InvalidDistribution unless entries are nonnegative and sum to 1
    // within 1e-12.
    void validate() const;
};

Simplex point_mass(int k, int index);

// Counter-based deterministic stream (splitmix64 over seed + counter).
// Identical seed and draw order give bit-identical outputs on every platform.
struct Rng {
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t next_u64();
    // Uniform double in [0, 1) with 53 random bits; the scaling is exact.
    double next_unit();
    // Independent substream; forking does not advance this stream.
    Rng fork(uint64_t stream) const;

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_ = 0;
    uint64_t counter_ = 0;
};

// Inverse-CDF draw with cumulative sums in ascending index order.
Token sample_categorical(const Simplex& p, Rng& rng);

// Per-position denoiser distribution held in log space. `subs` marks outputs
// that satisfy the zero-masking + carry-over substitutions.
struct LogSimplex {
    std::vector<double> logp;
    bool subs = false;
};

// Stable extraction of log p[target] from a log-space simplex. Querying the
// mask index of a SUBS-constrained output is a contract violation.
double log_prob_of(const LogSimplex& p, Token target, int mask_index);

// Numerically stable log-softmax; -inf logits are allowed and map to -inf.
std::vector<double> log_softmax(const std::vector<double>& logits);

}  // namespace maskdiff
