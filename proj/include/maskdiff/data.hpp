#pragma once

#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"

namespace maskdiff {

// Vocabulary file: one symbol per line, line number = category index, last
// line the reserved literal <mask>.
void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

// Corpus file: one sequence per line, whitespace-separated integer ids.
void save_corpus(const std::string& path,
                 const std::vector<std::vector<Token>>& corpus);
std::vector<std::vector<Token>> load_corpus(const std::string& path,
                                            const Vocabulary& vocab);

// Synthetic corpus generators. The manifest records the exact generator so
// judge NLLs and entropy references stay available downstream.
struct GeneratorSpec {
    enum class Kind { uniform, markov1, templated };

    Kind kind = Kind::uniform;
    int k_data = 0;
    int L = 0;
    std::vector<std::vector<double>> table;  // markov1: row-stochastic
    std::vector<double> pi0;                 // markov1 initial distribution
    std::vector<Token> tmpl;                 // templated: -1 marks a free slot

    static GeneratorSpec uniform(int k_data, int L);
    static GeneratorSpec markov1(int k_data, int L,
                                 std::vector<std::vector<double>> table,
                                 std::vector<double> pi0);
    // Doubly stochastic table concentrated on the self and successor
    // transitions; stationary distribution uniform, low entropy rate.
    static GeneratorSpec markov1_structured(int k_data, int L);
    static GeneratorSpec markov1_random(int k_data, int L, Rng& rng);
    static GeneratorSpec templated(int k_data, int L, std::vector<Token> tmpl);

    void validate() const;
    std::vector<Token> sample(Rng& rng) const;
    // -log p(seq) in nats; +inf off the support.
    double seq_nll(const std::vector<Token>& seq) const;
    // Closed-form entropy in nats per sequence.
    double entropy() const;
    // Explicit table for oracle use; tiny instances only.
    DataDistribution to_distribution(const Vocabulary& vocab) const;

    std::string kind_name() const;
};

struct CorpusManifest {
    GeneratorSpec generator;
    long n = 0;
    uint64_t seed = 0;
    std::string corpus_file;
    double entropy_nats_per_seq = 0.0;
};

void save_manifest(const std::string& path, const CorpusManifest& manifest);
CorpusManifest load_manifest(const std::string& path);

std::vector<std::vector<Token>> generate_corpus(const GeneratorSpec& spec,
                                                long n, Rng& rng);

std::string detokenize(const std::vector<Token>& seq, const Vocabulary& vocab);

}  // namespace maskdiff
