#include "maskdiff/data.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace maskdiff {

using nlohmann::json;

void save_vocab(const std::string& path, const Vocabulary& vocab) {
    vocab.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write vocabulary file: " + path);
    }
    for (int i = 0; i < vocab.K; ++i) {
        out << vocab.symbols[static_cast<size_t>(i)] << "\n";
    }
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read vocabulary file: " + path);
    }
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        v.symbols.push_back(line);
    }
    while (!v.symbols.empty() && v.symbols.back().empty()) {
        v.symbols.pop_back();
    }
    if (v.symbols.size() < 2 || v.symbols.back() != "<mask>") {
        throw IoError("vocabulary file must end with the reserved <mask> line");
    }
    v.K = static_cast<int>(v.symbols.size());
    v.mask_index = v.K - 1;
    v.validate();
    return v;
}

void save_corpus(const std::string& path,
                 const std::vector<std::vector<Token>>& corpus) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write corpus file: " + path);
    }
    for (const auto& seq : corpus) {
        for (size_t i = 0; i < seq.size(); ++i) {
            if (i > 0) {
                out << ' ';
            }
            out << seq[i];
        }
        out << '\n';
    }
}

std::vector<std::vector<Token>> load_corpus(const std::string& path,
                                            const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read corpus file: " + path);
    }
    std::vector<std::vector<Token>> corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::vector<Token> seq;
        long tok = 0;
        while (ss >> tok) {
            seq.push_back(static_cast<Token>(tok));
        }
        validate_data_seq(seq, vocab);
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

GeneratorSpec GeneratorSpec::uniform(int k_data, int L) {
    GeneratorSpec s;
    s.kind = Kind::uniform;
    s.k_data = k_data;
    s.L = L;
    s.validate();
    return s;
}

GeneratorSpec GeneratorSpec::markov1(int k_data, int L,
                                     std::vector<std::vector<double>> table,
                                     std::vector<double> pi0) {
    GeneratorSpec s;
    s.kind = Kind::markov1;
    s.k_data = k_data;
    s.L = L;
    s.table = std::move(table);
    s.pi0 = std::move(pi0);
    s.validate();
    return s;
}

GeneratorSpec GeneratorSpec::markov1_structured(int k_data, int L) {
    std::vector<std::vector<double>> table(
        static_cast<size_t>(k_data),
        std::vector<double>(static_cast<size_t>(k_data), 0.0));
    const double rest = k_data > 2 ? 0.1 / (k_data - 2) : 0.0;
    for (int a = 0; a < k_data; ++a) {
        for (int b = 0; b < k_data; ++b) {
            if (b == a) {
                table[static_cast<size_t>(a)][static_cast<size_t>(b)] = 0.55;
            } else if (b == (a + 1) % k_data) {
                table[static_cast<size_t>(a)][static_cast<size_t>(b)] = 0.35;
            } else {
                table[static_cast<size_t>(a)][static_cast<size_t>(b)] = rest;
            }
        }
    }
    std::vector<double> pi0(static_cast<size_t>(k_data), 1.0 / k_data);
    return markov1(k_data, L, std::move(table), std::move(pi0));
}

GeneratorSpec GeneratorSpec::markov1_random(int k_data, int L, Rng& rng) {
    std::vector<std::vector<double>> table(
        static_cast<size_t>(k_data),
        std::vector<double>(static_cast<size_t>(k_data), 0.0));
    for (int a = 0; a < k_data; ++a) {
        double total = 0.0;
        for (int b = 0; b < k_data; ++b) {
            const double v = rng.next_unit() + 0.05;  // full support
            table[static_cast<size_t>(a)][static_cast<size_t>(b)] = v;
            total += v;
        }
        for (int b = 0; b < k_data; ++b) {
            table[static_cast<size_t>(a)][static_cast<size_t>(b)] /= total;
        }
    }
    std::vector<double> pi0(static_cast<size_t>(k_data), 1.0 / k_data);
    return markov1(k_data, L, std::move(table), std::move(pi0));
}

GeneratorSpec GeneratorSpec::templated(int k_data, int L,
                                       std::vector<Token> tmpl) {
    GeneratorSpec s;
    s.kind = Kind::templated;
    s.k_data = k_data;
    s.L = L;
    s.tmpl = std::move(tmpl);
    s.validate();
    return s;
}

void GeneratorSpec::validate() const {
    if (k_data < 1 || L < 1) {
        throw ConfigError("generator needs k_data >= 1 and L >= 1");
    }
    if (kind == Kind::markov1) {
        if (static_cast<int>(table.size()) != k_data ||
            static_cast<int>(pi0.size()) != k_data) {
            throw ConfigError("markov1 table shape mismatch");
        }
        for (const auto& row : table) {
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) {
                    throw ConfigError("markov1 table has negative entries");
                }
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw ConfigError("markov1 table rows must sum to 1");
            }
        }
    }
    if (kind == Kind::templated) {
        if (static_cast<int>(tmpl.size()) != L) {
            throw ConfigError("template length mismatch");
        }
        for (Token t : tmpl) {
            if (t != -1 && (t < 0 || t >= k_data)) {
                throw ConfigError("template token out of range");
            }
        }
    }
}

std::vector<Token> GeneratorSpec::sample(Rng& rng) const {
    std::vector<Token> seq(static_cast<size_t>(L));
    switch (kind) {
        case Kind::uniform:
            for (int l = 0; l < L; ++l) {
                seq[static_cast<size_t>(l)] =
                    static_cast<Token>(rng.next_unit() * k_data) % k_data;
            }
            break;
        case Kind::markov1: {
            Simplex init;
            init.probs = pi0;
            seq[0] = sample_categorical(init, rng);
            for (int l = 1; l < L; ++l) {
                Simplex row;
                row.probs = table[static_cast<size_t>(seq[static_cast<size_t>(l) - 1])];
                seq[static_cast<size_t>(l)] = sample_categorical(row, rng);
            }
            break;
        }
        case Kind::templated:
            for (int l = 0; l < L; ++l) {
                const Token t = tmpl[static_cast<size_t>(l)];
                seq[static_cast<size_t>(l)] =
                    t >= 0 ? t
                           : static_cast<Token>(rng.next_unit() * k_data) % k_data;
            }
            break;
    }
    return seq;
}

double GeneratorSpec::seq_nll(const std::vector<Token>& seq) const {
    const double inf = std::numeric_limits<double>::infinity();
    if (static_cast<int>(seq.size()) < 1) {
        throw EmptyInput("empty sequence");
    }
    for (Token t : seq) {
        if (t < 0 || t >= k_data) {
            return inf;
        }
    }
    switch (kind) {
        case Kind::uniform:
            return static_cast<double>(seq.size()) * std::log(k_data);
        case Kind::markov1: {
            double nll = 0.0;
            const double p0 = pi0[static_cast<size_t>(seq[0])];
            if (p0 <= 0.0) {
                return inf;
            }
            nll -= std::log(p0);
            for (size_t l = 1; l < seq.size(); ++l) {
                const double p =
                    table[static_cast<size_t>(seq[l - 1])][static_cast<size_t>(seq[l])];
                if (p <= 0.0) {
                    return inf;
                }
                nll -= std::log(p);
            }
            return nll;
        }
        case Kind::templated: {
            double nll = 0.0;
            for (size_t l = 0; l < seq.size() && l < tmpl.size(); ++l) {
                const Token t = tmpl[l];
                if (t == -1) {
                    nll += std::log(k_data);
                } else if (seq[l] != t) {
                    return inf;
                }
            }
            return nll;
        }
    }
    return inf;
}

double GeneratorSpec::entropy() const {
    switch (kind) {
        case Kind::uniform:
            return L * std::log(k_data);
        case Kind::markov1: {
            auto row_entropy = [](const std::vector<double>& row) {
                double h = 0.0;
                for (double v : row) {
                    if (v > 0.0) {
                        h -= v * std::log(v);
                    }
                }
                return h;
            };
            double h = row_entropy(pi0);
            std::vector<double> mu = pi0;
            for (int l = 1; l < L; ++l) {
                for (int a = 0; a < k_data; ++a) {
                    h += mu[static_cast<size_t>(a)] *
                         row_entropy(table[static_cast<size_t>(a)]);
                }
                std::vector<double> nxt(static_cast<size_t>(k_data), 0.0);
                for (int a = 0; a < k_data; ++a) {
                    for (int b = 0; b < k_data; ++b) {
                        nxt[static_cast<size_t>(b)] +=
                            mu[static_cast<size_t>(a)] *
                            table[static_cast<size_t>(a)][static_cast<size_t>(b)];
                    }
                }
                mu.swap(nxt);
            }
            return h;
        }
        case Kind::templated: {
            int slots = 0;
            for (Token t : tmpl) {
                slots += t == -1 ? 1 : 0;
            }
            return slots * std::log(k_data);
        }
    }
    return 0.0;
}

DataDistribution GeneratorSpec::to_distribution(const Vocabulary& vocab) const {
    if (vocab.n_data() != k_data) {
        throw ShapeError("vocabulary does not match the generator");
    }
    switch (kind) {
        case Kind::uniform:
            return DataDistribution::uniform(vocab, L);
        case Kind::markov1:
            return DataDistribution::from_markov1(vocab, L, table, pi0);
        case Kind::templated: {
            DataDistribution d = DataDistribution::uniform(vocab, L);
            double total = 0.0;
            for (size_t i = 0; i < d.p.size(); ++i) {
                const std::vector<Token> seq = d.index_to_seq(i);
                d.p[i] = std::isinf(seq_nll(seq)) ? 0.0 : 1.0;
                total += d.p[i];
            }
            for (double& v : d.p) {
                v /= total;
            }
            return d;
        }
    }
    throw ConfigError("unknown generator kind");
}

std::string GeneratorSpec::kind_name() const {
    switch (kind) {
        case Kind::uniform: return "uniform";
        case Kind::markov1: return "markov1";
        case Kind::templated: return "templated";
    }
    return "?";
}

namespace {

json generator_to_json(const GeneratorSpec& g) {
    json j;
    j["kind"] = g.kind_name();
    j["k_data"] = g.k_data;
    j["L"] = g.L;
    if (g.kind == GeneratorSpec::Kind::markov1) {
        j["table"] = g.table;
        j["pi0"] = g.pi0;
    }
    if (g.kind == GeneratorSpec::Kind::templated) {
        j["template"] = g.tmpl;
    }
    return j;
}

GeneratorSpec generator_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const int k_data = j.at("k_data").get<int>();
    const int L = j.at("L").get<int>();
    if (kind == "uniform") {
        return GeneratorSpec::uniform(k_data, L);
    }
    if (kind == "markov1") {
        return GeneratorSpec::markov1(
            k_data, L, j.at("table").get<std::vector<std::vector<double>>>(),
            j.at("pi0").get<std::vector<double>>());
    }
    if (kind == "templated") {
        return GeneratorSpec::templated(
            k_data, L, j.at("template").get<std::vector<Token>>());
    }
    throw ConfigError("unknown generator kind in manifest: " + kind);
}

}  // namespace

void save_manifest(const std::string& path, const CorpusManifest& manifest) {
    json j;
    j["format_version"] = 1;
    j["generator"] = generator_to_json(manifest.generator);
    j["n"] = manifest.n;
    j["seed"] = manifest.seed;
    j["corpus_file"] = manifest.corpus_file;
    j["entropy_nats_per_seq"] = manifest.entropy_nats_per_seq;
    j["entropy_nats_per_token"] =
        manifest.entropy_nats_per_seq / manifest.generator.L;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest: " + path);
    }
    out << j.dump(2) << "\n";
}

CorpusManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read manifest: " + path);
    }
    json j = json::parse(in);
    CorpusManifest m;
    m.generator = generator_from_json(j.at("generator"));
    m.n = j.at("n").get<long>();
    m.seed = j.at("seed").get<uint64_t>();
    m.corpus_file = j.at("corpus_file").get<std::string>();
    m.entropy_nats_per_seq = j.at("entropy_nats_per_seq").get<double>();
    return m;
}

std::vector<std::vector<Token>> generate_corpus(const GeneratorSpec& spec,
                                                long n, Rng& rng) {
    spec.validate();
    std::vector<std::vector<Token>> corpus;
    corpus.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        corpus.push_back(spec.sample(rng));
    }
    return corpus;
}

std::string detokenize(const std::vector<Token>& seq, const Vocabulary& vocab) {
    std::string out;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += vocab.symbols.empty()
                   ? std::to_string(seq[i])
                   : vocab.symbols[static_cast<size_t>(seq[i])];
    }
    return out;
}

}  // namespace maskdiff
