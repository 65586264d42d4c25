#include "maskdiff/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "maskdiff/checkpoint.hpp"
#include "maskdiff/forward.hpp"
#include "maskdiff/objectives.hpp"
#include "maskdiff/oracle.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/score.hpp"

namespace maskdiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) {
        fs::create_directories(dir);
    }
}

std::string join_path(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read file: " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write file: " + path);
    }
    out << text;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void finish_report(Report& report, const std::string& out_dir) {
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        report.save(join_path(out_dir, "report.json"));
    }
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

int thread_cap() {
    const char* env = std::getenv("MASKDIFF_THREADS");
    if (env != nullptr) {
        const int n = std::atoi(env);
        if (n >= 1) {
            return n;
        }
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn,
                  int max_threads) {
    if (n == 0) {
        return;
    }
    const int workers =
        std::min<int>(max_threads, static_cast<int>(std::min<size_t>(n, 64)));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (size_t i = static_cast<size_t>(w); i < n;
                 i += static_cast<size_t>(workers)) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

EvalSummary evaluate_corpus(const Denoiser& den,
                            const std::vector<std::vector<Token>>& corpus,
                            const NoiseSchedule& sched,
                            const ObjectiveVariant& variant,
                            const std::string& estimator, long n_samples,
                            uint64_t seed, int max_threads) {
    if (corpus.empty()) {
        throw EmptyInput("empty evaluation corpus");
    }
    const int L = den.seq_len();
    for (const auto& seq : corpus) {
        if (static_cast<int>(seq.size()) != L) {
            throw ShapeError("corpus length does not match the checkpoint");
        }
    }
    const size_t n = corpus.size();
    std::vector<double> values(n, 0.0);  // nats per token per datapoint
    const Rng base(seed);

    if (estimator == "quadrature") {
        parallel_for(
            n,
            [&](size_t i) {
                double v = 0.0;
                if (variant.kind == ObjectiveKind::continuous) {
                    v = nelbo_continuous_quadrature(corpus[i], den, sched).value;
                } else {
                    v = diffusion_loss_discrete_exhaustive(variant, corpus[i], den);
                }
                values[i] = v / L;
            },
            max_threads);
    } else if (estimator == "mc") {
        const long rounds = std::max<long>(1, n_samples);
        // Stratify times across the corpus within each round, mirroring the
        // batch-level low-discrepancy sampler.
        std::vector<std::vector<double>> round_times(
            static_cast<size_t>(rounds));
        Rng time_rng = base.fork(0xABCDull);
        for (long r = 0; r < rounds; ++r) {
            round_times[static_cast<size_t>(r)] =
                low_discrepancy_times(static_cast<int>(n), time_rng);
        }
        const Vocabulary& vocab = den.vocab();
        parallel_for(
            n,
            [&](size_t i) {
                double acc = 0.0;
                for (long r = 0; r < rounds; ++r) {
                    Rng rng = base.fork(i * static_cast<size_t>(rounds) +
                                        static_cast<size_t>(r) + 1);
                    if (variant.kind == ObjectiveKind::continuous) {
                        const double t =
                            sched.clamp_t(round_times[static_cast<size_t>(r)][i]);
                        const double alpha = sched.alpha(t);
                        std::vector<Token> z = corpus[i];
                        for (auto& tok : z) {
                            if (rng.next_unit() >= alpha) {
                                tok = vocab.mask_index;
                            }
                        }
                        const DenoiserOutput xout = den.predict(z, t);
                        double nll = 0.0;
                        for (size_t l = 0; l < z.size(); ++l) {
                            if (vocab.is_mask(z[l])) {
                                nll -= xout.log_prob(static_cast<int>(l),
                                                     corpus[i][l]);
                            }
                        }
                        acc += sched.loss_weight(t) * -nll;
                    } else {
                        acc += diffusion_loss_discrete_mc(variant, corpus[i], den,
                                                          rng);
                    }
                }
                values[i] = acc / rounds / L;
            },
            max_threads);
    } else {
        throw ConfigError("unknown estimator: " + estimator);
    }

    EvalSummary summary;
    summary.n_datapoints = static_cast<long>(n);
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    summary.nats_per_token = sum / static_cast<double>(n);
    summary.ppl = std::exp(summary.nats_per_token);
    double ss = 0.0;
    for (double v : values) {
        const double d = v - summary.nats_per_token;
        ss += d * d;
    }
    summary.per_datapoint_variance =
        n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return summary;
}

double masking_token_factor(const NoiseSchedule& sched) {
    if (sched.kind == ScheduleKind::log_linear) {
        return 0.5;  // E[1 - alpha_t] = E[t]
    }
    std::vector<double> nodes, weights;
    gauss_legendre(128, &nodes, &weights);
    double acc = 0.0;
    for (size_t i = 0; i < nodes.size(); ++i) {
        const double t = 0.5 * (nodes[i] + 1.0);
        acc += 0.5 * weights[i] * (1.0 - sched.alpha(t));
    }
    return acc;
}

long long expected_tokens(double steps, double batch, double ctx,
                          const NoiseSchedule& sched, bool autoregressive) {
    const double factor = autoregressive ? 1.0 : masking_token_factor(sched);
    return static_cast<long long>(std::llround(steps * batch * ctx * factor));
}

Report cmd_gen_corpus(const GenCorpusOptions& opt) {
    GeneratorSpec spec;
    if (opt.generator == "uniform") {
        spec = GeneratorSpec::uniform(opt.k_data, opt.L);
    } else if (opt.generator == "markov1") {
        if (!opt.table_path.empty()) {
            json j = json::parse(read_file_bytes(opt.table_path));
            spec = GeneratorSpec::markov1(
                opt.k_data, opt.L,
                j.at("table").get<std::vector<std::vector<double>>>(),
                j.at("pi0").get<std::vector<double>>());
        } else {
            spec = GeneratorSpec::markov1_structured(opt.k_data, opt.L);
        }
    } else if (opt.generator == "templated") {
        std::vector<Token> tmpl;
        if (!opt.template_spec.empty()) {
            std::istringstream ss(opt.template_spec);
            std::string tok;
            while (ss >> tok) {
                tmpl.push_back(tok == "*" ? -1 : static_cast<Token>(std::stoi(tok)));
            }
        } else {
            for (int l = 0; l < opt.L; ++l) {
                tmpl.push_back(l % 2 == 0 ? static_cast<Token>(l / 2 % opt.k_data)
                                          : -1);
            }
        }
        spec = GeneratorSpec::templated(opt.k_data, opt.L, std::move(tmpl));
    } else {
        throw ConfigError("unknown generator: " + opt.generator);
    }

    Rng rng(opt.seed);
    const auto corpus = generate_corpus(spec, opt.n, rng);
    const Vocabulary vocab = Vocabulary::with_data_tokens(opt.k_data);

    ensure_dir(opt.out_dir);
    save_corpus(join_path(opt.out_dir, "corpus.txt"), corpus);
    save_vocab(join_path(opt.out_dir, "vocab.txt"), vocab);
    CorpusManifest manifest;
    manifest.generator = spec;
    manifest.n = opt.n;
    manifest.seed = opt.seed;
    manifest.corpus_file = "corpus.txt";
    manifest.entropy_nats_per_seq = spec.entropy();
    save_manifest(join_path(opt.out_dir, "manifest.json"), manifest);

    double empirical = 0.0;
    for (const auto& seq : corpus) {
        empirical += spec.seq_nll(seq);
    }
    empirical /= static_cast<double>(corpus.size());

    Report report;
    report.command = "gen-corpus";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(opt.generator + "/" +
                                     std::to_string(opt.k_data) + "/" +
                                     std::to_string(opt.L));
    report.metrics["n"] = opt.n;
    report.metrics["L"] = opt.L;
    report.metrics["k_data"] = opt.k_data;
    report.metrics["entropy_nats_per_seq"] = spec.entropy();
    report.metrics["entropy_nats_per_token"] = spec.entropy() / opt.L;
    report.metrics["empirical_nats_per_seq"] = empirical;
    finish_report(report, opt.out_dir);
    return report;
}

Report cmd_train(const TrainOptions& opt) {
    const RunConfig cfg = RunConfig::parse_file(opt.config_path);
    if (!cfg.train_seed_explicit) {
        throw ConfigError("train.seed must be set explicitly");
    }
    const Vocabulary vocab = load_vocab(opt.vocab_path);
    if (vocab.n_data() != cfg.model_k_data) {
        throw ConfigError("vocab file does not match model.k_data");
    }
    const auto corpus = load_corpus(opt.corpus_path, vocab);
    ContextBagModel model(vocab, cfg.model_config());

    const double t0 = now_ms();
    const TrainResult result =
        train(model, corpus, cfg.train_config(), cfg.schedule,
              [](long step, double loss) {
                  std::cout << "step " << step << " loss " << loss << "\n";
              });
    const double train_ms = now_ms() - t0;

    ensure_dir(opt.out_dir);
    save_checkpoint(join_path(opt.out_dir, "checkpoint.json"), model,
                    cfg.schedule, cfg.train_seed);
    std::ostringstream trace;
    trace << "step,nats_per_token\n";
    trace.precision(17);
    for (const auto& [step, loss] : result.loss_trace) {
        trace << step << "," << loss << "\n";
    }
    write_text(join_path(opt.out_dir, "loss_trace.csv"), trace.str());

    Report report;
    report.command = "train";
    report.seed = cfg.train_seed;
    report.config_hash = fnv1a64_hex(cfg.serialize());
    report.metrics["final_loss_nats_per_token"] = result.final_loss;
    report.metrics["steps"] = cfg.train_steps;
    report.metrics["corpus_sequences"] = static_cast<long>(corpus.size());
    json trace_rows = json::array();
    for (const auto& [step, loss] : result.loss_trace) {
        trace_rows.push_back({step, loss});
    }
    report.tables["loss_trace"] = trace_rows;
    report.timings["train_ms"] = train_ms;
    finish_report(report, opt.out_dir);
    return report;
}

Report cmd_eval(const EvalOptions& opt) {
    const RunConfig cfg = RunConfig::parse_file(opt.config_path);
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    const Vocabulary vocab = load_vocab(opt.vocab_path);
    if (vocab.K != ckpt.model->vocab().K) {
        throw ShapeError("vocabulary does not match the checkpoint");
    }
    const auto corpus = load_corpus(opt.corpus_path, vocab);
    const int threads = opt.deterministic ? 1 : thread_cap();

    const double t0 = now_ms();
    const EvalSummary summary =
        evaluate_corpus(*ckpt.model, corpus, cfg.schedule, cfg.objective,
                        cfg.eval_estimator, cfg.eval_n_samples, opt.seed,
                        threads);
    const double eval_ms = now_ms() - t0;

    Report report;
    report.command = "eval";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(cfg.serialize());
    report.metrics["nats_per_token"] = summary.nats_per_token;
    report.metrics["ppl"] = summary.ppl;
    report.metrics["per_datapoint_variance"] = summary.per_datapoint_variance;
    report.metrics["n_datapoints"] = summary.n_datapoints;
    report.tables["estimator"] = {cfg.eval_estimator, cfg.eval_n_samples};
    report.timings["eval_ms"] = eval_ms;
    finish_report(report, opt.out_dir);
    return report;
}

Report cmd_zero_shot(const ZeroShotOptions& opt) {
    if (opt.manifest_paths.empty()) {
        throw EmptyInput("zero-shot needs at least one corpus manifest");
    }
    const RunConfig cfg = RunConfig::parse_file(opt.config_path);
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    const int threads = opt.deterministic ? 1 : thread_cap();

    json rows = json::array();
    for (size_t m = 0; m < opt.manifest_paths.size(); ++m) {
        const std::string& mpath = opt.manifest_paths[m];
        const CorpusManifest manifest = load_manifest(mpath);
        if (manifest.generator.k_data != ckpt.model->vocab().n_data()) {
            throw ShapeError("manifest vocabulary does not match the checkpoint");
        }
        const Vocabulary vocab =
            Vocabulary::with_data_tokens(manifest.generator.k_data);
        const std::string corpus_path =
            (fs::path(mpath).parent_path() / manifest.corpus_file).string();
        const auto corpus = load_corpus(corpus_path, vocab);
        const EvalSummary summary = evaluate_corpus(
            *ckpt.model, corpus, cfg.schedule, cfg.objective, cfg.eval_estimator,
            cfg.eval_n_samples, opt.seed + m, threads);
        rows.push_back({{"manifest", mpath},
                        {"manifest_hash", fnv1a64_hex(read_file_bytes(mpath))},
                        {"generator", manifest.generator.kind_name()},
                        {"nats_per_token", summary.nats_per_token},
                        {"ppl", summary.ppl},
                        {"per_datapoint_variance", summary.per_datapoint_variance},
                        {"n", summary.n_datapoints}});
    }

    Report report;
    report.command = "zero-shot";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(cfg.serialize());
    report.metrics["n_corpora"] = static_cast<long>(opt.manifest_paths.size());
    report.tables["rows"] = rows;
    finish_report(report, opt.out_dir);
    return report;
}

Report cmd_sample(const SampleOptions& opt) {
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    const CorpusManifest manifest = load_manifest(opt.manifest_path);
    const Vocabulary& vocab = ckpt.model->vocab();
    if (manifest.generator.k_data != vocab.n_data()) {
        throw ShapeError("judge manifest does not match the checkpoint vocabulary");
    }
    const bool cache = !ckpt.model->time_conditioned();
    const Rng base(opt.seed);

    std::ostringstream lines;
    long total_tokens = 0;
    long off_support = 0;
    long denoiser_calls = 0;
    double judge_nll = 0.0;
    std::map<int, long> unmask_histogram;
    for (long i = 0; i < opt.n; ++i) {
        Rng rng = base.fork(static_cast<uint64_t>(i));
        SampleResult res;
        if (opt.mode == "plain") {
            res = ancestral_sample(*ckpt.model, ckpt.schedule, opt.T, rng, cache);
        } else if (opt.mode == "semi_ar") {
            res = semi_ar_generate(*ckpt.model, ckpt.schedule, opt.T,
                                   opt.l_prime, opt.rounds, rng, cache);
        } else {
            throw ConfigError("unknown sampling mode: " + opt.mode);
        }
        if (has_mask(res.tokens, vocab)) {
            throw NumericalError("sample contains a mask token");
        }
        lines << detokenize(res.tokens, vocab) << "\n";
        denoiser_calls += res.stats.denoiser_calls;
        for (int c : res.stats.tokens_unmasked_per_step) {
            ++unmask_histogram[c];
        }
        const double nll = manifest.generator.seq_nll(res.tokens);
        if (std::isinf(nll)) {
            ++off_support;
        } else {
            judge_nll += nll;
            total_tokens += static_cast<long>(res.tokens.size());
        }
    }

    ensure_dir(opt.out_dir);
    write_text(join_path(opt.out_dir, "samples.txt"), lines.str());

    Report report;
    report.command = "sample";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(opt.mode + "/" + std::to_string(opt.T));
    report.metrics["n"] = opt.n;
    report.metrics["T"] = opt.T;
    report.metrics["denoiser_calls"] = denoiser_calls;
    json histogram = json::object();
    for (const auto& [count, steps] : unmask_histogram) {
        histogram[std::to_string(count)] = steps;
    }
    report.tables["tokens_unmasked_per_step_histogram"] = histogram;
    report.metrics["off_support_samples"] = off_support;
    if (total_tokens > 0) {
        const double per_token = judge_nll / static_cast<double>(total_tokens);
        report.metrics["judge_nll_per_token"] = per_token;
        report.metrics["judge_ppl"] = std::exp(per_token);
    }
    if (opt.mode == "semi_ar") {
        report.metrics["l_prime"] = opt.l_prime;
        report.metrics["rounds"] = opt.rounds;
        report.metrics["output_length"] =
            ckpt.model->seq_len() + opt.rounds * opt.l_prime;
    }
    finish_report(report, opt.out_dir);
    return report;
}

Report cmd_bench_caching(const BenchCachingOptions& opt) {
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    if (ckpt.model->time_conditioned()) {
        throw CacheRequiresTimeFree(
            "bench-caching needs a time-unconditioned checkpoint");
    }
    const Rng base(opt.seed);
    json rows = json::array();
    json timing_rows = json::array();
    for (int T : opt.T_list) {
        long calls_off = 0;
        long calls_on = 0;
        bool identical = true;
        std::vector<std::vector<Token>> out_off(static_cast<size_t>(opt.n_seq));
        for (long i = 0; i < opt.n_seq; ++i) {
            Rng rng = base.fork(static_cast<uint64_t>(T) * 1000 +
                                static_cast<uint64_t>(i));
            SampleResult r =
                ancestral_sample(*ckpt.model, ckpt.schedule, T, rng, false);
            calls_off += r.stats.denoiser_calls;
            out_off[static_cast<size_t>(i)] = std::move(r.tokens);
        }
        for (long i = 0; i < opt.n_seq; ++i) {
            Rng rng = base.fork(static_cast<uint64_t>(T) * 1000 +
                                static_cast<uint64_t>(i));
            SampleResult r =
                ancestral_sample(*ckpt.model, ckpt.schedule, T, rng, true);
            calls_on += r.stats.denoiser_calls;
            identical =
                identical && r.tokens == out_off[static_cast<size_t>(i)];
        }
        if (!identical) {
            throw VerificationFailure("cached and uncached samples differ at T=" +
                                      std::to_string(T));
        }
        if (calls_on > calls_off) {
            throw VerificationFailure("caching increased denoiser calls at T=" +
                                      std::to_string(T));
        }
        rows.push_back({{"T", T},
                        {"denoiser_calls_uncached", calls_off},
                        {"denoiser_calls_cached", calls_on},
                        {"identical_outputs", identical},
                        {"n_seq", opt.n_seq}});

        // Wall clock: medians of 5 repetitions, single worker.
        std::vector<double> ms_off, ms_on;
        for (int rep = 0; rep < 5; ++rep) {
            double t0 = now_ms();
            for (long i = 0; i < opt.n_seq; ++i) {
                Rng rng = base.fork(static_cast<uint64_t>(T) * 1000 +
                                    static_cast<uint64_t>(i));
                ancestral_sample(*ckpt.model, ckpt.schedule, T, rng, false);
            }
            ms_off.push_back(now_ms() - t0);
            t0 = now_ms();
            for (long i = 0; i < opt.n_seq; ++i) {
                Rng rng = base.fork(static_cast<uint64_t>(T) * 1000 +
                                    static_cast<uint64_t>(i));
                ancestral_sample(*ckpt.model, ckpt.schedule, T, rng, true);
            }
            ms_on.push_back(now_ms() - t0);
        }
        const double med_off = median_of(ms_off);
        const double med_on = median_of(ms_on);
        timing_rows.push_back({{"T", T},
                               {"uncached_ms", med_off},
                               {"cached_ms", med_on},
                               {"speedup", med_on > 0.0 ? med_off / med_on : 0.0}});
    }

    Report report;
    report.command = "bench-caching";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex("bench/" + std::to_string(opt.n_seq));
    report.metrics["n_seq"] = opt.n_seq;
    report.metrics["L"] = ckpt.model->seq_len();
    report.tables["rows"] = rows;
    report.timings["per_T"] = timing_rows;
    finish_report(report, opt.out_dir);
    return report;
}

namespace {

// Common-random-number estimates of the discrete NELBO bound across T
// values: the same uniform draw picks the step index and the same
// per-position noise builds the mask pattern, so differences between T
// rows are far more stable than the individual means.
double discrete_bound_common_noise(const std::vector<Token>& x,
                                   const Denoiser& den, int T, double u,
                                   const std::vector<double>& v,
                                   const std::vector<double>& v_recons) {
    const Vocabulary& vocab = den.vocab();
    const std::vector<double> grid = discrete_alpha_grid(T);
    int i = 1 + static_cast<int>(u * T);
    i = std::min(i, T);
    const double a_s = grid[static_cast<size_t>(i) - 1];
    const double a_t = grid[static_cast<size_t>(i)];
    std::vector<Token> z(x);
    for (size_t l = 0; l < x.size(); ++l) {
        if (v[l] >= a_t) {
            z[l] = vocab.mask_index;
        }
    }
    const double t_in = static_cast<double>(i) / static_cast<double>(T);
    const DenoiserOutput xout = den.predict(z, t_in);
    double term = 0.0;
    for (size_t l = 0; l < x.size(); ++l) {
        term -= (a_s - a_t) / (1.0 - a_t) *
                xout.log_prob(static_cast<int>(l), x[l]);
    }
    // Reconstruction with shared noise against alpha_{t(0)} = T/(T+1).
    const double a0 = grid[0];
    std::vector<Token> z0(x);
    for (size_t l = 0; l < x.size(); ++l) {
        if (v_recons[l] >= a0) {
            z0[l] = vocab.mask_index;
        }
    }
    const DenoiserOutput xout0 = den.predict(z0, 0.0);
    double recons = 0.0;
    for (size_t l = 0; l < x.size(); ++l) {
        recons -= xout0.log_prob(static_cast<int>(l), x[l]);
    }
    return static_cast<double>(T) * term + recons;
}

Report ablate_schedules(const AblateOptions& opt) {
    const RunConfig cfg = RunConfig::parse_file(opt.config_path);
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    if (ckpt.model->time_conditioned()) {
        throw ConfigError(
            "schedule ablation needs a time-unconditioned checkpoint");
    }
    const Vocabulary vocab = load_vocab(opt.vocab_path);
    const auto corpus = load_corpus(opt.corpus_path, vocab);
    const int threads = opt.deterministic ? 1 : thread_cap();
    const int L = ckpt.model->seq_len();

    const ScheduleKind kinds[] = {ScheduleKind::log_linear, ScheduleKind::cosine,
                                  ScheduleKind::cosine_squared,
                                  ScheduleKind::linear};
    json rows = json::array();
    std::vector<double> quad_means;
    const ObjectiveVariant continuous{ObjectiveKind::continuous, 0};
    for (ScheduleKind kind : kinds) {
        NoiseSchedule sched = cfg.schedule;
        sched.kind = kind;
        const EvalSummary quad =
            evaluate_corpus(*ckpt.model, corpus, sched, continuous, "quadrature",
                            1, opt.seed, threads);
        const EvalSummary mc =
            evaluate_corpus(*ckpt.model, corpus, sched, continuous, "mc", 1,
                            opt.seed, threads);
        quad_means.push_back(quad.nats_per_token * L);
        rows.push_back({{"schedule", to_string(kind)},
                        {"quad_nats_per_seq", quad.nats_per_token * L},
                        {"quad_nats_per_token", quad.nats_per_token},
                        {"mc_nats_per_token", mc.nats_per_token},
                        {"mc_variance_per_datapoint", mc.per_datapoint_variance}});
    }
    const auto [lo, hi] = std::minmax_element(quad_means.begin(), quad_means.end());
    const double spread = *hi - *lo;

    Report report;
    report.command = "ablate";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(cfg.serialize());
    report.metrics["kind_schedules"] = 1;
    report.metrics["quad_mean_spread_nats_per_seq"] = spread;
    report.tables["rows"] = rows;
    finish_report(report, opt.out_dir);
    if (spread > 1e-3) {
        throw VerificationFailure(
            "schedule sweep means differ by " + std::to_string(spread) +
            " nats per sequence (tolerance 1e-3)");
    }
    return report;
}

Report ablate_T(const AblateOptions& opt) {
    const RunConfig cfg = RunConfig::parse_file(opt.config_path);
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    const Vocabulary vocab = load_vocab(opt.vocab_path);
    const auto corpus = load_corpus(opt.corpus_path, vocab);
    const int threads = opt.deterministic ? 1 : thread_cap();
    const int L = ckpt.model->seq_len();
    const long reps = std::max<long>(1, cfg.eval_n_samples);
    const size_t n = corpus.size();
    const bool exact = !ckpt.model->time_conditioned() && L <= 12;

    json rows = json::array();
    std::vector<double> ppls;
    if (exact) {
        // Step indices and mask patterns integrated out exactly from one
        // per-pattern sweep per datapoint; the sweep is deterministic.
        std::vector<std::vector<double>> grouped(n);
        parallel_for(
            n,
            [&](size_t i) {
                grouped[i] = group_nll_table_by_mask_count(
                    masked_nll_by_pattern(corpus[i], *ckpt.model, 0.5), L);
            },
            threads);
        for (int T : opt.T_list) {
            double mean = 0.0;
            for (size_t i = 0; i < n; ++i) {
                mean += discrete_nelbo_from_grouped(grouped[i], T) / L;
            }
            mean /= static_cast<double>(n);
            ppls.push_back(std::exp(mean));
            rows.push_back({{"T", T},
                            {"nats_per_token", mean},
                            {"ppl_bound", std::exp(mean)},
                            {"estimator", "exhaustive"}});
        }
    } else {
        // Monte Carlo with noise shared across the whole sweep.
        const Rng base(opt.seed);
        std::vector<double> us(n * static_cast<size_t>(reps));
        std::vector<std::vector<double>> vs(us.size()), vr(us.size());
        {
            Rng rng = base.fork(7);
            for (size_t k = 0; k < us.size(); ++k) {
                us[k] = rng.next_unit();
                vs[k].resize(static_cast<size_t>(L));
                vr[k].resize(static_cast<size_t>(L));
                for (int l = 0; l < L; ++l) {
                    vs[k][static_cast<size_t>(l)] = rng.next_unit();
                    vr[k][static_cast<size_t>(l)] = rng.next_unit();
                }
            }
        }
        for (int T : opt.T_list) {
            std::vector<double> acc(n, 0.0);
            parallel_for(
                n,
                [&](size_t i) {
                    double s = 0.0;
                    for (long r = 0; r < reps; ++r) {
                        const size_t k = i * static_cast<size_t>(reps) +
                                         static_cast<size_t>(r);
                        s += discrete_bound_common_noise(corpus[i], *ckpt.model,
                                                         T, us[k], vs[k], vr[k]);
                    }
                    acc[i] = s / reps / L;
                },
                threads);
            double mean = 0.0;
            for (double v : acc) {
                mean += v;
            }
            mean /= static_cast<double>(n);
            ppls.push_back(std::exp(mean));
            rows.push_back({{"T", T},
                            {"nats_per_token", mean},
                            {"ppl_bound", std::exp(mean)},
                            {"estimator", "mc"}});
        }
    }
    // Continuous row via exact quadrature.
    const EvalSummary cont = evaluate_corpus(
        *ckpt.model, corpus, cfg.schedule,
        ObjectiveVariant{ObjectiveKind::continuous, 0}, "quadrature", 1,
        opt.seed, threads);
    rows.push_back({{"T", "continuous"},
                    {"nats_per_token", cont.nats_per_token},
                    {"ppl_bound", cont.ppl}});

    Report report;
    report.command = "ablate";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(cfg.serialize());
    report.metrics["kind_T"] = 1;
    report.metrics["continuous_ppl"] = cont.ppl;
    report.tables["rows"] = rows;
    finish_report(report, opt.out_dir);

    const double slack = 1.005;  // 0.5% estimator noise allowance
    for (size_t k = 1; k < ppls.size(); ++k) {
        if (ppls[k] > ppls[k - 1] * slack) {
            throw VerificationFailure("PPL bound not monotone at T=" +
                                      std::to_string(opt.T_list[k]));
        }
    }
    for (double p : ppls) {
        if (cont.ppl > p * slack) {
            throw VerificationFailure("continuous PPL is not the minimum");
        }
    }
    return report;
}

Report ablate_time_conditioning(const AblateOptions& opt) {
    const RunConfig cfg = RunConfig::parse_file(opt.config_path);
    const Vocabulary vocab = load_vocab(opt.vocab_path);
    if (vocab.n_data() != cfg.model_k_data) {
        throw ConfigError("vocab file does not match model.k_data");
    }
    const auto corpus = load_corpus(opt.corpus_path, vocab);
    const int threads = opt.deterministic ? 1 : thread_cap();

    json rows = json::array();
    double ppl_on = 0.0, ppl_off = 0.0;
    for (const bool conditioned : {true, false}) {
        RunConfig variant_cfg = cfg;
        variant_cfg.model_time_conditioning = conditioned;
        ContextBagModel model(vocab, variant_cfg.model_config());
        train(model, corpus, variant_cfg.train_config(), variant_cfg.schedule);
        const EvalSummary summary = evaluate_corpus(
            model, corpus, variant_cfg.schedule,
            ObjectiveVariant{ObjectiveKind::continuous, 0}, cfg.eval_estimator,
            cfg.eval_n_samples, opt.seed, threads);
        (conditioned ? ppl_on : ppl_off) = summary.ppl;
        rows.push_back({{"time_conditioning", conditioned},
                        {"nats_per_token", summary.nats_per_token},
                        {"ppl", summary.ppl}});
    }

    Report report;
    report.command = "ablate";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex(cfg.serialize());
    report.metrics["kind_time_conditioning"] = 1;
    report.metrics["ppl_with_time"] = ppl_on;
    report.metrics["ppl_without_time"] = ppl_off;
    report.metrics["abs_delta_ppl"] = std::abs(ppl_on - ppl_off);
    report.tables["rows"] = rows;
    finish_report(report, opt.out_dir);
    return report;
}

Report ablate_objective_ladder(const AblateOptions& opt) {
    const Vocabulary vocab = Vocabulary::with_data_tokens(3);
    const int L = 3;
    Rng rng(opt.seed);
    json rows = json::array();
    double max_pair_diff = 0.0;
    double min_unconstrained_gap = std::numeric_limits<double>::infinity();
    for (int inst = 0; inst < 10; ++inst) {
        const uint64_t den_seed = rng.next_u64();
        TabularDenoiser subs(vocab, L, den_seed, TabularDenoiser::Mode::kSubs);
        TabularDenoiser raw = subs.with_mode(TabularDenoiser::Mode::kRaw);
        std::vector<Token> x(static_cast<size_t>(L));
        for (auto& t : x) {
            t = static_cast<Token>(rng.next_unit() * vocab.n_data());
        }
        const int T = 2 + static_cast<int>(rng.next_unit() * 7);
        const double v_d3pm = diffusion_loss_discrete_exhaustive(
            ObjectiveVariant{ObjectiveKind::d3pm_full, T}, x, subs);
        const double v_rb2 = diffusion_loss_discrete_exhaustive(
            ObjectiveVariant{ObjectiveKind::rb2, T}, x, subs);
        const double v_rb21 = diffusion_loss_discrete_exhaustive(
            ObjectiveVariant{ObjectiveKind::rb2_rb1_discrete, T}, x, subs);
        const double v_unconstrained = diffusion_loss_discrete_exhaustive(
            ObjectiveVariant{ObjectiveKind::d3pm_full, T}, x, raw);
        const double pair_diff = std::max(std::abs(v_d3pm - v_rb2),
                                          std::abs(v_rb2 - v_rb21));
        max_pair_diff = std::max(max_pair_diff, pair_diff);
        min_unconstrained_gap =
            std::min(min_unconstrained_gap, v_unconstrained - v_rb2);
        rows.push_back({{"instance", inst},
                        {"T", T},
                        {"d3pm_full", v_d3pm},
                        {"rb2", v_rb2},
                        {"rb2_rb1", v_rb21},
                        {"d3pm_unconstrained", v_unconstrained},
                        {"max_pair_diff", pair_diff}});
    }

    Report report;
    report.command = "ablate";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex("ladder");
    report.metrics["kind_objective_ladder"] = 1;
    report.metrics["max_pair_diff"] = max_pair_diff;
    report.metrics["min_unconstrained_minus_rb2"] = min_unconstrained_gap;
    report.tables["rows"] = rows;
    finish_report(report, opt.out_dir);
    if (max_pair_diff > 1e-12) {
        throw VerificationFailure("objective ladder values differ by " +
                                  std::to_string(max_pair_diff));
    }
    return report;
}

}  // namespace

Report cmd_ablate(const AblateOptions& opt) {
    if (opt.kind == "schedules") return ablate_schedules(opt);
    if (opt.kind == "T") return ablate_T(opt);
    if (opt.kind == "time_conditioning") return ablate_time_conditioning(opt);
    if (opt.kind == "objective_ladder") return ablate_objective_ladder(opt);
    throw ConfigError("unknown ablation kind: " + opt.kind);
}

Report cmd_score_check(const ScoreCheckOptions& opt) {
    const Vocabulary vocab = Vocabulary::with_data_tokens(3);
    TabularDenoiser den(vocab, 2, mix64(opt.seed), TabularDenoiser::Mode::kSubs);
    NoiseSchedule sched;  // log-linear
    Rng rng(opt.seed);
    const EquivalenceReport eq = equivalence_report(den, sched, opt.n_cases, rng);

    double max_colsum = 0.0;
    for (int c = 0; c < 32; ++c) {
        const double t = 0.01 + 0.98 * rng.next_unit();
        const RateMatrix m = forward_rate(t, sched, vocab.K);
        for (int y = 0; y < vocab.K; ++y) {
            max_colsum = std::max(max_colsum, std::abs(m.column_sum(y)));
        }
    }

    json cases = json::array();
    for (const EquivalenceCase& c : eq.cases) {
        cases.push_back({{"t", c.t},
                         {"y", c.y},
                         {"x", c.x},
                         {"sedd", c.sedd},
                         {"mdlm", c.mdlm},
                         {"deviation", c.deviation},
                         {"rate_deviation", c.rate_deviation}});
    }

    Report report;
    report.command = "score-check";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex("score/" + std::to_string(opt.n_cases));
    report.metrics["n_cases"] = opt.n_cases;
    report.metrics["max_abs_deviation"] = eq.max_abs_deviation;
    report.metrics["max_rate_deviation"] = eq.max_rate_deviation;
    report.metrics["max_forward_rate_column_sum"] = max_colsum;
    report.tables["cases"] = cases;
    finish_report(report, opt.out_dir);
    if (eq.max_abs_deviation > 1e-10) {
        throw VerificationFailure("score-entropy and simplified integrands differ by " +
                                  std::to_string(eq.max_abs_deviation));
    }
    if (eq.max_rate_deviation > 1e-12 || max_colsum > 1e-12) {
        throw VerificationFailure("rate-matrix consistency check failed");
    }
    return report;
}

Report cmd_expected_tokens(const ExpectedTokensOptions& opt) {
    NoiseSchedule sched;
    sched.kind = schedule_kind_from_string(opt.schedule);
    sched.sigma_max = opt.sigma_max;
    const double factor =
        opt.autoregressive ? 1.0 : masking_token_factor(sched);
    const long long tokens =
        expected_tokens(opt.steps, opt.batch, opt.ctx, sched, opt.autoregressive);

    Report report;
    report.command = "expected-tokens";
    report.seed = 0;
    report.config_hash = fnv1a64_hex(opt.schedule);
    report.metrics["steps"] = opt.steps;
    report.metrics["batch"] = opt.batch;
    report.metrics["ctx"] = opt.ctx;
    report.metrics["factor"] = factor;
    report.metrics["expected_tokens"] = tokens;
    report.metrics["autoregressive"] = opt.autoregressive ? 1 : 0;
    finish_report(report, opt.out_dir);
    std::cout << "expected tokens: " << tokens << " (factor " << factor << ")\n";
    return report;
}

namespace {

struct VerifyCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

VerifyCheck run_check(const std::string& name,
                      const std::function<std::string()>& body) {
    VerifyCheck c;
    c.name = name;
    try {
        c.detail = body();
        c.pass = true;
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = e.what();
    }
    return c;
}

double max_simplex_diff(const Simplex& a, const Simplex& b) {
    double d = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
}

}  // namespace

Report cmd_verify(const VerifyOptions& opt) {
    std::vector<VerifyCheck> checks;
    const Vocabulary vocab4 = Vocabulary::with_data_tokens(3);
    NoiseSchedule log_linear;

    checks.push_back(run_check("posterior_collapse", [&]() {
        const PriorSpec masked = PriorSpec::masked(vocab4);
        double worst = 0.0;
        for (int a = 0; a < 20; ++a) {
            for (int b = 0; b < 20; ++b) {
                const double alpha_s = (a + 1.0) / 21.0;
                const double alpha_t = (b + 1.0) / 21.0;
                if (alpha_s <= alpha_t) {
                    continue;
                }
                const double s = 1.0 - alpha_s;
                const double t = 1.0 - alpha_t;
                for (Token z_t : {Token(1), vocab4.mask_index}) {
                    const Simplex general =
                        posterior_general(z_t, 1, s, t, log_linear, masked, vocab4);
                    const Simplex simplified =
                        posterior_masked(z_t, 1, s, t, log_linear, vocab4);
                    worst = std::max(worst, max_simplex_diff(general, simplified));
                }
            }
        }
        if (worst > 1e-12) {
            throw VerificationFailure("max deviation " + std::to_string(worst));
        }
        return "max deviation " + std::to_string(worst);
    }));

    checks.push_back(run_check("objective_ladder", [&]() {
        double worst = 0.0;
        Rng rng = Rng(opt.seed).fork(2);
        for (int inst = 0; inst < 3; ++inst) {
            TabularDenoiser den(vocab4, 3, rng.next_u64(),
                                TabularDenoiser::Mode::kSubs);
            std::vector<Token> x = {0, 1, 2};
            for (int T : {2, 5}) {
                const double d3 = diffusion_loss_discrete_exhaustive(
                    {ObjectiveKind::d3pm_full, T}, x, den);
                const double r2 = diffusion_loss_discrete_exhaustive(
                    {ObjectiveKind::rb2, T}, x, den);
                const double r21 = diffusion_loss_discrete_exhaustive(
                    {ObjectiveKind::rb2_rb1_discrete, T}, x, den);
                worst = std::max({worst, std::abs(d3 - r2), std::abs(r2 - r21)});
            }
        }
        if (worst > 1e-12) {
            throw VerificationFailure("ladder deviation " + std::to_string(worst));
        }
        return "max deviation " + std::to_string(worst);
    }));

    checks.push_back(run_check("variational_bound", [&]() {
        Rng rng = Rng(opt.seed).fork(3);
        double min_gap = std::numeric_limits<double>::infinity();
        for (int inst = 0; inst < 3; ++inst) {
            TabularDenoiser den(vocab4, 3, rng.next_u64(),
                                TabularDenoiser::Mode::kSubs);
            std::vector<Token> x = {2, 0, 1};
            const auto rows = bound_gap_report(x, den, {2, 4, 8});
            for (const auto& row : rows) {
                min_gap = std::min(min_gap, row.gap);
            }
        }
        return "min gap " + std::to_string(min_gap);
    }));

    checks.push_back(run_check("bayes_tightness", [&]() {
        Rng rng = Rng(opt.seed).fork(4);
        const DataDistribution dist = DataDistribution::random(vocab4, 2, rng);
        BayesDenoiser den(dist);
        double worst = 0.0;
        for (size_t i = 0; i < dist.n_sequences(); ++i) {
            const std::vector<Token> x = dist.index_to_seq(i);
            const double nelbo =
                nelbo_continuous_quadrature(x, den, log_linear).value;
            worst = std::max(worst, std::abs(nelbo + std::log(dist.p[i])));
        }
        if (worst > 1e-3) {
            throw VerificationFailure("tightness deviation " + std::to_string(worst));
        }
        return "max |NELBO + log p| = " + std::to_string(worst);
    }));

    checks.push_back(run_check("schedule_invariance", [&]() {
        Rng rng = Rng(opt.seed).fork(5);
        TabularDenoiser den(vocab4, 3, rng.next_u64(),
                            TabularDenoiser::Mode::kSubs);
        std::vector<Token> x = {1, 2, 0};
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (ScheduleKind kind :
             {ScheduleKind::log_linear, ScheduleKind::cosine,
              ScheduleKind::cosine_squared, ScheduleKind::linear}) {
            NoiseSchedule sched;
            sched.kind = kind;
            sched.sigma_max = 10.0;
            const double v = nelbo_continuous_quadrature(x, den, sched).value;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > 1e-3) {
            throw VerificationFailure("spread " + std::to_string(hi - lo));
        }
        return "spread " + std::to_string(hi - lo);
    }));

    checks.push_back(run_check("sampler_distribution", [&]() {
        const Vocabulary vocab3 = Vocabulary::with_data_tokens(2);
        TabularDenoiser den(vocab3, 2, mix64(opt.seed + 11),
                            TabularDenoiser::Mode::kSubs);
        const std::vector<double> exact = sampler_distribution(den, log_linear, 4);
        std::vector<long> counts(exact.size(), 0);
        const long n_draws = 20000;
        Rng base(opt.seed + 12);
        for (long i = 0; i < n_draws; ++i) {
            Rng rng = base.fork(static_cast<uint64_t>(i));
            const SampleResult r = ancestral_sample(den, log_linear, 4, rng, false);
            size_t idx = 0;
            for (Token t : r.tokens) {
                idx = idx * 2 + static_cast<size_t>(t);
            }
            ++counts[idx];
        }
        double tv = 0.0;
        for (size_t i = 0; i < exact.size(); ++i) {
            tv += std::abs(static_cast<double>(counts[i]) / n_draws - exact[i]);
        }
        tv *= 0.5;
        if (tv > 0.05) {
            throw VerificationFailure("TV distance " + std::to_string(tv));
        }
        return "TV distance " + std::to_string(tv);
    }));

    checks.push_back(run_check("cache_equivalence", [&]() {
        ContextBagModel model(vocab4, {8, 12, 16, false});
        Rng init = Rng(opt.seed).fork(6);
        model.init_random(init);
        long saved = 0;
        for (int s = 0; s < 10; ++s) {
            Rng r1 = Rng(opt.seed).fork(100 + static_cast<uint64_t>(s));
            Rng r2 = Rng(opt.seed).fork(100 + static_cast<uint64_t>(s));
            const SampleResult off = ancestral_sample(model, log_linear, 16, r1, false);
            const SampleResult on = ancestral_sample(model, log_linear, 16, r2, true);
            if (off.tokens != on.tokens) {
                throw VerificationFailure("cached trajectory diverged");
            }
            saved += off.stats.denoiser_calls - on.stats.denoiser_calls;
        }
        if (saved <= 0) {
            throw VerificationFailure("caching saved no calls");
        }
        return "calls saved over 10 runs: " + std::to_string(saved);
    }));

    checks.push_back(run_check("score_equivalence", [&]() {
        TabularDenoiser den(vocab4, 2, mix64(opt.seed + 21),
                            TabularDenoiser::Mode::kSubs);
        Rng rng = Rng(opt.seed).fork(8);
        const EquivalenceReport eq = equivalence_report(den, log_linear, 200, rng);
        if (eq.max_abs_deviation > 1e-10) {
            throw VerificationFailure("integrand deviation " +
                                      std::to_string(eq.max_abs_deviation));
        }
        return "max deviation " + std::to_string(eq.max_abs_deviation);
    }));

    checks.push_back(run_check("gradient_check", [&]() {
        Rng rng = Rng(opt.seed).fork(9);
        double worst = 0.0;
        for (int rep = 0; rep < 3; ++rep) {
            ContextBagModel model(vocab4, {3, 5, 6, rep == 1});
            model.init_random(rng);
            std::vector<Token> x = {0, 1, 2};
            std::vector<Token> z = {0, vocab4.mask_index, vocab4.mask_index};
            ContextBagModel::BatchItem item{&x, &z, 0.4, -1.7};
            auto grads = model.zero_like_params();
            model.loss_and_grad(std::span(&item, 1), &grads);
            auto& params = *model.mutable_params();
            for (size_t a = 0; a < params.size(); ++a) {
                for (size_t j = 0; j < params[a].size(); j += 7) {
                    const double orig = params[a][j];
                    const double h = 1e-5;
                    params[a][j] = orig + h;
                    const double up = model.loss_and_grad(std::span(&item, 1), nullptr);
                    params[a][j] = orig - h;
                    const double dn = model.loss_and_grad(std::span(&item, 1), nullptr);
                    params[a][j] = orig;
                    const double fd = (up - dn) / (2.0 * h);
                    const double rel = std::abs(fd - grads[a][j]) /
                                       (std::max(std::abs(fd), std::abs(grads[a][j])) + 1e-8);
                    worst = std::max(worst, rel);
                }
            }
        }
        if (worst > 1e-4) {
            throw VerificationFailure("gradient relative error " + std::to_string(worst));
        }
        return "max relative error " + std::to_string(worst);
    }));

    checks.push_back(run_check("low_discrepancy_variance", [&]() {
        // Fixed batch from a structured chain; only the time draws are
        // random, the mask expectation is exact per datapoint.
        const GeneratorSpec gen = GeneratorSpec::markov1_structured(4, 5);
        const Vocabulary vocab5 = Vocabulary::with_data_tokens(4);
        const DataDistribution dist = gen.to_distribution(vocab5);
        BayesDenoiser den(dist);
        const int L = 5;
        Rng pick = Rng(opt.seed).fork(10);
        std::vector<std::vector<double>> tables;
        for (int b = 0; b < 16; ++b) {
            tables.push_back(masked_nll_by_pattern(
                dist.index_to_seq(static_cast<size_t>(pick.next_unit() *
                                                      dist.n_sequences())),
                den, 0.0));
        }
        auto integrand = [&](int b, double t) {
            t = log_linear.clamp_t(t);
            return -log_linear.loss_weight(t) *
                   expected_masked_nll_from_table(
                       tables[static_cast<size_t>(b)], L,
                       1.0 - log_linear.alpha(t));
        };
        const int trials = 500;
        const int N = 16;
        Rng rng = Rng(opt.seed).fork(11);
        double var_lds = 0.0, var_iid = 0.0, mean_lds = 0.0, mean_iid = 0.0;
        std::vector<double> lds(trials), iid(trials);
        for (int tr = 0; tr < trials; ++tr) {
            Rng r1 = rng.fork(static_cast<uint64_t>(tr) * 2);
            Rng r2 = rng.fork(static_cast<uint64_t>(tr) * 2 + 1);
            const auto strat = low_discrepancy_times(N, r1);
            double acc_l = 0.0, acc_i = 0.0;
            for (int b = 0; b < N; ++b) {
                acc_l += integrand(b, strat[static_cast<size_t>(b)]);
                acc_i += integrand(b, r2.next_unit());
            }
            lds[static_cast<size_t>(tr)] = acc_l / N;
            iid[static_cast<size_t>(tr)] = acc_i / N;
            mean_lds += lds[static_cast<size_t>(tr)];
            mean_iid += iid[static_cast<size_t>(tr)];
        }
        mean_lds /= trials;
        mean_iid /= trials;
        for (int tr = 0; tr < trials; ++tr) {
            var_lds += (lds[static_cast<size_t>(tr)] - mean_lds) *
                       (lds[static_cast<size_t>(tr)] - mean_lds);
            var_iid += (iid[static_cast<size_t>(tr)] - mean_iid) *
                       (iid[static_cast<size_t>(tr)] - mean_iid);
        }
        if (var_lds >= var_iid) {
            throw VerificationFailure("stratified variance not lower: " +
                                      std::to_string(var_lds) + " vs " +
                                      std::to_string(var_iid));
        }
        return "variance " + std::to_string(var_lds / trials) + " vs iid " +
               std::to_string(var_iid / trials);
    }));

    checks.push_back(run_check("expected_tokens", [&]() {
        NoiseSchedule sched;
        const long long v = expected_tokens(1e6, 512, 128, sched, false);
        if (v != 32768000000LL) {
            throw VerificationFailure("got " + std::to_string(v));
        }
        return "1e6 x 512 x 128 x 0.5 = 32768000000";
    }));

    json rows = json::array();
    bool all_pass = true;
    for (const VerifyCheck& c : checks) {
        rows.push_back({{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        all_pass = all_pass && c.pass;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": "
                  << c.detail << "\n";
    }

    Report report;
    report.command = "verify";
    report.seed = opt.seed;
    report.config_hash = fnv1a64_hex("verify");
    report.metrics["n_checks"] = static_cast<long>(checks.size());
    report.metrics["n_failed"] =
        static_cast<long>(std::count_if(checks.begin(), checks.end(),
                                        [](const VerifyCheck& c) { return !c.pass; }));
    report.tables["checks"] = rows;
    finish_report(report, opt.out_dir);
    if (!all_pass) {
        throw VerificationFailure("verify suite has failing checks");
    }
    return report;
}

}  // namespace maskdiff
