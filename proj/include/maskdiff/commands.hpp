#pragma once

#include <string>
#include <vector>

#include "maskdiff/config.hpp"
#include "maskdiff/data.hpp"
#include "maskdiff/denoiser.hpp"
#include "maskdiff/report.hpp"

namespace maskdiff {

// A sweep assertion or oracle check failed; the CLI maps this to exit 2.
struct VerificationFailure : Error {
    using Error::Error;
};

// Parallelism cap from MASKDIFF_THREADS (>=1). Deterministic regardless of
// the cap: work items only write their own slot.
int thread_cap();
void parallel_for(size_t n, const std::function<void(size_t)>& fn,
                  int max_threads);

struct EvalSummary {
    double nats_per_token = 0.0;
    double ppl = 0.0;
    double per_datapoint_variance = 0.0;  // of per-datapoint nats/token
    long n_datapoints = 0;
};

// Corpus-level NELBO evaluation. `estimator` is "mc" (one stratified-time
// sample per datapoint per round) or "quadrature"/exhaustive (exact per
// datapoint, guarded sizes).
EvalSummary evaluate_corpus(const Denoiser& den,
                            const std::vector<std::vector<Token>>& corpus,
                            const NoiseSchedule& sched,
                            const ObjectiveVariant& variant,
                            const std::string& estimator, long n_samples,
                            uint64_t seed, int max_threads);

// Expected number of tokens seen by a diffusion model: steps * batch * ctx
// times E[1 - alpha_t]; exactly 0.5 for log-linear, numeric integration
// otherwise. AR accounting uses factor 1.
double masking_token_factor(const NoiseSchedule& sched);
long long expected_tokens(double steps, double batch, double ctx,
                          const NoiseSchedule& sched, bool autoregressive);

struct GenCorpusOptions {
    std::string out_dir;
    uint64_t seed = 1;
    std::string generator = "markov1";  // uniform | markov1 | templated
    int k_data = 6;
    int L = 16;
    long n = 1000;
    std::string table_path;     // optional markov1 table JSON
    std::string template_spec;  // optional templated pattern, "*" = slot
};
Report cmd_gen_corpus(const GenCorpusOptions& opt);

struct TrainOptions {
    std::string config_path;
    std::string corpus_path;
    std::string vocab_path;
    std::string out_dir;
    bool deterministic = false;
};
Report cmd_train(const TrainOptions& opt);

struct EvalOptions {
    std::string config_path;
    std::string checkpoint_path;
    std::string corpus_path;
    std::string vocab_path;
    std::string out_dir;
    uint64_t seed = 1;
    bool deterministic = false;
};
Report cmd_eval(const EvalOptions& opt);

struct ZeroShotOptions {
    std::string config_path;
    std::string checkpoint_path;
    std::vector<std::string> manifest_paths;
    std::string out_dir;
    uint64_t seed = 1;
    bool deterministic = false;
};
Report cmd_zero_shot(const ZeroShotOptions& opt);

struct SampleOptions {
    std::string checkpoint_path;
    std::string manifest_path;  // judge generator
    std::string out_dir;
    uint64_t seed = 1;
    long n = 16;
    std::string mode = "plain";  // plain | semi_ar
    int T = 64;
    int l_prime = 0;
    int rounds = 0;
};
Report cmd_sample(const SampleOptions& opt);

struct BenchCachingOptions {
    std::string checkpoint_path;
    std::string out_dir;
    uint64_t seed = 1;
    std::vector<int> T_list = {4, 16, 64};
    long n_seq = 8;
};
Report cmd_bench_caching(const BenchCachingOptions& opt);

struct AblateOptions {
    std::string kind;  // schedules | T | time_conditioning | objective_ladder
    std::string config_path;
    std::string checkpoint_path;
    std::string corpus_path;
    std::string vocab_path;
    std::string out_dir;
    uint64_t seed = 1;
    std::vector<int> T_list = {10, 100, 1000};
    bool deterministic = false;
};
Report cmd_ablate(const AblateOptions& opt);

struct ScoreCheckOptions {
    std::string out_dir;
    uint64_t seed = 1;
    int n_cases = 1000;
};
Report cmd_score_check(const ScoreCheckOptions& opt);

struct VerifyOptions {
    std::string out_dir;
    uint64_t seed = 1;
};
Report cmd_verify(const VerifyOptions& opt);

struct ExpectedTokensOptions {
    double steps = 0.0;
    double batch = 0.0;
    double ctx = 0.0;
    std::string schedule = "log_linear";
    double sigma_max = 1e8;
    bool autoregressive = false;
    std::string out_dir;
};
Report cmd_expected_tokens(const ExpectedTokensOptions& opt);

}  // namespace maskdiff
