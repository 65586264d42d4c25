#include <iostream>

#include <CLI11.hpp>

#include "maskdiff/commands.hpp"

using namespace maskdiff;

int main(int argc, char** argv) {
    CLI::App app{"masked discrete diffusion over token sequences"};
    app.require_subcommand(1);

    GenCorpusOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "rng seed")->required();
    gen_cmd->add_option("--generator", gen.generator, "uniform|markov1|templated");
    gen_cmd->add_option("--k-data", gen.k_data, "number of data tokens");
    gen_cmd->add_option("--len", gen.L, "sequence length");
    gen_cmd->add_option("--n", gen.n, "number of sequences");
    gen_cmd->add_option("--table", gen.table_path, "markov1 table JSON");
    gen_cmd->add_option("--template", gen.template_spec,
                        "templated pattern, e.g. \"0 * 1 *\"");

    TrainOptions train_opt;
    auto* train_cmd = app.add_subcommand("train", "train a denoiser");
    train_cmd->add_option("--config", train_opt.config_path)->required();
    train_cmd->add_option("--corpus", train_opt.corpus_path)->required();
    train_cmd->add_option("--vocab", train_opt.vocab_path)->required();
    train_cmd->add_option("--out", train_opt.out_dir)->required();
    train_cmd->add_flag("--deterministic", train_opt.deterministic);

    EvalOptions eval_opt;
    auto* eval_cmd = app.add_subcommand("eval", "likelihood evaluation");
    eval_cmd->add_option("--config", eval_opt.config_path)->required();
    eval_cmd->add_option("--checkpoint", eval_opt.checkpoint_path)->required();
    eval_cmd->add_option("--corpus", eval_opt.corpus_path)->required();
    eval_cmd->add_option("--vocab", eval_opt.vocab_path)->required();
    eval_cmd->add_option("--out", eval_opt.out_dir)->required();
    eval_cmd->add_option("--seed", eval_opt.seed)->required();
    eval_cmd->add_flag("--deterministic", eval_opt.deterministic);

    ZeroShotOptions zs_opt;
    auto* zs_cmd = app.add_subcommand("zero-shot", "evaluate across held-out generators");
    zs_cmd->add_option("--config", zs_opt.config_path)->required();
    zs_cmd->add_option("--checkpoint", zs_opt.checkpoint_path)->required();
    zs_cmd->add_option("--manifests", zs_opt.manifest_paths,
                       "corpus manifest JSON paths");
    zs_cmd->add_option("--out", zs_opt.out_dir)->required();
    zs_cmd->add_option("--seed", zs_opt.seed)->required();
    zs_cmd->add_flag("--deterministic", zs_opt.deterministic);

    SampleOptions sample_opt;
    auto* sample_cmd = app.add_subcommand("sample", "generate samples");
    sample_cmd->add_option("--checkpoint", sample_opt.checkpoint_path)->required();
    sample_cmd->add_option("--manifest", sample_opt.manifest_path,
                           "judge generator manifest")->required();
    sample_cmd->add_option("--out", sample_opt.out_dir)->required();
    sample_cmd->add_option("--seed", sample_opt.seed)->required();
    sample_cmd->add_option("--n", sample_opt.n, "number of samples");
    sample_cmd->add_option("--mode", sample_opt.mode, "plain|semi_ar");
    sample_cmd->add_option("--steps", sample_opt.T, "reverse steps T");
    sample_cmd->add_option("--l-prime", sample_opt.l_prime, "semi-AR block size");
    sample_cmd->add_option("--rounds", sample_opt.rounds, "semi-AR extra rounds");

    BenchCachingOptions bench_opt;
    auto* bench_cmd = app.add_subcommand("bench-caching", "caching benchmark");
    bench_cmd->add_option("--checkpoint", bench_opt.checkpoint_path)->required();
    bench_cmd->add_option("--out", bench_opt.out_dir)->required();
    bench_cmd->add_option("--seed", bench_opt.seed)->required();
    bench_cmd->add_option("--t-list", bench_opt.T_list, "step counts");
    bench_cmd->add_option("--n-seq", bench_opt.n_seq, "sequences per setting");

    AblateOptions ablate_opt;
    auto* ablate_cmd = app.add_subcommand("ablate", "ablation sweeps");
    ablate_cmd->add_option("--kind", ablate_opt.kind,
                           "schedules|T|time_conditioning|objective_ladder")
        ->required();
    ablate_cmd->add_option("--config", ablate_opt.config_path);
    ablate_cmd->add_option("--checkpoint", ablate_opt.checkpoint_path);
    ablate_cmd->add_option("--corpus", ablate_opt.corpus_path);
    ablate_cmd->add_option("--vocab", ablate_opt.vocab_path);
    ablate_cmd->add_option("--out", ablate_opt.out_dir)->required();
    ablate_cmd->add_option("--seed", ablate_opt.seed)->required();
    ablate_cmd->add_option("--t-list", ablate_opt.T_list, "T sweep values");
    ablate_cmd->add_flag("--deterministic", ablate_opt.deterministic);

    ScoreCheckOptions score_opt;
    auto* score_cmd = app.add_subcommand("score-check", "CTMC equivalence report");
    score_cmd->add_option("--out", score_opt.out_dir)->required();
    score_cmd->add_option("--seed", score_opt.seed)->required();
    score_cmd->add_option("--n-cases", score_opt.n_cases);

    VerifyOptions verify_opt;
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle suite");
    verify_cmd->add_option("--out", verify_opt.out_dir)->required();
    verify_cmd->add_option("--seed", verify_opt.seed)->required();

    ExpectedTokensOptions et_opt;
    auto* et_cmd = app.add_subcommand("expected-tokens",
                                      "expected tokens seen during training");
    et_cmd->add_option("--steps", et_opt.steps)->required();
    et_cmd->add_option("--batch", et_opt.batch)->required();
    et_cmd->add_option("--ctx", et_opt.ctx)->required();
    et_cmd->add_option("--schedule", et_opt.schedule);
    et_cmd->add_option("--sigma-max", et_opt.sigma_max);
    et_cmd->add_flag("--ar", et_opt.autoregressive);
    et_cmd->add_option("--out", et_opt.out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen_cmd) cmd_gen_corpus(gen);
        if (*train_cmd) cmd_train(train_opt);
        if (*eval_cmd) cmd_eval(eval_opt);
        if (*zs_cmd) cmd_zero_shot(zs_opt);
        if (*sample_cmd) cmd_sample(sample_opt);
        if (*bench_cmd) cmd_bench_caching(bench_opt);
        if (*ablate_cmd) cmd_ablate(ablate_opt);
        if (*score_cmd) cmd_score_check(score_opt);
        if (*verify_cmd) cmd_verify(verify_opt);
        if (*et_cmd) cmd_expected_tokens(et_opt);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const EmptyInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const VerificationFailure& e) {
        std::cerr << "verification failed: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
