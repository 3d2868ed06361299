#pragma once

#include "vocabtrim/pipeline.hpp"
#include "vocabtrim/textgen.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace vocabtrim {

namespace cli_detail {

// flag overrides applied on top of the loaded config file; flags win
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::int32_t> k;
    std::optional<std::string> source;
    std::optional<std::int64_t> max_new;
    std::optional<std::string> task;
    std::vector<std::string> corpus;
    std::optional<std::string> eval_prompts;
    std::optional<double> relative_latency;
    std::optional<std::int32_t> gamma;
    bool count_prompts = false;
    std::optional<std::string> counter_out;
    std::optional<std::string> selection_out;
    std::optional<std::string> report_out;
    std::optional<std::string> plot_out;
    std::optional<std::string> generations_dir;
    bool no_audit = false;
};

inline void add_override_flags(CLI::App & cmd, Overrides & o) {
    cmd.add_option("--seed", o.seed, "Override the config seed");
    cmd.add_option("--k", o.k, "Override trim.k (TopK criterion)");
    cmd.add_option("--source", o.source, "Override calibration source (raw|target-gen|draft-gen)");
    cmd.add_option("--max-new", o.max_new, "Override max generated tokens per prompt");
    cmd.add_option("--task", o.task, "Override the task label used in report rows");
    cmd.add_option("--corpus", o.corpus, "Override corpus file list");
    cmd.add_option("--eval-prompts", o.eval_prompts, "Override the eval prompt file");
    cmd.add_option("--relative-latency", o.relative_latency, "Override c instead of deriving it from param counts");
    cmd.add_option("--gamma", o.gamma, "Override gamma instead of using the tree depth");
    cmd.add_flag("--count-prompts", o.count_prompts, "Count prompt tokens in generated calibration streams");
    cmd.add_option("--counter-out", o.counter_out, "Counter file to write");
    cmd.add_option("--selection-out", o.selection_out, "Selection file to write");
    cmd.add_option("--report-out", o.report_out, "Report CSV to write");
    cmd.add_option("--plot-data", o.plot_out, "Plot data file with (K, BE, MBSU) triples");
    cmd.add_option("--generations-dir", o.generations_dir, "Directory for per-row generation text");
    cmd.add_flag("--no-audit", o.no_audit, "Skip the greedy-decode losslessness audit");
}

inline ExperimentConfig resolved_config(const std::string & config_path, const Overrides & o) {
    auto cfg = load_config(config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.k) cfg.trim = TrimConfig{.criterion = "topk", .k = *o.k};
    if (o.source) cfg.calibration.source = *o.source;
    if (o.max_new) cfg.max_new = *o.max_new;
    if (o.task) cfg.task = *o.task;
    if (!o.corpus.empty()) {
        cfg.corpus.clear();
        for (const auto & p : o.corpus) cfg.corpus.emplace_back(p);
    }
    if (o.eval_prompts) cfg.eval_prompts = *o.eval_prompts;
    if (o.relative_latency) cfg.relative_latency_override = *o.relative_latency;
    if (o.gamma) cfg.gamma_override = *o.gamma;
    if (o.count_prompts) cfg.calibration.count_prompts = true;
    if (o.counter_out) cfg.out.counter = *o.counter_out;
    if (o.selection_out) cfg.out.selection = *o.selection_out;
    if (o.report_out) cfg.out.report_csv = *o.report_out;
    if (o.plot_out) cfg.out.plot = *o.plot_out;
    if (o.generations_dir) cfg.out.generations_dir = *o.generations_dir;
    if (o.no_audit) cfg.audit_losslessness = false;
    return cfg;
}

inline std::vector<double> parse_grid(const std::string & grid) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < grid.size()) {
        const auto comma = grid.find(',', pos);
        const auto piece = grid.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            out.push_back(std::stod(piece));
        } catch (const std::exception &) {
            throw config_error("bad K grid entry: '" + piece + "'");
        }
        if (comma == std::string::npos) {
            break;
        }
        pos = comma + 1;
    }
    return out;
}

inline void write_lines(const std::vector<std::string> & lines, const std::filesystem::path & path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open output file: " + path.string());
    }
    for (const auto & line : lines) {
        out << line << "\n";
    }
}

} // namespace cli_detail

inline int run_cli(int argc, const char * const * argv) {
    CLI::App app{"vocabtrim: speculative decoding with a frequency-trimmed draft vocabulary"};
    app.require_subcommand(1);

    // make-corpus
    auto * make_corpus = app.add_subcommand("make-corpus", "Generate a deterministic synthetic text corpus");
    TextGenConfig gen_cfg;
    std::string corpus_out;
    std::string prompts_out;
    std::int32_t prompt_count = 0;
    std::int32_t prompt_words = 6;
    make_corpus->add_option("-o,--out", corpus_out, "Corpus file to write")->required();
    make_corpus->add_option("--bytes", gen_cfg.target_bytes, "Approximate corpus size in bytes");
    make_corpus->add_option("--seed", gen_cfg.seed, "Generator seed");
    make_corpus->add_option("--words", gen_cfg.n_words, "Distinct surface words");
    make_corpus->add_option("--latent-dim", gen_cfg.latent_dim, "Rank of the successor structure");
    make_corpus->add_option("--coupling", gen_cfg.coupling, "Bilinear coupling scale");
    make_corpus->add_option("--zipf-bias", gen_cfg.zipf_bias, "Frequency prior exponent");
    make_corpus->add_option("--fallback", gen_cfg.fallback, "Rank-free Zipf mixture weight");
    make_corpus->add_option("--prompts", prompt_count, "Also write this many held-out prompts");
    make_corpus->add_option("--prompt-words", prompt_words, "Words per prompt");
    make_corpus->add_option("--prompts-out", prompts_out, "Prompt file to write");

    // calibrate
    auto * calibrate = app.add_subcommand("calibrate", "Count calibration token frequencies into a counter file");
    std::string calibrate_config;
    cli_detail::Overrides calibrate_overrides;
    calibrate->add_option("-c,--config", calibrate_config, "Experiment config JSON")->required();
    cli_detail::add_override_flags(*calibrate, calibrate_overrides);

    // trim
    auto * trim_cmd = app.add_subcommand("trim", "Select the kept vocabulary from a counter");
    std::string trim_config;
    std::string trim_counter_in;
    cli_detail::Overrides trim_overrides;
    trim_cmd->add_option("-c,--config", trim_config, "Experiment config JSON")->required();
    trim_cmd->add_option("--counter", trim_counter_in, "Counter file to trim from (default: recount)");
    cli_detail::add_override_flags(*trim_cmd, trim_overrides);

    // generate
    auto * generate = app.add_subcommand("generate", "Speculatively decode a single prompt and print stats");
    std::string generate_config;
    std::string generate_prompt;
    cli_detail::Overrides generate_overrides;
    generate->add_option("-c,--config", generate_config, "Experiment config JSON")->required();
    generate->add_option("-p,--prompt", generate_prompt, "Prompt text")->required();
    cli_detail::add_override_flags(*generate, generate_overrides);

    // bench
    auto * bench = app.add_subcommand("bench", "Decode the eval prompt set and report BE / MBSU rows");
    std::string bench_config;
    bool bench_all_sources = false;
    cli_detail::Overrides bench_overrides;
    bench->add_option("-c,--config", bench_config, "Experiment config JSON")->required();
    bench->add_flag("--all-sources", bench_all_sources, "Run raw, target-gen and draft-gen side by side");
    cli_detail::add_override_flags(*bench, bench_overrides);

    // sweep
    auto * sweep = app.add_subcommand("sweep", "Bench a grid of K values for the sweet-spot curve");
    std::string sweep_config;
    std::string sweep_grid = "0.02,0.05,0.1,0.25,0.5,1.0";
    cli_detail::Overrides sweep_overrides;
    sweep->add_option("-c,--config", sweep_config, "Experiment config JSON")->required();
    sweep->add_option("--k-grid", sweep_grid, "Comma list; values <= 1 are fractions of V, larger are absolute K");
    cli_detail::add_override_flags(*sweep, sweep_overrides);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        app.exit(e);
        return 2;
    }

    try {
        if (make_corpus->parsed()) {
            cli_detail::write_lines(generate_corpus_lines(gen_cfg), corpus_out);
            std::printf("wrote corpus: %s\n", corpus_out.c_str());
            if (prompt_count > 0) {
                if (prompts_out.empty()) {
                    throw config_error("--prompts needs --prompts-out");
                }
                cli_detail::write_lines(generate_prompt_lines(gen_cfg, prompt_count, prompt_words), prompts_out);
                std::printf("wrote prompts: %s\n", prompts_out.c_str());
            }
            return 0;
        }
        if (calibrate->parsed()) {
            auto cfg = cli_detail::resolved_config(calibrate_config, calibrate_overrides);
            if (cfg.out.counter.empty()) {
                throw config_error("calibrate needs out.counter in the config or --counter-out");
            }
            Pipeline pipeline(cfg, /*need_eval_prompts=*/false);
            detail::maybe_save_counter(pipeline.counter(), cfg.out.counter);
            std::printf("wrote counter: %s (V=%d total=%lld)\n", cfg.out.counter.string().c_str(),
                        pipeline.counter().size(), static_cast<long long>(pipeline.counter().total()));
            return 0;
        }
        if (trim_cmd->parsed()) {
            auto cfg = cli_detail::resolved_config(trim_config, trim_overrides);
            if (cfg.out.selection.empty()) {
                throw config_error("trim needs out.selection in the config or --selection-out");
            }
            Pipeline pipeline(cfg, /*need_eval_prompts=*/false);
            auto counter = trim_counter_in.empty() ? pipeline.counter() : load_counter(trim_counter_in);
            const auto selection = pipeline.select(counter, cfg.trim);
            detail::maybe_save_selection(selection, cfg.out.selection);
            std::printf("wrote selection: %s (K=%d of V=%d, digest=%s)\n", cfg.out.selection.string().c_str(),
                        selection.kept_size(), selection.vocab_size(),
                        digest_hex(selection.source_digest()).c_str());
            return 0;
        }
        if (generate->parsed()) {
            auto cfg = cli_detail::resolved_config(generate_config, generate_overrides);
            const auto result = run_generate(cfg, generate_prompt);
            std::printf("%s\n", result.text.c_str());
            std::printf("-- K=%d blocks=%d produced=%lld BE=%.4f accepted:", result.k, result.stats.blocks,
                        static_cast<long long>(result.stats.produced), result.block_eff);
            for (auto a : result.stats.accepted_per_block) {
                std::printf(" %d", a);
            }
            std::printf("\n");
            return 0;
        }
        if (bench->parsed()) {
            auto cfg = cli_detail::resolved_config(bench_config, bench_overrides);
            const auto report = bench_all_sources ? run_bench_all_sources(cfg) : run_pipeline(cfg);
            std::printf("%s", report_table(report).c_str());
            if (!cfg.out.report_csv.empty()) {
                std::printf("wrote report: %s\n", cfg.out.report_csv.string().c_str());
            }
            return 0;
        }
        if (sweep->parsed()) {
            auto cfg = cli_detail::resolved_config(sweep_config, sweep_overrides);
            const auto report = run_sweep(cfg, cli_detail::parse_grid(sweep_grid));
            std::printf("%s", report_table(report).c_str());
            if (!cfg.out.plot.empty()) {
                std::printf("wrote plot data: %s\n", cfg.out.plot.string().c_str());
            }
            return 0;
        }
    } catch (const config_error & e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const data_error & e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const internal_error & e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 4;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 4;
    }
    return 0;
}

} // namespace vocabtrim
