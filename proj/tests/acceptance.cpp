// Acceptance suite: runs every acceptance criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit code is
// the number of failed criteria.

#include "vocabtrim/vocabtrim.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

using namespace vocabtrim;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string & what) {
    if (!cond) {
        throw Failure(what);
    }
}

std::string fmt(const char * pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, v);
    return buf;
}

// ---------------------------------------------------------------- shared

// workspace for the corpus-scale criteria, built once
struct Workspace {
    std::filesystem::path root;
    ExperimentConfig sweep_cfg;

    Workspace() {
        root = std::filesystem::current_path() / "acceptance_work";
        std::filesystem::remove_all(root);
        std::filesystem::create_directories(root);

        TextGenConfig gen;
        gen.seed = 42;
        gen.target_bytes = std::size_t(1) << 20; // ~1 MB
        write_lines(generate_corpus_lines(gen), root / "corpus.txt");
        write_lines(generate_prompt_lines(gen, 40, 5), root / "eval_prompts.txt");
        TextGenConfig calib_gen = gen;
        calib_gen.seed = 1042; // held-out calibration prompts
        write_lines(generate_prompt_lines(calib_gen, 120, 5), root / "calib_prompts.txt");

        sweep_cfg.task = "sweep";
        sweep_cfg.corpus = {root / "corpus.txt"};
        sweep_cfg.vocab_max_size = 8000;
        sweep_cfg.target = ModelConfig{.type = "ngram", .order = 4, .alpha = 0.05};
        sweep_cfg.draft = ModelConfig{.type = "linear", .alpha = 0.05, .hidden_dim = 32,
                                      .mix_positions = 1, .fit = true};
        sweep_cfg.calibration.source = "target-gen";
        sweep_cfg.calibration.paths = {root / "calib_prompts.txt"};
        sweep_cfg.calibration.max_new = 128;
        sweep_cfg.tree = TreeConfig{3, 8, 32};
        sweep_cfg.eval_prompts = root / "eval_prompts.txt";
        sweep_cfg.max_new = 96;
        sweep_cfg.seed = 42;
        sweep_cfg.out.counter = root / "counter.txt";
        sweep_cfg.out.selection = root / "selection.txt";
        sweep_cfg.out.report_csv = root / "report.csv";
        sweep_cfg.out.plot = root / "plot.tsv";
    }

    static void write_lines(const std::vector<std::string> & lines, const std::filesystem::path & path) {
        std::ofstream out(path, std::ios::binary);
        for (const auto & line : lines) {
            out << line << "\n";
        }
    }
};

std::string slurp(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ------------------------------------------------------------ criterion 1

// pure greedy loop, written here so it stays independent of the decode
// implementation it checks
std::vector<TokenId> greedy_loop(const LanguageModel & target, std::vector<TokenId> ctx,
                                 std::int64_t max_new, TokenId eos) {
    std::vector<TokenId> out;
    while (static_cast<std::int64_t>(out.size()) < max_new) {
        const auto logits = target.next_logits(ctx);
        TokenId best = 0;
        for (TokenId t = 1; t < static_cast<TokenId>(logits.size()); ++t) {
            if (logits[static_cast<std::size_t>(t)] > logits[static_cast<std::size_t>(best)]) {
                best = t;
            }
        }
        out.push_back(best);
        ctx.push_back(best);
        if (best == eos) {
            break;
        }
    }
    return out;
}

std::string criterion_losslessness() {
    const std::vector<std::int32_t> vocab_sizes = {6, 50, 500};
    int cases = 0;
    for (std::int32_t v : vocab_sizes) {
        CounterRng rng(9000 + static_cast<std::uint64_t>(v));
        for (int round = 0; round < 36; ++round) {
            // random target: alternate n-gram and linear-head families
            std::unique_ptr<LanguageModel> target;
            if (round % 2 == 0) {
                std::vector<TokenId> stream;
                const auto len = 40 + rng.below(400);
                for (std::uint64_t i = 0; i < len; ++i) {
                    stream.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))));
                }
                target = std::make_unique<NGramModel>(
                    train_ngram({stream}, 2 + static_cast<std::int32_t>(rng.below(3)), 0.05 + rng.uniform(), v));
            } else {
                target = std::make_unique<LinearHeadModel>(
                    LinearHeadModel::random(v, 2 + static_cast<std::int32_t>(rng.below(15)),
                                            1 + static_cast<std::int32_t>(rng.below(3)), rng.next_u64()));
            }

            // random draft with a random Top-K trim over a random counter
            const auto draft_model = LinearHeadModel::random(v, 2 + static_cast<std::int32_t>(rng.below(15)), 1,
                                                             rng.next_u64());
            FrequencyCounter counter(v);
            const auto mass = 20 + rng.below(200);
            for (std::uint64_t i = 0; i < mass; ++i) {
                counter.add(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))));
            }
            const TokenId eos = static_cast<TokenId>(v - 1);
            const auto k = 1 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(v)));
            const auto selection = select_trim(counter, TopK{std::max(k, 1)}, {eos});
            const auto draft = trim_head(draft_model, selection);

            std::vector<TokenId> prompt;
            const auto plen = 1 + rng.below(4);
            for (std::uint64_t i = 0; i < plen; ++i) {
                prompt.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))));
            }
            const TreeConfig cfg{1 + static_cast<std::int32_t>(rng.below(4)),
                                 1 + static_cast<std::int32_t>(rng.below(8)),
                                 4 + static_cast<std::int32_t>(rng.below(28))};
            const auto max_new = static_cast<std::int64_t>(8 + rng.below(25));

            const auto spd = spd_generate(*target, draft, prompt, max_new, cfg, eos);
            const auto reference = greedy_loop(*target, prompt, max_new, eos);
            expect(spd.output == reference,
                   "output diverged from greedy decode at V=" + std::to_string(v) +
                   " case " + std::to_string(round));
            ++cases;
        }
    }
    return std::to_string(cases) + " randomized cases token-identical to greedy decode";
}

// ------------------------------------------------------------ criterion 2

std::string criterion_trim_exactness() {
    CounterRng rng(7100);
    int checked_logits = 0;
    for (int round = 0; round < 100; ++round) {
        const std::int32_t v = 2 + static_cast<std::int32_t>(rng.below(63));
        const std::int32_t d = 1 + static_cast<std::int32_t>(rng.below(16));
        const auto model = LinearHeadModel::random(v, d, 1 + static_cast<std::int32_t>(rng.below(2)),
                                                   rng.next_u64());
        std::set<TokenId> chosen;
        const auto k = 1 + rng.below(static_cast<std::uint64_t>(v));
        while (chosen.size() < k) {
            chosen.insert(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))));
        }
        const TrimSelection selection(std::vector<TokenId>(chosen.begin(), chosen.end()), 0, v);
        const auto trimmed = trim_head(model, selection);

        std::vector<TokenId> ctx;
        const auto len = 1 + rng.below(5);
        for (std::uint64_t i = 0; i < len; ++i) {
            ctx.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))));
        }
        const auto full = model.next_logits(ctx);
        const auto trim = trimmed.trimmed_next_logits(ctx);
        for (std::size_t i = 0; i < trim.size(); ++i) {
            const auto t = trimmed.mapping().to_target(static_cast<std::int32_t>(i));
            expect(trim[i] == full[static_cast<std::size_t>(t)], "trimmed logit differs bit-exactly");
            ++checked_logits;
        }
        expect(model.param_count() - trimmed.param_count() ==
               static_cast<std::int64_t>(d) * (v - static_cast<std::int32_t>(k)),
               "param saving is not d*(V-K)");
    }
    return "100 models, " + std::to_string(checked_logits) + " logits bit-exact, savings d*(V-K) exact";
}

// ------------------------------------------------------------ criterion 3

std::string criterion_topk_oracle() {
    CounterRng rng(7300);
    for (int round = 0; round < 200; ++round) {
        const std::int32_t v = 2 + static_cast<std::int32_t>(rng.below(999));
        FrequencyCounter counter(v);
        const auto nonzero = rng.below(static_cast<std::uint64_t>(v) + 1);
        for (std::uint64_t i = 0; i < nonzero; ++i) {
            counter.add(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))),
                        1 + static_cast<std::int64_t>(rng.below(6))); // narrow range forces ties
        }
        std::set<TokenId> special;
        const auto n_special = rng.below(4);
        while (special.size() < n_special && special.size() < static_cast<std::size_t>(v)) {
            special.insert(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(v))));
        }
        const auto k = static_cast<std::int32_t>(special.size() +
                                                 rng.below(static_cast<std::uint64_t>(v - static_cast<std::int32_t>(special.size())) + 1));
        if (k < 1) {
            continue;
        }

        const auto selection = select_trim(counter, TopK{k}, special);

        // brute-force reference: full sort, then displace the weakest
        // non-special picks until the specials are in
        std::vector<TokenId> order(static_cast<std::size_t>(v));
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = static_cast<TokenId>(i);
        }
        std::sort(order.begin(), order.end(), [&counter](TokenId a, TokenId b) {
            const auto ca = counter.counts()[static_cast<std::size_t>(a)];
            const auto cb = counter.counts()[static_cast<std::size_t>(b)];
            return ca != cb ? ca > cb : a < b;
        });
        std::vector<TokenId> picks(order.begin(), order.begin() + k);
        for (TokenId s : special) {
            if (std::find(picks.begin(), picks.end(), s) != picks.end()) {
                continue;
            }
            for (auto it = picks.rbegin(); it != picks.rend(); ++it) {
                if (!special.contains(*it)) {
                    *it = s;
                    break;
                }
            }
        }
        std::sort(picks.begin(), picks.end());

        expect(std::vector<TokenId>(selection.kept().begin(), selection.kept().end()) == picks,
               "TopK selection diverged from the brute-force oracle at round " + std::to_string(round));
    }
    return "200 random counters (V \xE2\x89\xA4 1000) match the sort oracle, ties and specials included";
}

// ------------------------------------------------------------ criterion 4

void recompute_rows(const BenchReport & report) {
    expect(!report.rows.empty(), "no bench rows to recompute");
    for (const auto & row : report.rows) {
        std::int64_t sum = 0;
        for (auto a : row.accepted_per_block) {
            expect(a >= 0 && a <= row.gamma, "accepted count outside [0, gamma]");
            sum += a;
        }
        expect(static_cast<std::int64_t>(row.accepted_per_block.size()) == row.blocks,
               "per-block record does not cover every block");
        const double tau = static_cast<double>(sum + row.blocks) / static_cast<double>(row.blocks);
        expect(std::abs(tau - row.block_eff) <= 1e-12, "BE recomputation off by more than 1e-12");
        const double speedup = tau / (row.rel_latency * static_cast<double>(row.gamma) + 1.0);
        expect(std::abs(speedup - row.mbsu_value) <= 1e-12, "MBSU recomputation off by more than 1e-12");
        expect(row.block_eff >= 1.0 && row.block_eff <= static_cast<double>(row.gamma) + 1.0,
               "BE outside [1, gamma+1]");
    }
}

std::string criterion_metric_recompute(const std::filesystem::path & root) {
    TextGenConfig gen;
    gen.seed = 11;
    gen.n_words = 600;
    gen.latent_dim = 6;
    gen.target_bytes = 40000;
    Workspace::write_lines(generate_corpus_lines(gen), root / "metrics_corpus.txt");
    Workspace::write_lines(generate_prompt_lines(gen, 12, 4), root / "metrics_eval.txt");

    ExperimentConfig cfg;
    cfg.task = "metrics";
    cfg.corpus = {root / "metrics_corpus.txt"};
    cfg.vocab_max_size = 400;
    cfg.target = ModelConfig{.type = "ngram", .order = 3, .alpha = 0.1};
    cfg.draft = ModelConfig{.type = "linear", .alpha = 0.1, .hidden_dim = 16, .mix_positions = 1, .fit = true};
    cfg.calibration.source = "raw";
    cfg.trim = TrimConfig{.criterion = "topk", .k = 120};
    cfg.tree = TreeConfig{3, 4, 16};
    cfg.eval_prompts = root / "metrics_eval.txt";
    cfg.max_new = 48;
    cfg.seed = 42;

    const auto report = run_pipeline(cfg);
    recompute_rows(report);
    return std::to_string(report.rows.size()) + " rows recomputed within 1e-12, BE within [1, gamma+1]";
}

// ------------------------------------------------------------ criterion 5

std::string criterion_sweep(Workspace & ws, BenchReport & sweep_report_out) {
    const auto report = run_sweep(ws.sweep_cfg, {0.02, 0.05, 0.1, 0.25, 0.5, 1.0});
    sweep_report_out = report;
    expect(report.rows.size() == 6, "sweep must produce one row per K");

    const auto v = report.rows.back().k;
    expect(v == 8000, "expected V = 8000, got " + std::to_string(v));

    // rows ascend in K; BE must not increase as K shrinks
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
        expect(report.rows[i].k < report.rows[i + 1].k, "sweep rows not ascending in K");
        expect(report.rows[i].block_eff <= report.rows[i + 1].block_eff + 1e-12,
               "BE increased when K shrank: BE(K=" + std::to_string(report.rows[i].k) + ")=" +
               fmt("%.4f", report.rows[i].block_eff) + " > BE(K=" + std::to_string(report.rows[i + 1].k) +
               ")=" + fmt("%.4f", report.rows[i + 1].block_eff));
    }

    const auto & full_row = report.rows.back();
    const BenchRow * quarter_row = nullptr;
    for (const auto & row : report.rows) {
        if (row.k == v / 4) {
            quarter_row = &row;
        }
    }
    expect(quarter_row != nullptr, "missing K = 0.25V row");
    expect(quarter_row->block_eff >= 0.9 * full_row.block_eff,
           "BE drop at K=0.25V exceeds 10%: " + fmt("%.4f", quarter_row->block_eff) + " vs " +
           fmt("%.4f", full_row.block_eff));

    std::size_t best = 0;
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
        if (report.rows[i].mbsu_value > report.rows[best].mbsu_value) {
            best = i;
        }
    }
    expect(report.rows[best].mbsu_value > full_row.mbsu_value,
           "max MBSU is not strictly above the K=V MBSU");
    expect(best > 0 && best + 1 < report.rows.size(),
           "MBSU maximizer sits at the edge of the K grid (K=" + std::to_string(report.rows[best].k) + ")");

    std::string detail = "BE(V)=" + fmt("%.3f", full_row.block_eff) +
                         " BE(V/4)=" + fmt("%.3f", quarter_row->block_eff) +
                         " sweet spot K=" + std::to_string(report.rows[best].k) +
                         " MBSU " + fmt("%.3f", report.rows[best].mbsu_value) +
                         " vs " + fmt("%.3f", full_row.mbsu_value) + " at K=V";
    return detail;
}

// ------------------------------------------------------------ criterion 6

std::string criterion_sources(Workspace & ws) {
    ExperimentConfig cfg = ws.sweep_cfg;
    cfg.task = "sources";
    cfg.trim = TrimConfig{.criterion = "topk", .k = 2000}; // 0.25V
    cfg.out.counter = ws.root / "sources_counter.txt";
    cfg.out.selection = ws.root / "sources_selection.txt";
    cfg.out.report_csv = ws.root / "sources_report.csv";
    cfg.out.plot.clear();

    const auto report = run_bench_all_sources(cfg);
    expect(report.rows.size() == 4, "expected baseline + three source rows");
    expect(report.rows[0].source == "baseline", "first row must be the baseline");
    const std::vector<std::string> expected = {"raw", "target-gen", "draft-gen"};
    std::string ordering = "MBSU:";
    for (std::size_t i = 0; i < 3; ++i) {
        const auto & row = report.rows[i + 1];
        expect(row.source == expected[i], "missing side-by-side row for " + expected[i]);
        expect(row.blocks > 0 && row.produced > 0, "source row did not decode");
        ordering += " " + row.source + "=" + fmt("%.3f", row.mbsu_value);
    }
    recompute_rows(report);
    ordering += " baseline=" + fmt("%.3f", report.rows[0].mbsu_value);
    return "all three calibration sources ran side by side; " + ordering;
}

// ------------------------------------------------------------ criterion 7

std::string criterion_determinism(Workspace & ws) {
    ExperimentConfig cfg = ws.sweep_cfg;
    cfg.task = "repro";
    cfg.trim = TrimConfig{.criterion = "topk", .k = 2000};
    cfg.out.plot.clear();

    std::string first_counter;
    std::string first_selection;
    std::string first_report;
    for (int run = 0; run < 2; ++run) {
        const auto dir = ws.root / ("repro_" + std::to_string(run));
        std::filesystem::create_directories(dir);
        cfg.out.counter = dir / "counter.txt";
        cfg.out.selection = dir / "selection.txt";
        cfg.out.report_csv = dir / "report.csv";
        run_pipeline(cfg);
        if (run == 0) {
            first_counter = slurp(cfg.out.counter);
            first_selection = slurp(cfg.out.selection);
            first_report = slurp(cfg.out.report_csv);
        } else {
            expect(slurp(cfg.out.counter) == first_counter, "counter files differ between runs");
            expect(slurp(cfg.out.selection) == first_selection, "selection files differ between runs");
            expect(slurp(cfg.out.report_csv) == first_report, "report files differ between runs");
        }
    }
    expect(!first_counter.empty() && !first_selection.empty() && !first_report.empty(),
           "determinism artifacts were not written");
    return "counter, selection and report files byte-identical across two runs";
}

} // namespace

int main() {
    int failures = 0;
    Workspace ws;
    BenchReport sweep_report;

    struct Criterion {
        const char * name;
        double budget_seconds;
        std::function<std::string()> run;
    };

    const std::vector<Criterion> criteria = {
        {"1 losslessness", 30.0, [] { return criterion_losslessness(); }},
        {"2 trim-head exactness", 0.0, [] { return criterion_trim_exactness(); }},
        {"3 Top-K oracle equivalence", 0.0, [] { return criterion_topk_oracle(); }},
        {"4 metric recomputation", 0.0, [&ws] { return criterion_metric_recompute(ws.root); }},
        {"5 desk-scale sweep", 300.0, [&ws, &sweep_report] { return criterion_sweep(ws, sweep_report); }},
        {"6 calibration-source comparison", 0.0, [&ws] { return criterion_sources(ws); }},
        {"7 determinism", 0.0, [&ws] { return criterion_determinism(ws); }},
    };

    for (const auto & criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = criterion.run();
        } catch (const std::exception & e) {
            ok = false;
            detail = e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && criterion.budget_seconds > 0.0 && seconds > criterion.budget_seconds) {
            ok = false;
            detail = "exceeded the " + fmt("%.0f", criterion.budget_seconds) + "s budget (" +
                     fmt("%.1f", seconds) + "s): " + detail;
        }
        if (!ok) {
            ++failures;
        }
        std::printf("[%s] criterion %-34s (%6.1fs)  %s\n", ok ? "PASS" : "FAIL", criterion.name,
                    seconds, detail.c_str());
        std::fflush(stdout);
    }

    if (failures == 0) {
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
    } else {
        std::printf("acceptance: %d of %zu criteria FAILED\n", failures, criteria.size());
    }
    return failures;
}
