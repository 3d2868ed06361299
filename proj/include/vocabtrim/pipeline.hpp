#pragma once

#include "vocabtrim/calibration.hpp"
#include "vocabtrim/common.hpp"
#include "vocabtrim/decode.hpp"
#include "vocabtrim/frequency.hpp"
#include "vocabtrim/linear_head.hpp"
#include "vocabtrim/lm.hpp"
#include "vocabtrim/metrics.hpp"
#include "vocabtrim/model_io.hpp"
#include "vocabtrim/rng.hpp"
#include "vocabtrim/trim.hpp"
#include "vocabtrim/vocab.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vocabtrim {

struct ModelConfig {
    std::string type = "ngram"; // "ngram" | "linear"
    std::int32_t order = 4;
    double alpha = 0.1;
    std::int32_t hidden_dim = 32;
    std::int32_t mix_positions = 1;
    bool fit = true; // linear only: run the bigram least-squares fit
};

struct CalibrationConfig {
    std::string source = "raw"; // raw | target-gen | draft-gen
    std::vector<std::filesystem::path> paths;
    std::int64_t max_new = 128;
    bool count_prompts = false;
};

struct TrimConfig {
    std::string criterion = "topk"; // topk | topp | minfreq
    std::int32_t k = 0;             // 0 -> full vocabulary
    double p = 0.9;
    std::int64_t f = 1;
};

struct OutputConfig {
    std::filesystem::path counter;
    std::filesystem::path selection;
    std::filesystem::path report_csv;
    std::filesystem::path plot;
    std::filesystem::path generations_dir;
    std::filesystem::path models_dir;
};

struct ExperimentConfig {
    std::string task = "task";
    std::vector<std::filesystem::path> corpus;
    std::int32_t vocab_max_size = 8000;
    ModelConfig target;
    ModelConfig draft{.type = "linear"};
    CalibrationConfig calibration;
    TrimConfig trim;
    TreeConfig tree;
    std::filesystem::path eval_prompts;
    std::int64_t max_new = 128;
    std::optional<std::uint64_t> seed; // mandatory, checked by validate()
    std::optional<double> relative_latency_override;
    std::optional<std::int32_t> gamma_override;
    OutputConfig out;
    bool audit_losslessness = true;

    void validate(bool need_eval_prompts = true) const {
        if (!seed.has_value()) {
            throw config_error("config must set a seed");
        }
        if (corpus.empty()) {
            throw config_error("config must list at least one corpus file");
        }
        if (need_eval_prompts && eval_prompts.empty()) {
            throw config_error("config must name an eval_prompts file");
        }
        if (max_new < 1) {
            throw config_error("max_new must be >= 1");
        }
        tree.validate();
    }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json & obj, std::initializer_list<const char *> known,
                                const std::string & where) {
    for (const auto & [key, value] : obj.items()) {
        bool ok = false;
        for (const char * k : known) {
            if (key == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw config_error("unknown config key '" + key + "' in " + where);
        }
    }
}

inline std::vector<std::filesystem::path> path_list(const json & value) {
    std::vector<std::filesystem::path> out;
    if (value.is_string()) {
        out.emplace_back(value.get<std::string>());
        return out;
    }
    for (const auto & item : value) {
        out.emplace_back(item.get<std::string>());
    }
    return out;
}

inline ModelConfig parse_model(const json & obj, const std::string & where) {
    reject_unknown_keys(obj, {"type", "order", "alpha", "hidden_dim", "mix_positions", "fit"}, where);
    ModelConfig cfg;
    cfg.type = obj.value("type", cfg.type);
    if (cfg.type != "ngram" && cfg.type != "linear") {
        throw config_error(where + ".type must be 'ngram' or 'linear'");
    }
    cfg.order = obj.value("order", cfg.order);
    cfg.alpha = obj.value("alpha", cfg.alpha);
    cfg.hidden_dim = obj.value("hidden_dim", cfg.hidden_dim);
    cfg.mix_positions = obj.value("mix_positions", cfg.mix_positions);
    cfg.fit = obj.value("fit", cfg.fit);
    return cfg;
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json & root) {
    using detail::json;
    detail::reject_unknown_keys(root,
                                {"task", "seed", "corpus", "vocab_max_size", "target", "draft", "calibration",
                                 "trim", "tree", "eval_prompts", "max_new", "latency", "out", "audit"},
                                "config");
    ExperimentConfig cfg;
    cfg.task = root.value("task", cfg.task);
    if (root.contains("seed")) {
        cfg.seed = root["seed"].get<std::uint64_t>();
    }
    if (root.contains("corpus")) {
        cfg.corpus = detail::path_list(root["corpus"]);
    }
    cfg.vocab_max_size = root.value("vocab_max_size", cfg.vocab_max_size);
    if (root.contains("target")) {
        cfg.target = detail::parse_model(root["target"], "target");
    }
    if (root.contains("draft")) {
        cfg.draft = detail::parse_model(root["draft"], "draft");
    }
    if (root.contains("calibration")) {
        const auto & c = root["calibration"];
        detail::reject_unknown_keys(c, {"source", "paths", "max_new", "count_prompts"}, "calibration");
        cfg.calibration.source = c.value("source", cfg.calibration.source);
        if (c.contains("paths")) {
            cfg.calibration.paths = detail::path_list(c["paths"]);
        }
        cfg.calibration.max_new = c.value("max_new", cfg.calibration.max_new);
        cfg.calibration.count_prompts = c.value("count_prompts", cfg.calibration.count_prompts);
    }
    if (root.contains("trim")) {
        const auto & t = root["trim"];
        detail::reject_unknown_keys(t, {"criterion", "k", "p", "f"}, "trim");
        cfg.trim.criterion = t.value("criterion", cfg.trim.criterion);
        cfg.trim.k = t.value("k", cfg.trim.k);
        cfg.trim.p = t.value("p", cfg.trim.p);
        cfg.trim.f = t.value("f", cfg.trim.f);
    }
    if (root.contains("tree")) {
        const auto & t = root["tree"];
        detail::reject_unknown_keys(t, {"depth", "node_top_k", "max_tokens"}, "tree");
        cfg.tree.depth = t.value("depth", cfg.tree.depth);
        cfg.tree.node_top_k = t.value("node_top_k", cfg.tree.node_top_k);
        cfg.tree.max_tokens = t.value("max_tokens", cfg.tree.max_tokens);
    }
    if (root.contains("eval_prompts")) {
        cfg.eval_prompts = root["eval_prompts"].get<std::string>();
    }
    cfg.max_new = root.value("max_new", cfg.max_new);
    if (root.contains("latency")) {
        const auto & l = root["latency"];
        detail::reject_unknown_keys(l, {"relative", "gamma"}, "latency");
        if (l.contains("relative") && !l["relative"].is_null()) {
            cfg.relative_latency_override = l["relative"].get<double>();
        }
        if (l.contains("gamma") && !l["gamma"].is_null()) {
            cfg.gamma_override = l["gamma"].get<std::int32_t>();
        }
    }
    if (root.contains("out")) {
        const auto & o = root["out"];
        detail::reject_unknown_keys(o, {"counter", "selection", "report", "plot", "generations_dir", "models_dir"}, "out");
        auto path_or_empty = [&o](const char * key) {
            return o.contains(key) ? std::filesystem::path(o[key].get<std::string>()) : std::filesystem::path();
        };
        cfg.out.counter = path_or_empty("counter");
        cfg.out.selection = path_or_empty("selection");
        cfg.out.report_csv = path_or_empty("report");
        cfg.out.plot = path_or_empty("plot");
        cfg.out.generations_dir = path_or_empty("generations_dir");
        cfg.out.models_dir = path_or_empty("models_dir");
    }
    cfg.audit_losslessness = root.value("audit", cfg.audit_losslessness);
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw file_not_found_error("cannot open config file: " + path.string());
    }
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception & e) {
        throw config_error("config parse error in " + path.string() + ": " + e.what());
    }
    try {
        return parse_config(root);
    } catch (const nlohmann::json::exception & e) {
        throw config_error("config type error in " + path.string() + ": " + e.what());
    }
}

// Builds the shared experiment state once (vocabulary, models,
// calibration counter, eval prompts) so bench and sweep rows reuse it
// with identical seeds.
class Pipeline {
public:
    explicit Pipeline(const ExperimentConfig & cfg, bool need_eval_prompts = true) : cfg_(cfg) {
        cfg_.validate(need_eval_prompts);

        std::vector<std::string> corpus_lines;
        for (const auto & path : cfg_.corpus) {
            auto lines = detail::read_nonblank_lines(path);
            corpus_lines.insert(corpus_lines.end(), lines.begin(), lines.end());
        }
        vocab_ = std::make_unique<Vocabulary>(build_vocab(corpus_lines, cfg_.vocab_max_size));
        for (const auto & line : corpus_lines) {
            train_streams_.push_back(tokenize(line, *vocab_));
        }

        const CounterRng root_rng(*cfg_.seed);
        target_ = make_model(cfg_.target, root_rng.derive("target-model").seed());
        draft_owned_ = make_model(cfg_.draft, root_rng.derive("draft-model").seed());
        draft_linear_ = dynamic_cast<const LinearHeadModel *>(draft_owned_.get());

        counter_ = std::make_unique<FrequencyCounter>(build_counter(cfg_.calibration));

        if (!cfg_.eval_prompts.empty()) {
            for (const auto & prompt : detail::read_nonblank_lines(cfg_.eval_prompts)) {
                auto ctx = detail::prompt_context(prompt, *vocab_);
                if (!ctx.empty()) {
                    eval_prompts_.push_back(std::move(ctx));
                }
            }
        }
        if (need_eval_prompts && eval_prompts_.empty()) {
            throw empty_prompt_set_error("no usable prompts in " + cfg_.eval_prompts.string());
        }

        if (!cfg_.out.models_dir.empty()) {
            std::filesystem::create_directories(cfg_.out.models_dir);
            save_any(cfg_.target, *target_, cfg_.out.models_dir / "target.vtlm");
            save_any(cfg_.draft, *draft_owned_, cfg_.out.models_dir / "draft.vtlm");
        }
    }

    const Vocabulary & vocab() const { return *vocab_; }
    const LanguageModel & target() const { return *target_; }
    const LanguageModel & draft() const { return *draft_owned_; }
    const LinearHeadModel * draft_linear() const { return draft_linear_; }
    const FrequencyCounter & counter() const { return *counter_; }
    const ExperimentConfig & config() const { return cfg_; }

    FrequencyCounter build_counter(const CalibrationConfig & calibration) const {
        CalibrationOptions options;
        options.count_prompts = calibration.count_prompts;
        options.seed = *cfg_.seed;
        const auto streams = produce_calibration_streams(make_source(calibration), *target_, *draft_owned_,
                                                         *vocab_, options);
        return count_token_frequencies(streams, vocab_->size());
    }

    TrimSelection select(const FrequencyCounter & counter, const TrimConfig & trim) const {
        return select_trim(counter, make_criterion(trim), vocab_->special());
    }

    TrimCriterion make_criterion(const TrimConfig & trim) const {
        if (trim.criterion == "topk") {
            const auto k = trim.k == 0 ? vocab_->size() : trim.k;
            return TopK{k};
        }
        if (trim.criterion == "topp") {
            return TopP{trim.p};
        }
        if (trim.criterion == "minfreq") {
            return MinFreq{trim.f};
        }
        throw config_error("trim.criterion must be topk, topp or minfreq, got '" + trim.criterion + "'");
    }

    CalibrationSource make_source(const CalibrationConfig & calibration) const {
        auto paths = calibration.paths;
        if (calibration.source == "raw") {
            if (paths.empty()) {
                paths = cfg_.corpus; // raw calibration defaults to the training corpus
            }
            return RawSource{std::move(paths)};
        }
        if (paths.empty()) {
            throw config_error("calibration source '" + calibration.source + "' needs prompt paths");
        }
        if (calibration.source == "target-gen") {
            return TargetGeneratedSource{std::move(paths), calibration.max_new};
        }
        if (calibration.source == "draft-gen") {
            return DraftGeneratedSource{std::move(paths), calibration.max_new};
        }
        throw config_error("calibration.source must be raw, target-gen or draft-gen, got '" + calibration.source + "'");
    }

    // Decode the eval prompt set with the draft restricted to the given
    // selection, audit losslessness against the cached greedy decode,
    // and assemble one report row.
    BenchRow decode_row(const TrimSelection & selection, const std::string & source_name) {
        std::optional<TrimmedHeadModel> trimmed;
        if (draft_linear_ != nullptr) {
            trimmed.emplace(trim_head(*draft_linear_, selection));
        } else {
            trimmed.emplace(trim_gather(*draft_owned_, selection));
        }

        BenchRow row;
        row.task = cfg_.task;
        row.k = selection.kept_size();
        row.head_params = trimmed->head_param_count();
        row.seed = *cfg_.seed;
        row.source = source_name;
        row.gamma = cfg_.gamma_override.value_or(cfg_.tree.depth);
        row.gamma_overridden = cfg_.gamma_override.has_value();
        row.latency_overridden = cfg_.relative_latency_override.has_value();
        row.rel_latency = cfg_.relative_latency_override.value_or(
            relative_latency(trimmed->param_count(), target_->param_count()));

        std::vector<std::string> generation_lines;
        for (std::size_t p = 0; p < eval_prompts_.size(); ++p) {
            const auto & prompt = eval_prompts_[p];
            auto result = spd_generate(*target_, *trimmed, prompt, cfg_.max_new, cfg_.tree, vocab_->eos_id());
            if (cfg_.audit_losslessness) {
                require_internal(result.output == greedy_reference(p),
                                 "speculative output diverged from target greedy decode");
            }
            row.produced += result.stats.produced;
            row.blocks += result.stats.blocks;
            row.accepted_per_block.insert(row.accepted_per_block.end(),
                                          result.stats.accepted_per_block.begin(),
                                          result.stats.accepted_per_block.end());
            generation_lines.push_back(detokenize(result.output, *vocab_));
        }

        DecodeStats aggregate;
        aggregate.blocks = row.blocks;
        aggregate.produced = row.produced;
        row.block_eff = block_efficiency(aggregate);
        row.mbsu_value = mbsu(row.block_eff, row.rel_latency, row.gamma);

        if (!cfg_.out.generations_dir.empty()) {
            std::filesystem::create_directories(cfg_.out.generations_dir);
            const auto name = cfg_.task + "_" + row.source + "_K" + std::to_string(row.k) + ".txt";
            std::ofstream out(cfg_.out.generations_dir / name, std::ios::binary);
            for (const auto & line : generation_lines) {
                out << line << "\n";
            }
        }
        return row;
    }

private:
    std::unique_ptr<LanguageModel> make_model(const ModelConfig & spec, std::uint64_t seed) const {
        if (spec.type == "ngram") {
            return std::make_unique<NGramModel>(train_ngram(train_streams_, spec.order, spec.alpha, vocab_->size()));
        }
        auto model = std::make_unique<LinearHeadModel>(
            LinearHeadModel::random(vocab_->size(), spec.hidden_dim, spec.mix_positions, seed));
        if (spec.fit) {
            model->fit_bigram(train_streams_, spec.alpha);
        }
        return model;
    }

    static void save_any(const ModelConfig & spec, const LanguageModel & model, const std::filesystem::path & path) {
        if (spec.type == "ngram") {
            save_model(dynamic_cast<const NGramModel &>(model), path);
        } else {
            save_model(dynamic_cast<const LinearHeadModel &>(model), path);
        }
    }

    const std::vector<TokenId> & greedy_reference(std::size_t prompt_index) {
        if (greedy_cache_.size() != eval_prompts_.size()) {
            greedy_cache_.resize(eval_prompts_.size());
        }
        auto & cached = greedy_cache_[prompt_index];
        if (cached.empty()) {
            cached = greedy_generate(*target_, eval_prompts_[prompt_index], cfg_.max_new, vocab_->eos_id());
        }
        return cached;
    }

    ExperimentConfig cfg_;
    std::unique_ptr<Vocabulary> vocab_;
    std::vector<std::vector<TokenId>> train_streams_;
    std::unique_ptr<LanguageModel> target_;
    std::unique_ptr<LanguageModel> draft_owned_;
    const LinearHeadModel * draft_linear_ = nullptr;
    std::unique_ptr<FrequencyCounter> counter_;
    std::vector<std::vector<TokenId>> eval_prompts_;
    std::vector<std::vector<TokenId>> greedy_cache_;
};

namespace detail {

inline void maybe_save_counter(const FrequencyCounter & counter, const std::filesystem::path & path) {
    if (!path.empty()) {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        save_counter(counter, path);
    }
}

inline void maybe_save_selection(const TrimSelection & selection, const std::filesystem::path & path) {
    if (!path.empty()) {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        save_selection(selection, path);
    }
}

inline std::filesystem::path with_suffix(const std::filesystem::path & path, const std::string & suffix) {
    if (path.empty()) {
        return path;
    }
    auto stem = path.stem().string() + suffix;
    auto out = path;
    out.replace_filename(stem + path.extension().string());
    return out;
}

inline void finish_report(const BenchReport & report, const ExperimentConfig & cfg) {
    if (!cfg.out.report_csv.empty()) {
        if (cfg.out.report_csv.has_parent_path()) {
            std::filesystem::create_directories(cfg.out.report_csv.parent_path());
        }
        save_report_csv(report, cfg.out.report_csv);
    }
    if (!cfg.out.plot.empty()) {
        if (cfg.out.plot.has_parent_path()) {
            std::filesystem::create_directories(cfg.out.plot.parent_path());
        }
        save_plot_data(report, cfg.out.plot);
    }
}

} // namespace detail

// count -> select -> map -> trim -> decode, with a full-vocabulary
// baseline row ahead of the trimmed row
inline BenchReport run_pipeline(const ExperimentConfig & cfg) {
    Pipeline pipeline(cfg);
    detail::maybe_save_counter(pipeline.counter(), cfg.out.counter);

    const auto selection = pipeline.select(pipeline.counter(), cfg.trim);
    detail::maybe_save_selection(selection, cfg.out.selection);

    BenchReport report;
    report.add(pipeline.decode_row(TrimSelection::identity(pipeline.vocab().size(),
                                                           counter_digest(pipeline.counter())),
                                   "baseline"));
    report.add(pipeline.decode_row(selection, calibration_source_name(pipeline.make_source(cfg.calibration))));
    detail::finish_report(report, cfg);
    return report;
}

// side-by-side rows for the three calibration sources over one K
inline BenchReport run_bench_all_sources(const ExperimentConfig & cfg) {
    Pipeline pipeline(cfg);

    BenchReport report;
    report.add(pipeline.decode_row(TrimSelection::identity(pipeline.vocab().size(),
                                                           counter_digest(pipeline.counter())),
                                   "baseline"));
    const char * sources[] = {"raw", "target-gen", "draft-gen"};
    for (const char * source : sources) {
        CalibrationConfig calibration = cfg.calibration;
        calibration.source = source;
        if (source != std::string("raw") && calibration.paths.empty()) {
            throw config_error("bench over generated sources needs calibration prompt paths");
        }
        const auto counter = pipeline.build_counter(calibration);
        detail::maybe_save_counter(counter, detail::with_suffix(cfg.out.counter, std::string("_") + source));
        const auto selection = pipeline.select(counter, cfg.trim);
        detail::maybe_save_selection(selection, detail::with_suffix(cfg.out.selection, std::string("_") + source));
        report.add(pipeline.decode_row(selection, source));
    }
    detail::finish_report(report, cfg);
    return report;
}

// one row per K over a shared counter; fractions in (0,1] scale V,
// values > 1 are absolute kept sizes
inline BenchReport run_sweep(const ExperimentConfig & cfg, const std::vector<double> & k_grid) {
    if (k_grid.empty()) {
        throw config_error("sweep needs a non-empty K grid");
    }
    Pipeline pipeline(cfg);
    detail::maybe_save_counter(pipeline.counter(), cfg.out.counter);

    std::vector<std::int32_t> ks;
    for (double value : k_grid) {
        if (!(value > 0.0)) {
            throw config_error("sweep K values must be positive");
        }
        const auto v = pipeline.vocab().size();
        std::int32_t k = value <= 1.0 ? static_cast<std::int32_t>(value * v + 0.5)
                                      : static_cast<std::int32_t>(value + 0.5);
        k = std::min(std::max(k, static_cast<std::int32_t>(pipeline.vocab().special().size())), v);
        ks.push_back(k);
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    const auto source_name = calibration_source_name(pipeline.make_source(cfg.calibration));
    BenchReport report;
    for (std::int32_t k : ks) {
        TrimConfig trim;
        trim.criterion = "topk";
        trim.k = k;
        const auto selection = pipeline.select(pipeline.counter(), trim);
        detail::maybe_save_selection(selection, detail::with_suffix(cfg.out.selection, "_K" + std::to_string(k)));
        report.add(pipeline.decode_row(selection, source_name));
    }
    detail::finish_report(report, cfg);
    return report;
}

struct SingleGeneration {
    std::string text;
    DecodeStats stats;
    double block_eff = 0.0;
    std::int32_t k = 0;
};

// decode one prompt with the trimmed draft (losslessness still audited)
inline SingleGeneration run_generate(const ExperimentConfig & cfg, const std::string & prompt) {
    Pipeline pipeline(cfg, /*need_eval_prompts=*/false);
    const auto selection = pipeline.select(pipeline.counter(), cfg.trim);
    detail::maybe_save_counter(pipeline.counter(), cfg.out.counter);
    detail::maybe_save_selection(selection, cfg.out.selection);

    auto context = tokenize(prompt, pipeline.vocab());
    context.pop_back(); // condition on the prompt text, not its terminator
    if (context.empty()) {
        throw empty_prefix_error("prompt tokenizes to nothing");
    }

    std::optional<TrimmedHeadModel> trimmed;
    if (pipeline.draft_linear() != nullptr) {
        trimmed.emplace(trim_head(*pipeline.draft_linear(), selection));
    } else {
        trimmed.emplace(trim_gather(pipeline.draft(), selection));
    }
    auto result = spd_generate(pipeline.target(), *trimmed, context, cfg.max_new, cfg.tree,
                               pipeline.vocab().eos_id());
    if (cfg.audit_losslessness) {
        const auto greedy = greedy_generate(pipeline.target(), context, cfg.max_new, pipeline.vocab().eos_id());
        require_internal(result.output == greedy, "speculative output diverged from target greedy decode");
    }

    SingleGeneration out;
    out.text = detokenize(result.output, pipeline.vocab());
    out.stats = std::move(result.stats);
    DecodeStats aggregate;
    aggregate.blocks = out.stats.blocks;
    aggregate.produced = out.stats.produced;
    out.block_eff = block_efficiency(aggregate);
    out.k = selection.kept_size();
    return out;
}

} // namespace vocabtrim
