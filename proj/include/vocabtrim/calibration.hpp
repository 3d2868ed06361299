#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/decode.hpp"
#include "vocabtrim/lm.hpp"
#include "vocabtrim/vocab.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace vocabtrim {

// The three calibration corpora compared by the benchmark: plain text,
// target-model completions, and draft-model completions.
struct RawSource {
    std::vector<std::filesystem::path> paths;
};

struct TargetGeneratedSource {
    std::vector<std::filesystem::path> prompt_paths;
    std::int64_t max_new = 128;
};

struct DraftGeneratedSource {
    std::vector<std::filesystem::path> prompt_paths;
    std::int64_t max_new = 128;
};

using CalibrationSource = std::variant<RawSource, TargetGeneratedSource, DraftGeneratedSource>;

struct CalibrationOptions {
    // Generated sources normally emit only the completion tokens; the
    // --count-prompts flag folds the prompt tokens in as well.
    bool count_prompts = false;
    // Reserved for sampled generation; greedy decoding never reads it,
    // which is what makes the streams reproducible.
    std::uint64_t seed = 0;
};

inline std::string calibration_source_name(const CalibrationSource & source) {
    if (std::holds_alternative<RawSource>(source)) {
        return "raw";
    }
    if (std::holds_alternative<TargetGeneratedSource>(source)) {
        return "target-gen";
    }
    return "draft-gen";
}

namespace detail {

inline std::vector<std::string> read_nonblank_lines(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw file_not_found_error("cannot open text file: " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") != std::string::npos) {
            lines.push_back(line);
        }
    }
    return lines;
}

// tokenized prompt without the trailing EOS; generation conditions on
// the prompt text, not on a terminator
inline std::vector<TokenId> prompt_context(const std::string & prompt, const Vocabulary & vocab) {
    auto ids = tokenize(prompt, vocab);
    ids.pop_back();
    return ids;
}

inline std::vector<std::vector<TokenId>> generated_streams(const LanguageModel & model,
                                                           const std::vector<std::filesystem::path> & prompt_paths,
                                                           std::int64_t max_new, const Vocabulary & vocab,
                                                           const CalibrationOptions & options) {
    if (max_new < 1) {
        throw config_error("calibration max_new must be >= 1");
    }
    std::vector<std::vector<TokenId>> streams;
    std::size_t prompts = 0;
    for (const auto & path : prompt_paths) {
        for (const auto & prompt : read_nonblank_lines(path)) {
            auto context = prompt_context(prompt, vocab);
            if (context.empty()) {
                continue;
            }
            ++prompts;
            auto completion = greedy_generate(model, context, max_new, vocab.eos_id());
            if (options.count_prompts) {
                context.insert(context.end(), completion.begin(), completion.end());
                streams.push_back(std::move(context));
            } else {
                streams.push_back(std::move(completion));
            }
        }
    }
    if (prompts == 0) {
        throw empty_prompt_set_error("no usable prompts in the calibration prompt files");
    }
    return streams;
}

} // namespace detail

// Raw -> tokenized file lines. Generated variants -> greedy completions
// (stopping at EOS, which is included when generated) with prompt
// tokens excluded unless options say otherwise. Greedy generation makes
// the streams reproducible for a fixed (model, prompts, seed).
inline std::vector<std::vector<TokenId>> produce_calibration_streams(const CalibrationSource & source,
                                                                     const LanguageModel &     target,
                                                                     const LanguageModel &     draft,
                                                                     const Vocabulary &        vocab,
                                                                     const CalibrationOptions & options = {}) {
    if (const auto * raw = std::get_if<RawSource>(&source)) {
        std::vector<std::vector<TokenId>> streams;
        for (const auto & path : raw->paths) {
            for (const auto & line : detail::read_nonblank_lines(path)) {
                streams.push_back(tokenize(line, vocab));
            }
        }
        if (streams.empty()) {
            throw empty_corpus_error("raw calibration files contain no text");
        }
        return streams;
    }
    if (const auto * gen = std::get_if<TargetGeneratedSource>(&source)) {
        return detail::generated_streams(target, gen->prompt_paths, gen->max_new, vocab, options);
    }
    const auto & gen = std::get<DraftGeneratedSource>(source);
    return detail::generated_streams(draft, gen.prompt_paths, gen.max_new, vocab, options);
}

} // namespace vocabtrim
