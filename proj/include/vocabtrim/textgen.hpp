#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace vocabtrim {

// Seeded synthetic-text generator for benchmark corpora. The language
// is log-bilinear of small latent rank: every word carries a context
// factor and an output loading, next-word logits are their coupling
// plus a Zipf frequency bias. That keeps the word histogram heavy-
// tailed while the modal successor varies with the context word across
// mid-rank vocabulary, which is the regime where trimming a drafter's
// vocabulary trades acceptance against head size.
struct TextGenConfig {
    std::uint64_t seed = 42;
    std::int32_t n_words = 12000;
    std::int32_t latent_dim = 10;    // rank of the successor structure
    double coupling = 4.0;           // bilinear scale: successor sharpness / mode spread
    double zipf_bias = 0.8;          // frequency prior exponent
    double fallback = 0.08;          // mixture weight of the rank-free Zipf draw
    std::int32_t top_successors = 64; // truncated per-word successor support
    std::int32_t min_line_words = 8;
    std::int32_t max_line_words = 26;
    std::size_t target_bytes = std::size_t(1) << 20;

    void validate() const {
        if (n_words < 2 || latent_dim < 1 || top_successors < 1) {
            throw config_error("textgen needs n_words >= 2, latent_dim >= 1, top_successors >= 1");
        }
        if (min_line_words < 1 || max_line_words < min_line_words) {
            throw config_error("textgen line word bounds are inconsistent");
        }
        if (!(coupling >= 0.0) || !(zipf_bias >= 0.0) || fallback < 0.0 || fallback > 1.0) {
            throw config_error("textgen distribution parameters out of range");
        }
    }
};

namespace textgen_detail {

inline std::vector<std::string> make_word_list(std::int32_t n_words) {
    static constexpr const char * consonants = "bcdfghjklmnprstvwz";
    static constexpr const char * vowels = "aeiouy";
    const std::int32_t nc = 18;
    const std::int32_t nv = 6;
    const std::int32_t syllables = nc * nv;
    std::vector<std::string> syl;
    syl.reserve(static_cast<std::size_t>(syllables));
    for (std::int32_t c = 0; c < nc; ++c) {
        for (std::int32_t v = 0; v < nv; ++v) {
            syl.push_back(std::string() + consonants[c] + vowels[v]);
        }
    }
    const std::int64_t two = static_cast<std::int64_t>(syllables) * syllables;
    if (static_cast<std::int64_t>(n_words) > two + two * syllables) {
        throw config_error("textgen word budget exceeds the syllable combinations");
    }
    std::vector<std::string> words;
    words.reserve(static_cast<std::size_t>(n_words));
    for (std::int32_t i = 0; i < n_words; ++i) {
        if (i < two) {
            words.push_back(syl[static_cast<std::size_t>(i / syllables)] + syl[static_cast<std::size_t>(i % syllables)]);
        } else {
            const auto j = static_cast<std::int64_t>(i) - two;
            words.push_back(syl[static_cast<std::size_t>(j / two)] +
                            syl[static_cast<std::size_t>((j / syllables) % syllables)] +
                            syl[static_cast<std::size_t>(j % syllables)]);
        }
    }
    return words;
}

class BilinearLanguage {
public:
    explicit BilinearLanguage(const TextGenConfig & cfg) : cfg_(cfg) {
        cfg.validate();
        words_ = make_word_list(cfg.n_words);
        const auto n = static_cast<std::size_t>(cfg.n_words);
        const auto r = static_cast<std::size_t>(cfg.latent_dim);

        auto fill = [](CounterRng rng, std::size_t count) {
            std::vector<double> out(count);
            for (double & x : out) {
                x = rng.uniform(-1.0, 1.0);
            }
            return out;
        };
        const CounterRng base(cfg.seed);
        context_factor_ = fill(base.derive("context-factor"), n * r);
        output_loading_ = fill(base.derive("output-loading"), n * r);

        bias_.resize(n);
        for (std::size_t b = 0; b < n; ++b) {
            bias_[b] = -cfg.zipf_bias * std::log(static_cast<double>(b + 1));
        }

        // rank-free Zipf fallback, also the line-start distribution
        fallback_cum_.resize(n);
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            acc += std::exp(bias_[b]);
            fallback_cum_[b] = acc;
        }

        build_successor_tables();
    }

    std::int32_t sample_start(CounterRng & rng) const {
        return sample_cum(fallback_cum_, rng);
    }

    std::int32_t sample_next(std::int32_t word, CounterRng & rng) const {
        if (rng.uniform() < cfg_.fallback) {
            return sample_cum(fallback_cum_, rng);
        }
        const auto t = static_cast<std::size_t>(cfg_.top_successors);
        const auto * ids = &succ_ids_[static_cast<std::size_t>(word) * t];
        const auto * cum = &succ_cum_[static_cast<std::size_t>(word) * t];
        const double u = rng.uniform() * cum[t - 1];
        const auto it = std::lower_bound(cum, cum + t, u);
        return ids[std::min<std::size_t>(static_cast<std::size_t>(it - cum), t - 1)];
    }

    std::string make_line(std::int32_t n_tokens, CounterRng & rng) const {
        std::int32_t word = sample_start(rng);
        std::string line = words_[static_cast<std::size_t>(word)];
        for (std::int32_t i = 1; i < n_tokens; ++i) {
            word = sample_next(word, rng);
            line.push_back(' ');
            line += words_[static_cast<std::size_t>(word)];
        }
        return line;
    }

    const TextGenConfig & config() const { return cfg_; }

private:
    static std::int32_t sample_cum(const std::vector<double> & cum, CounterRng & rng) {
        const double u = rng.uniform() * cum.back();
        const auto it = std::lower_bound(cum.begin(), cum.end(), u);
        return static_cast<std::int32_t>(std::min<std::size_t>(
            static_cast<std::size_t>(it - cum.begin()), cum.size() - 1));
    }

    void build_successor_tables() {
        const auto n = static_cast<std::size_t>(cfg_.n_words);
        const auto r = static_cast<std::size_t>(cfg_.latent_dim);
        const auto t = static_cast<std::size_t>(std::min<std::int32_t>(cfg_.top_successors, cfg_.n_words));
        succ_ids_.resize(n * static_cast<std::size_t>(cfg_.top_successors));
        succ_cum_.resize(n * static_cast<std::size_t>(cfg_.top_successors));

        std::vector<double> logits(n);
        std::vector<std::int32_t> order(n);
        for (std::size_t a = 0; a < n; ++a) {
            const auto * z = &context_factor_[a * r];
            for (std::size_t b = 0; b < n; ++b) {
                const auto * u = &output_loading_[b * r];
                double dot = 0.0;
                for (std::size_t j = 0; j < r; ++j) {
                    dot += u[j] * z[j];
                }
                logits[b] = cfg_.coupling * dot / std::sqrt(static_cast<double>(r)) + bias_[b];
            }
            std::iota(order.begin(), order.end(), 0);
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t), order.end(),
                              [&logits](std::int32_t x, std::int32_t y) {
                                  return logits[static_cast<std::size_t>(x)] != logits[static_cast<std::size_t>(y)]
                                             ? logits[static_cast<std::size_t>(x)] > logits[static_cast<std::size_t>(y)]
                                             : x < y;
                              });
            const double top = logits[static_cast<std::size_t>(order[0])];
            double acc = 0.0;
            auto * ids = &succ_ids_[a * static_cast<std::size_t>(cfg_.top_successors)];
            auto * cum = &succ_cum_[a * static_cast<std::size_t>(cfg_.top_successors)];
            for (std::size_t i = 0; i < static_cast<std::size_t>(cfg_.top_successors); ++i) {
                const auto b = order[std::min(i, t - 1)];
                ids[i] = b;
                if (i < t) {
                    acc += std::exp(logits[static_cast<std::size_t>(b)] - top);
                }
                cum[i] = acc;
            }
        }
    }

    TextGenConfig cfg_;
    std::vector<std::string> words_;
    std::vector<double> context_factor_; // n x r
    std::vector<double> output_loading_; // n x r
    std::vector<double> bias_;
    std::vector<double> fallback_cum_;
    std::vector<std::int32_t> succ_ids_; // n x top_successors
    std::vector<double> succ_cum_;       // n x top_successors
};

} // namespace textgen_detail

inline std::vector<std::string> generate_corpus_lines(const TextGenConfig & cfg) {
    textgen_detail::BilinearLanguage lang(cfg);
    auto rng = CounterRng(cfg.seed).derive("corpus");
    std::vector<std::string> lines;
    std::size_t bytes = 0;
    while (bytes < cfg.target_bytes) {
        const auto span = static_cast<std::uint64_t>(cfg.max_line_words - cfg.min_line_words + 1);
        const auto n = cfg.min_line_words + static_cast<std::int32_t>(rng.below(span));
        auto line = lang.make_line(n, rng);
        bytes += line.size() + 1;
        lines.push_back(std::move(line));
    }
    return lines;
}

// held-out prompt lines from an independent stream of the same language
inline std::vector<std::string> generate_prompt_lines(const TextGenConfig & cfg, std::int32_t count,
                                                      std::int32_t words_per_prompt) {
    if (count < 1 || words_per_prompt < 1) {
        throw config_error("prompt generation needs positive count and length");
    }
    textgen_detail::BilinearLanguage lang(cfg);
    auto rng = CounterRng(cfg.seed).derive("prompts");
    std::vector<std::string> lines;
    lines.reserve(static_cast<std::size_t>(count));
    for (std::int32_t i = 0; i < count; ++i) {
        lines.push_back(lang.make_line(words_per_prompt, rng));
    }
    return lines;
}

} // namespace vocabtrim
