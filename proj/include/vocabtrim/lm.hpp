#pragma once

#include "vocabtrim/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

namespace vocabtrim {

// Deterministic next-token scorer. next_logits is a pure function of
// the context and always returns V entries.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual std::vector<double> next_logits(std::span<const TokenId> context) const = 0;
    virtual std::int64_t param_count() const = 0;
    virtual std::int32_t vocab_size() const = 0;
};

// argmax with ties broken by the smaller token id; the shared tie rule
// that makes greedy verification exactly reproducible
inline TokenId greedy_token(std::span<const double> logits) {
    require_internal(!logits.empty(), "argmax over empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

inline TokenId greedy_token(const LanguageModel & model, std::span<const TokenId> context) {
    const auto logits = model.next_logits(context);
    return greedy_token(logits);
}

// max-subtracted for stability
inline std::vector<double> log_softmax(std::span<const double> logits) {
    require_internal(!logits.empty(), "log_softmax over empty logits");
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double x : logits) {
        sum += std::exp(x - max_logit);
    }
    const double log_z = max_logit + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] - log_z;
    }
    return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    auto out = log_softmax(logits);
    for (double & x : out) {
        x = std::exp(x);
    }
    return out;
}

namespace detail {

inline void check_context_ids(std::span<const TokenId> context, std::int32_t vocab_size) {
    for (TokenId id : context) {
        if (id < 0 || id >= vocab_size) {
            throw id_out_of_range_error("context id " + std::to_string(id) + " outside [0, " + std::to_string(vocab_size) + ")");
        }
    }
}

// context hash keyed on (length, tokens); length in the prefix keeps
// different orders from colliding
inline std::uint64_t context_hash(std::span<const TokenId> context) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            h ^= static_cast<unsigned char>(v >> (8 * i));
            h *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<std::uint32_t>(context.size()));
    for (TokenId id : context) {
        mix(static_cast<std::uint32_t>(id));
    }
    return h;
}

} // namespace detail

// Add-alpha n-gram with backoff: scoring uses the longest context
// suffix (up to order-1 tokens) whose count bucket holds at least
// min_context_total observations; the empty context is always present
// after training and serves as the last resort. The threshold keeps
// once-seen long contexts from turning greedy decoding into verbatim
// corpus replay.
class NGramModel final : public LanguageModel {
public:
    struct ContextCounts {
        std::int64_t total = 0;
        std::map<TokenId, std::int64_t> by_token;
    };

    NGramModel(std::int32_t order, double alpha, std::int32_t vocab_size, std::int64_t min_context_total = 1)
        : order_(order), alpha_(alpha), vocab_size_(vocab_size), min_context_total_(min_context_total) {
        if (order < 1) {
            throw config_error("n-gram order must be >= 1, got " + std::to_string(order));
        }
        if (!(alpha > 0.0)) {
            throw config_error("n-gram smoothing alpha must be > 0");
        }
        if (vocab_size <= 0) {
            throw config_error("n-gram vocab size must be positive");
        }
        if (min_context_total < 1) {
            throw config_error("n-gram min_context_total must be >= 1");
        }
    }

    std::int32_t order() const { return order_; }
    double alpha() const { return alpha_; }
    std::int64_t min_context_total() const { return min_context_total_; }
    std::int32_t vocab_size() const override { return vocab_size_; }

    void observe(std::span<const TokenId> stream) {
        detail::check_context_ids(stream, vocab_size_);
        const auto n = static_cast<std::int64_t>(stream.size());
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int32_t max_len = std::min<std::int64_t>(order_ - 1, i);
            for (std::int32_t len = 0; len <= max_len; ++len) {
                const auto ctx = stream.subspan(static_cast<std::size_t>(i - len), static_cast<std::size_t>(len));
                auto & bucket = tables_[detail::context_hash(ctx)];
                ++bucket.total;
                ++bucket.by_token[stream[static_cast<std::size_t>(i)]];
            }
        }
        tokens_seen_ += n;
    }

    std::vector<double> next_logits(std::span<const TokenId> context) const override {
        detail::check_context_ids(context, vocab_size_);
        const ContextCounts * bucket = nullptr;
        const std::int32_t max_len = std::min<std::int32_t>(order_ - 1, static_cast<std::int32_t>(context.size()));
        for (std::int32_t len = max_len; len >= 0 && bucket == nullptr; --len) {
            const auto suffix = context.subspan(context.size() - static_cast<std::size_t>(len));
            const auto it = tables_.find(detail::context_hash(suffix));
            if (it != tables_.end() && (it->second.total >= min_context_total_ || len == 0)) {
                bucket = &it->second;
            }
        }
        require_internal(bucket != nullptr, "n-gram model scored before training");

        const double denom = static_cast<double>(bucket->total) + alpha_ * static_cast<double>(vocab_size_);
        const double floor = std::log(alpha_ / denom);
        std::vector<double> logits(static_cast<std::size_t>(vocab_size_), floor);
        for (const auto & [token, count] : bucket->by_token) {
            logits[static_cast<std::size_t>(token)] = std::log((static_cast<double>(count) + alpha_) / denom);
        }
        return logits;
    }

    // number of stored (context, token) entries
    std::int64_t param_count() const override {
        std::int64_t entries = 0;
        for (const auto & [hash, bucket] : tables_) {
            entries += static_cast<std::int64_t>(bucket.by_token.size());
        }
        return entries;
    }

    std::int64_t tokens_seen() const { return tokens_seen_; }

    const std::unordered_map<std::uint64_t, ContextCounts> & tables() const { return tables_; }

    // used by the model file loader
    void restore_entry(std::uint64_t context_hash, TokenId token, std::int64_t count) {
        auto & bucket = tables_[context_hash];
        bucket.total += count;
        bucket.by_token[token] += count;
    }

private:
    std::int32_t order_;
    double alpha_;
    std::int32_t vocab_size_;
    std::int64_t min_context_total_;
    std::int64_t tokens_seen_ = 0;
    std::unordered_map<std::uint64_t, ContextCounts> tables_;
};

inline NGramModel train_ngram(const std::vector<std::vector<TokenId>> & corpus,
                              std::int32_t order, double alpha, std::int32_t vocab_size,
                              std::int64_t min_context_total = 1) {
    NGramModel model(order, alpha, vocab_size, min_context_total);
    for (const auto & stream : corpus) {
        model.observe(stream);
    }
    if (model.tokens_seen() == 0) {
        throw empty_corpus_error("n-gram training corpus contains no tokens");
    }
    return model;
}

} // namespace vocabtrim
