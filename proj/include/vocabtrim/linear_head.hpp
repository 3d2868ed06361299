#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/lm.hpp"
#include "vocabtrim/rng.hpp"
#include "vocabtrim/trim.hpp"

#include <cmath>
#include <map>
#include <span>
#include <vector>

namespace vocabtrim {

namespace detail {

// One shared dot-product routine: the trimmed head must reproduce full
// logits bit-exactly, so both paths run the identical accumulation.
inline double row_dot(const double * row, const double * h, std::int32_t d) {
    double acc = 0.0;
    for (std::int32_t j = 0; j < d; ++j) {
        acc += row[j] * h[j];
    }
    return acc;
}

// Cholesky solve of (G + lambda*I) x = b for the head fit; G is d x d.
class CholeskySolver {
public:
    CholeskySolver(std::vector<double> g, std::int32_t d) : l_(std::move(g)), d_(d) {
        double trace = 0.0;
        for (std::int32_t i = 0; i < d_; ++i) {
            trace += l_[idx(i, i)];
        }
        double lambda = 1e-8 * (trace / static_cast<double>(d_)) + 1e-12;
        for (int attempt = 0; attempt < 8; ++attempt) {
            if (factor(lambda)) {
                return;
            }
            lambda *= 100.0;
        }
        throw internal_error("head fit normal equations are not positive definite");
    }

    void solve(const double * rhs, double * out) const {
        std::vector<double> y(static_cast<std::size_t>(d_));
        for (std::int32_t i = 0; i < d_; ++i) {
            double acc = rhs[i];
            for (std::int32_t j = 0; j < i; ++j) {
                acc -= chol_[idx(i, j)] * y[static_cast<std::size_t>(j)];
            }
            y[static_cast<std::size_t>(i)] = acc / chol_[idx(i, i)];
        }
        for (std::int32_t i = d_ - 1; i >= 0; --i) {
            double acc = y[static_cast<std::size_t>(i)];
            for (std::int32_t j = i + 1; j < d_; ++j) {
                acc -= chol_[idx(j, i)] * out[j];
            }
            out[i] = acc / chol_[idx(i, i)];
        }
    }

private:
    std::size_t idx(std::int32_t r, std::int32_t c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(d_) + static_cast<std::size_t>(c);
    }

    bool factor(double lambda) {
        chol_ = l_;
        for (std::int32_t i = 0; i < d_; ++i) {
            chol_[idx(i, i)] += lambda;
        }
        for (std::int32_t i = 0; i < d_; ++i) {
            for (std::int32_t j = 0; j <= i; ++j) {
                double acc = chol_[idx(i, j)];
                for (std::int32_t k = 0; k < j; ++k) {
                    acc -= chol_[idx(i, k)] * chol_[idx(j, k)];
                }
                if (i == j) {
                    if (acc <= 0.0) {
                        return false;
                    }
                    chol_[idx(i, i)] = std::sqrt(acc);
                } else {
                    chol_[idx(i, j)] = acc / chol_[idx(j, j)];
                }
            }
        }
        return true;
    }

    std::vector<double> l_;
    std::vector<double> chol_;
    std::int32_t d_;
};

} // namespace detail

// Fixed-size model with an explicit V x d LM head, so vocabulary
// trimming is a literal row-selection on W. Hidden state mixes the
// embeddings of the last m context positions with per-dimension
// weights; logits are W . h.
class LinearHeadModel final : public LanguageModel {
public:
    LinearHeadModel(std::int32_t vocab_size, std::int32_t hidden_dim, std::int32_t mix_positions,
                    std::vector<double> embed, std::vector<double> mix, std::vector<double> head,
                    std::uint64_t seed)
        : v_(vocab_size), d_(hidden_dim), m_(mix_positions), seed_(seed),
          embed_(std::move(embed)), mix_(std::move(mix)), head_(std::move(head)) {
        if (v_ <= 0 || d_ <= 0 || m_ <= 0) {
            throw config_error("linear head model dims must be positive");
        }
        require_internal(embed_.size() == dim2(v_, d_), "embedding table shape");
        require_internal(mix_.size() == dim2(m_, d_), "mixing weight shape");
        require_internal(head_.size() == dim2(v_, d_), "LM head shape");
    }

    static LinearHeadModel random(std::int32_t vocab_size, std::int32_t hidden_dim,
                                  std::int32_t mix_positions, std::uint64_t seed) {
        CounterRng base(seed);
        auto fill = [](CounterRng rng, std::size_t n) {
            std::vector<double> out(n);
            for (double & x : out) {
                x = rng.uniform(-1.0, 1.0);
            }
            return out;
        };
        return LinearHeadModel(vocab_size, hidden_dim, mix_positions,
                               fill(base.derive("embed"), dim2(vocab_size, hidden_dim)),
                               fill(base.derive("mix"), dim2(mix_positions, hidden_dim)),
                               fill(base.derive("head"), dim2(vocab_size, hidden_dim)),
                               seed);
    }

    std::int32_t vocab_size() const override { return v_; }
    std::int32_t hidden_dim() const { return d_; }
    std::int32_t mix_positions() const { return m_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<double> hidden(std::span<const TokenId> context) const {
        detail::check_context_ids(context, v_);
        std::vector<double> h(static_cast<std::size_t>(d_), 0.0);
        const auto len = static_cast<std::int32_t>(context.size());
        const std::int32_t positions = std::min(m_, len);
        for (std::int32_t i = 0; i < positions; ++i) {
            const auto * e = &embed_[dim2(context[static_cast<std::size_t>(len - 1 - i)], d_)];
            const auto * w = &mix_[dim2(i, d_)];
            for (std::int32_t j = 0; j < d_; ++j) {
                h[static_cast<std::size_t>(j)] += w[j] * e[j];
            }
        }
        return h;
    }

    std::vector<double> next_logits(std::span<const TokenId> context) const override {
        const auto h = hidden(context);
        std::vector<double> logits(static_cast<std::size_t>(v_));
        for (std::int32_t r = 0; r < v_; ++r) {
            logits[static_cast<std::size_t>(r)] = detail::row_dot(&head_[dim2(r, d_)], h.data(), d_);
        }
        return logits;
    }

    std::int64_t param_count() const override {
        return head_param_count(v_, d_) * 2 + static_cast<std::int64_t>(m_) * d_;
    }

    static std::int64_t head_param_count(std::int64_t vocab_size, std::int64_t hidden_dim) {
        return vocab_size * hidden_dim;
    }

    const double * head_row(TokenId r) const { return &head_[dim2(r, d_)]; }
    std::span<const double> embed() const { return embed_; }
    std::span<const double> mix() const { return mix_; }
    std::span<const double> head() const { return head_; }

    // One-pass corpus fit: embeddings become a seeded random projection
    // of each token's bigram successor profile, then W is solved by
    // context-frequency-weighted ridge least squares against add-alpha
    // bigram log-probabilities. Mixing weights beyond the last position
    // are zeroed so fit-time and decode-time hidden states agree.
    void fit_bigram(const std::vector<std::vector<TokenId>> & corpus, double alpha) {
        if (!(alpha > 0.0)) {
            throw config_error("fit alpha must be > 0");
        }
        std::vector<std::map<TokenId, std::int64_t>> succ(static_cast<std::size_t>(v_));
        std::vector<std::int64_t> ctx_total(static_cast<std::size_t>(v_), 0);
        std::int64_t pairs = 0;
        for (const auto & stream : corpus) {
            detail::check_context_ids(stream, v_);
            for (std::size_t i = 0; i + 1 < stream.size(); ++i) {
                ++succ[static_cast<std::size_t>(stream[i])][stream[i + 1]];
                ++ctx_total[static_cast<std::size_t>(stream[i])];
                ++pairs;
            }
        }
        if (pairs == 0) {
            throw empty_corpus_error("head fit corpus contains no bigrams");
        }

        auto proj_rng = CounterRng(seed_).derive("fit-projection");
        std::vector<double> proj(dim2(v_, d_));
        for (double & x : proj) {
            x = proj_rng.uniform(-1.0, 1.0);
        }
        for (std::int32_t a = 0; a < v_; ++a) {
            if (ctx_total[static_cast<std::size_t>(a)] == 0) {
                continue; // unseen contexts keep their random embedding
            }
            const double inv_total = 1.0 / static_cast<double>(ctx_total[static_cast<std::size_t>(a)]);
            auto * e = &embed_[dim2(a, d_)];
            for (std::int32_t j = 0; j < d_; ++j) {
                e[j] = 0.0;
            }
            for (const auto & [b, c] : succ[static_cast<std::size_t>(a)]) {
                const double p = static_cast<double>(c) * inv_total;
                const auto * pb = &proj[dim2(b, d_)];
                for (std::int32_t j = 0; j < d_; ++j) {
                    e[j] += p * pb[j];
                }
            }
        }
        for (std::int32_t j = 0; j < d_; ++j) {
            mix_[static_cast<std::size_t>(j)] = 1.0;
        }
        for (std::int32_t i = 1; i < m_; ++i) {
            for (std::int32_t j = 0; j < d_; ++j) {
                mix_[dim2(i, d_) + static_cast<std::size_t>(j)] = 0.0;
            }
        }

        // normal equations over the distinct contexts, weighted by
        // bigram frequency; the sparse part of y keeps this O(nnz * d)
        const double log_alpha = std::log(alpha);
        std::vector<double> gram(dim2(d_, d_), 0.0);
        std::vector<double> base_acc(static_cast<std::size_t>(d_), 0.0);
        std::vector<double> rhs(dim2(v_, d_), 0.0); // per-token d-vector
        for (std::int32_t a = 0; a < v_; ++a) {
            const auto w = static_cast<double>(ctx_total[static_cast<std::size_t>(a)]);
            if (w == 0.0) {
                continue;
            }
            const auto * h = &embed_[dim2(a, d_)];
            for (std::int32_t i = 0; i < d_; ++i) {
                for (std::int32_t j = 0; j <= i; ++j) {
                    gram[dim2(i, d_) + static_cast<std::size_t>(j)] += w * h[i] * h[j];
                }
            }
            const double denom = static_cast<double>(ctx_total[static_cast<std::size_t>(a)]) + alpha * static_cast<double>(v_);
            const double base = std::log(alpha / denom);
            for (std::int32_t j = 0; j < d_; ++j) {
                base_acc[static_cast<std::size_t>(j)] += w * base * h[j];
            }
            for (const auto & [b, c] : succ[static_cast<std::size_t>(a)]) {
                const double bump = std::log(static_cast<double>(c) + alpha) - log_alpha;
                auto * row = &rhs[dim2(b, d_)];
                for (std::int32_t j = 0; j < d_; ++j) {
                    row[j] += w * bump * h[j];
                }
            }
        }
        for (std::int32_t i = 0; i < d_; ++i) {
            for (std::int32_t j = i + 1; j < d_; ++j) {
                gram[dim2(i, d_) + static_cast<std::size_t>(j)] = gram[dim2(j, d_) + static_cast<std::size_t>(i)];
            }
        }
        detail::CholeskySolver solver(std::move(gram), d_);
        std::vector<double> column(static_cast<std::size_t>(d_));
        for (std::int32_t b = 0; b < v_; ++b) {
            auto * row = &rhs[dim2(b, d_)];
            for (std::int32_t j = 0; j < d_; ++j) {
                column[static_cast<std::size_t>(j)] = row[j] + base_acc[static_cast<std::size_t>(j)];
            }
            solver.solve(column.data(), &head_[dim2(b, d_)]);
        }
    }

private:
    static std::size_t dim2(std::int64_t rows, std::int64_t cols) {
        return static_cast<std::size_t>(rows * cols);
    }

    std::int32_t v_;
    std::int32_t d_;
    std::int32_t m_;
    std::uint64_t seed_;
    std::vector<double> embed_; // V x d row-major
    std::vector<double> mix_;   // m x d
    std::vector<double> head_;  // V x d row-major
};

// Draft-side view of a base model restricted to the kept vocabulary.
// For a LinearHeadModel base the head rows are physically gathered
// (W_trim = W[kept, :]) and scoring runs on the small matrix; for any
// other base the full logits are gathered through the mapping. Context
// ids stay in target space either way. The base model must outlive
// this view.
class TrimmedHeadModel {
public:
    TrimmedHeadModel(const LinearHeadModel & base, VocabMapping mapping)
        : base_(&base), linear_base_(&base), mapping_(std::move(mapping)) {
        check_mapping();
        const auto d = linear_base_->hidden_dim();
        head_trim_.resize(static_cast<std::size_t>(mapping_.trimmed_size()) * static_cast<std::size_t>(d));
        for (std::int32_t i = 0; i < mapping_.trimmed_size(); ++i) {
            const auto * src = linear_base_->head_row(mapping_.to_target(i));
            std::copy(src, src + d, head_trim_.begin() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d));
        }
    }

    TrimmedHeadModel(const LanguageModel & base, VocabMapping mapping)
        : base_(&base), linear_base_(nullptr), mapping_(std::move(mapping)) {
        check_mapping();
    }

    std::int32_t trimmed_size() const { return mapping_.trimmed_size(); }
    std::int32_t vocab_size() const { return base_->vocab_size(); }
    const VocabMapping & mapping() const { return mapping_; }
    const LanguageModel & base() const { return *base_; }

    // entry i is the base model's logit for token mapping().to_target(i)
    std::vector<double> trimmed_next_logits(std::span<const TokenId> context) const {
        if (linear_base_ != nullptr) {
            const auto h = linear_base_->hidden(context);
            const auto d = linear_base_->hidden_dim();
            std::vector<double> logits(static_cast<std::size_t>(mapping_.trimmed_size()));
            for (std::int32_t i = 0; i < mapping_.trimmed_size(); ++i) {
                logits[static_cast<std::size_t>(i)] =
                    detail::row_dot(&head_trim_[static_cast<std::size_t>(i) * static_cast<std::size_t>(d)], h.data(), d);
            }
            return logits;
        }
        const auto full = base_->next_logits(context);
        std::vector<double> logits(static_cast<std::size_t>(mapping_.trimmed_size()));
        for (std::int32_t i = 0; i < mapping_.trimmed_size(); ++i) {
            logits[static_cast<std::size_t>(i)] = full[static_cast<std::size_t>(mapping_.to_target(i))];
        }
        return logits;
    }

    std::int64_t param_count() const {
        if (linear_base_ != nullptr) {
            const auto dropped = static_cast<std::int64_t>(linear_base_->hidden_dim()) *
                                 (static_cast<std::int64_t>(vocab_size()) - trimmed_size());
            return linear_base_->param_count() - dropped;
        }
        return base_->param_count();
    }

    // size of the draft-side LM head, 0 when the base has no head matrix
    std::int64_t head_param_count() const {
        if (linear_base_ != nullptr) {
            return LinearHeadModel::head_param_count(trimmed_size(), linear_base_->hidden_dim());
        }
        return 0;
    }

    std::span<const double> trimmed_head() const { return head_trim_; }

private:
    void check_mapping() {
        if (mapping_.vocab_size() != base_->vocab_size()) {
            throw id_out_of_range_error("mapping covers vocab of " + std::to_string(mapping_.vocab_size()) + " but model has V=" + std::to_string(base_->vocab_size()));
        }
    }

    const LanguageModel * base_;
    const LinearHeadModel * linear_base_;
    VocabMapping mapping_;
    std::vector<double> head_trim_; // K x d row-major
};

inline TrimmedHeadModel trim_head(const LinearHeadModel & model, const TrimSelection & selection) {
    return TrimmedHeadModel(model, build_mapping(selection, model.vocab_size()));
}

inline TrimmedHeadModel trim_gather(const LanguageModel & model, const TrimSelection & selection) {
    return TrimmedHeadModel(model, build_mapping(selection, model.vocab_size()));
}

inline TrimmedHeadModel identity_trim(const LanguageModel & model) {
    return TrimmedHeadModel(model, identity_mapping(model.vocab_size()));
}

inline std::vector<double> trimmed_next_logits(const TrimmedHeadModel & model, std::span<const TokenId> context) {
    return model.trimmed_next_logits(context);
}

} // namespace vocabtrim
