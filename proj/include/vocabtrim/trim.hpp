#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/frequency.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace vocabtrim {

struct TopK {
    std::int32_t k = 0;
};

struct TopP {
    double p = 0.0; // fraction of total count mass in (0, 1]
};

struct MinFreq {
    std::int64_t f = 1;
};

using TrimCriterion = std::variant<TopK, TopP, MinFreq>;

struct SelectOptions {
    // When true, a TopP/MinFreq selection that keeps nothing beyond the
    // forced specials is rejected with empty_result_error.
    bool require_nonspecial = false;
};

// The chosen token subset, sorted ascending, tied to the counter it
// came from via digest.
class TrimSelection {
public:
    TrimSelection(std::vector<TokenId> kept, std::uint64_t source_digest, std::int32_t vocab_size)
        : kept_(std::move(kept)), digest_(source_digest), vocab_size_(vocab_size) {
        for (std::size_t i = 0; i < kept_.size(); ++i) {
            if (kept_[i] < 0 || kept_[i] >= vocab_size_) {
                throw id_out_of_range_error("kept id " + std::to_string(kept_[i]) + " outside [0, " + std::to_string(vocab_size_) + ")");
            }
            if (i > 0 && kept_[i] <= kept_[i - 1]) {
                throw internal_error("kept ids must be strictly increasing");
            }
        }
    }

    std::int32_t kept_size() const { return static_cast<std::int32_t>(kept_.size()); }
    std::int32_t vocab_size() const { return vocab_size_; }
    std::uint64_t source_digest() const { return digest_; }
    std::span<const TokenId> kept() const { return kept_; }

    bool matches(const FrequencyCounter & counter) const {
        return counter_digest(counter) == digest_;
    }

    static TrimSelection identity(std::int32_t vocab_size, std::uint64_t digest = 0) {
        std::vector<TokenId> all(static_cast<std::size_t>(vocab_size));
        std::iota(all.begin(), all.end(), 0);
        return TrimSelection(std::move(all), digest, vocab_size);
    }

private:
    std::vector<TokenId> kept_;
    std::uint64_t digest_ = 0;
    std::int32_t vocab_size_ = 0;
};

namespace detail {

// ids ordered by count descending, smaller id first on ties
inline std::vector<TokenId> rank_by_count(const FrequencyCounter & counter) {
    std::vector<TokenId> order(static_cast<std::size_t>(counter.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&counter](TokenId a, TokenId b) {
        const auto ca = counter.counts()[static_cast<std::size_t>(a)];
        const auto cb = counter.counts()[static_cast<std::size_t>(b)];
        if (ca != cb) {
            return ca > cb;
        }
        return a < b;
    });
    return order;
}

} // namespace detail

// Top-K keeps the k highest-count ids (ties -> smaller id); specials are
// force-included by displacing the lowest-ranked non-special picks, so
// |kept| == k exactly. Top-P keeps the smallest count-descending prefix
// reaching p*total; MinFreq keeps every id with count >= f; for those two
// the specials are unioned in.
inline TrimSelection select_trim(const FrequencyCounter & counter,
                                 const TrimCriterion &    criterion,
                                 const std::set<TokenId> & special,
                                 const SelectOptions &    options = {}) {
    const std::int32_t v = counter.size();
    for (TokenId s : special) {
        if (s < 0 || s >= v) {
            throw id_out_of_range_error("special id " + std::to_string(s) + " outside [0, " + std::to_string(v) + ")");
        }
    }

    std::vector<TokenId> kept;
    if (const auto * top_k = std::get_if<TopK>(&criterion)) {
        const std::int32_t k = top_k->k;
        if (k < 1 || k > v) {
            throw config_error("TopK k must lie in [1, V], got k=" + std::to_string(k) + " with V=" + std::to_string(v));
        }
        if (k < static_cast<std::int32_t>(special.size())) {
            throw k_too_small_error("TopK k=" + std::to_string(k) + " smaller than the " + std::to_string(special.size()) + " forced special tokens");
        }
        kept.assign(special.begin(), special.end());
        std::int32_t room = k - static_cast<std::int32_t>(special.size());
        for (TokenId id : detail::rank_by_count(counter)) {
            if (room == 0) {
                break;
            }
            if (!special.contains(id)) {
                kept.push_back(id);
                --room;
            }
        }
    } else if (const auto * top_p = std::get_if<TopP>(&criterion)) {
        if (!(top_p->p > 0.0) || top_p->p > 1.0) {
            throw config_error("TopP p must lie in (0, 1], got " + std::to_string(top_p->p));
        }
        if (counter.total() == 0) {
            throw empty_result_error("TopP selection over an empty counter");
        }
        // Counts are integers; absorb the rounding of p*total so exact
        // fraction boundaries (e.g. 9 >= 0.9*10) resolve as intended.
        const double goal = top_p->p * static_cast<double>(counter.total())
                          - 1e-9 * static_cast<double>(counter.total());
        std::int64_t cumulative = 0;
        std::set<TokenId> chosen(special.begin(), special.end());
        std::size_t nonspecial = 0;
        for (TokenId id : detail::rank_by_count(counter)) {
            if (static_cast<double>(cumulative) >= goal) {
                break;
            }
            cumulative += counter.counts()[static_cast<std::size_t>(id)];
            if (chosen.insert(id).second) {
                ++nonspecial;
            }
        }
        if (options.require_nonspecial && nonspecial == 0) {
            throw empty_result_error("TopP selected nothing beyond the special tokens");
        }
        kept.assign(chosen.begin(), chosen.end());
    } else {
        const auto & min_freq = std::get<MinFreq>(criterion);
        if (min_freq.f < 1) {
            throw config_error("MinFreq threshold must be >= 1, got " + std::to_string(min_freq.f));
        }
        if (counter.total() == 0) {
            throw empty_result_error("MinFreq selection over an empty counter");
        }
        std::set<TokenId> chosen(special.begin(), special.end());
        std::size_t nonspecial = 0;
        for (std::int32_t id = 0; id < v; ++id) {
            if (counter.counts()[static_cast<std::size_t>(id)] >= min_freq.f) {
                if (chosen.insert(id).second) {
                    ++nonspecial;
                }
            }
        }
        if (options.require_nonspecial && nonspecial == 0) {
            throw empty_result_error("MinFreq selected nothing beyond the special tokens");
        }
        kept.assign(chosen.begin(), chosen.end());
    }

    std::sort(kept.begin(), kept.end());
    return TrimSelection(std::move(kept), counter_digest(counter), v);
}

// Bidirectional draft-index <-> target-index maps. to_trim holds kAbsent
// exactly on the complement of the kept set.
class VocabMapping {
public:
    static constexpr std::int32_t k_absent = -1;

    VocabMapping(std::vector<TokenId> to_target, std::int32_t vocab_size)
        : to_target_(std::move(to_target)), to_trim_(static_cast<std::size_t>(vocab_size), k_absent) {
        for (std::size_t i = 0; i < to_target_.size(); ++i) {
            const TokenId t = to_target_[i];
            if (t < 0 || t >= vocab_size) {
                throw id_out_of_range_error("mapped id " + std::to_string(t) + " outside [0, " + std::to_string(vocab_size) + ")");
            }
            if (to_trim_[static_cast<std::size_t>(t)] != k_absent) {
                throw internal_error("to_target is not injective");
            }
            to_trim_[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(i);
        }
    }

    std::int32_t trimmed_size() const { return static_cast<std::int32_t>(to_target_.size()); }
    std::int32_t vocab_size() const { return static_cast<std::int32_t>(to_trim_.size()); }

    TokenId to_target(std::int32_t trim_index) const {
        if (trim_index < 0 || static_cast<std::size_t>(trim_index) >= to_target_.size()) {
            throw id_out_of_range_error("trim index " + std::to_string(trim_index) + " outside [0, " + std::to_string(to_target_.size()) + ")");
        }
        return to_target_[static_cast<std::size_t>(trim_index)];
    }

    // kAbsent when the target id was trimmed away
    std::int32_t to_trim(TokenId target_id) const {
        if (target_id < 0 || static_cast<std::size_t>(target_id) >= to_trim_.size()) {
            throw id_out_of_range_error("target id " + std::to_string(target_id) + " outside [0, " + std::to_string(to_trim_.size()) + ")");
        }
        return to_trim_[static_cast<std::size_t>(target_id)];
    }

    bool keeps(TokenId target_id) const { return to_trim(target_id) != k_absent; }

    std::span<const TokenId> targets() const { return to_target_; }

private:
    std::vector<TokenId> to_target_;
    std::vector<std::int32_t> to_trim_;
};

inline VocabMapping build_mapping(const TrimSelection & selection, std::int32_t vocab_size) {
    if (selection.vocab_size() > vocab_size) {
        throw id_out_of_range_error("selection vocab size " + std::to_string(selection.vocab_size()) + " exceeds " + std::to_string(vocab_size));
    }
    return VocabMapping(std::vector<TokenId>(selection.kept().begin(), selection.kept().end()), vocab_size);
}

inline VocabMapping identity_mapping(std::int32_t vocab_size) {
    return build_mapping(TrimSelection::identity(vocab_size), vocab_size);
}

// Selection file: `vocabtrim-select v1 V=<int> K=<int> digest=<hex>`
// header, one kept id per line, ascending, LF endings.
inline void save_selection(const TrimSelection & selection, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open selection file for writing: " + path.string());
    }
    out << "vocabtrim-select v1 V=" << selection.vocab_size()
        << " K=" << selection.kept_size()
        << " digest=" << digest_hex(selection.source_digest()) << "\n";
    for (TokenId id : selection.kept()) {
        out << id << "\n";
    }
    if (!out) {
        throw data_error("failed writing selection file: " + path.string());
    }
}

inline TrimSelection load_selection(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw file_not_found_error("cannot open selection file: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error("selection file is empty: " + path.string());
    }
    long long v = 0;
    long long k = 0;
    char digest_buf[32] = {0};
    if (std::sscanf(line.c_str(), "vocabtrim-select v1 V=%lld K=%lld digest=%31s", &v, &k, digest_buf) != 3) {
        throw data_error("bad selection header in " + path.string() + ": " + line);
    }
    std::vector<TokenId> kept;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        kept.push_back(static_cast<TokenId>(std::stoll(line)));
    }
    if (static_cast<long long>(kept.size()) != k) {
        throw data_error("selection K mismatch in " + path.string() + ": header says " + std::to_string(k) + ", found " + std::to_string(kept.size()));
    }
    const std::uint64_t digest = std::stoull(digest_buf, nullptr, 16);
    return TrimSelection(std::move(kept), digest, static_cast<std::int32_t>(v));
}

} // namespace vocabtrim
