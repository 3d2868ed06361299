#pragma once

#include "vocabtrim/common.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vocabtrim {

// Dense token table. Real tokens occupy ids [0, V-2); the reserved
// UNK and EOS tokens sit at the end and are always special.
class Vocabulary {
public:
    static constexpr const char * k_unk_token = "<unk>";
    static constexpr const char * k_eos_token = "<eos>";

    // real_tokens must be distinct and must not collide with the
    // reserved token strings; ids follow the given order.
    explicit Vocabulary(std::vector<std::string> real_tokens) {
        tokens_ = std::move(real_tokens);
        tokens_.push_back(k_unk_token);
        tokens_.push_back(k_eos_token);
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            auto [it, inserted] = id_of_.emplace(tokens_[i], static_cast<TokenId>(i));
            if (!inserted) {
                throw internal_error("duplicate token string in vocabulary: " + tokens_[i]);
            }
        }
        unk_ = static_cast<TokenId>(tokens_.size() - 2);
        eos_ = static_cast<TokenId>(tokens_.size() - 1);
        special_ = {unk_, eos_};
    }

    std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }

    const std::string & token(TokenId id) const {
        if (id < 0 || id >= size()) {
            throw id_out_of_range_error("token id " + std::to_string(id) + " outside [0, " + std::to_string(size()) + ")");
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    // UNK for strings not in the table
    TokenId id_of(std::string_view tok) const {
        auto it = id_of_.find(std::string(tok));
        return it == id_of_.end() ? unk_ : it->second;
    }

    bool contains(std::string_view tok) const {
        return id_of_.find(std::string(tok)) != id_of_.end();
    }

    TokenId unk_id() const { return unk_; }
    TokenId eos_id() const { return eos_; }

    const std::set<TokenId> & special() const { return special_; }

    const std::vector<std::string> & tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> id_of_;
    std::set<TokenId> special_;
    TokenId unk_ = 0;
    TokenId eos_ = 0;
};

namespace detail {

inline std::vector<std::string> split_lower(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

} // namespace detail

// Whitespace-delimited, lowercased tokenization with UNK fallback.
// Always appends EOS, so even "" yields [eos].
inline std::vector<TokenId> tokenize(std::string_view text, const Vocabulary & vocab) {
    std::vector<TokenId> ids;
    for (const auto & tok : detail::split_lower(text)) {
        ids.push_back(vocab.id_of(tok));
    }
    ids.push_back(vocab.eos_id());
    return ids;
}

// Keep the max_size-2 most frequent surface tokens (frequency desc,
// then lexicographic asc) and reserve two slots for UNK/EOS.
inline Vocabulary build_vocab(const std::vector<std::string> & corpus, std::int32_t max_size) {
    if (max_size < 3) {
        throw config_error("vocabulary max_size must be >= 3, got " + std::to_string(max_size));
    }
    std::map<std::string, std::int64_t> freq;
    for (const auto & doc : corpus) {
        for (auto & tok : detail::split_lower(doc)) {
            if (tok == Vocabulary::k_unk_token || tok == Vocabulary::k_eos_token) {
                continue; // reserved surface forms map to the specials via id_of
            }
            ++freq[tok];
        }
    }
    if (freq.empty()) {
        throw empty_corpus_error("no tokens observed while building vocabulary");
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto & a, const auto & b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    const auto keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(max_size - 2));
    std::vector<std::string> real;
    real.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        real.push_back(ranked[i].first);
    }
    return Vocabulary(std::move(real));
}

// Render ids back to text (audit output).
inline std::string detokenize(std::span<const TokenId> ids, const Vocabulary & vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += vocab.token(ids[i]);
    }
    return out;
}

} // namespace vocabtrim
