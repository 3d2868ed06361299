#pragma once

#include "vocabtrim/common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace vocabtrim {

// Per-token occurrence counts over a calibration corpus.
class FrequencyCounter {
public:
    explicit FrequencyCounter(std::int32_t vocab_size)
        : counts_(static_cast<std::size_t>(vocab_size), 0) {
        if (vocab_size <= 0) {
            throw config_error("counter vocab size must be positive");
        }
    }

    void add(TokenId id, std::int64_t n = 1) {
        if (id < 0 || static_cast<std::size_t>(id) >= counts_.size()) {
            throw id_out_of_range_error("token id " + std::to_string(id) + " outside counter of size " + std::to_string(counts_.size()));
        }
        counts_[static_cast<std::size_t>(id)] += n;
        total_ += n;
    }

    std::int32_t size() const { return static_cast<std::int32_t>(counts_.size()); }
    std::int64_t total() const { return total_; }

    std::int64_t count(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= counts_.size()) {
            throw id_out_of_range_error("token id " + std::to_string(id) + " outside counter of size " + std::to_string(counts_.size()));
        }
        return counts_[static_cast<std::size_t>(id)];
    }

    std::span<const std::int64_t> counts() const { return counts_; }

    bool operator==(const FrequencyCounter &) const = default;

private:
    std::vector<std::int64_t> counts_;
    std::int64_t total_ = 0;
};

inline FrequencyCounter count_token_frequencies(const std::vector<std::vector<TokenId>> & streams, std::int32_t vocab_size) {
    FrequencyCounter counter(vocab_size);
    for (const auto & stream : streams) {
        for (TokenId id : stream) {
            counter.add(id);
        }
    }
    return counter;
}

// Elementwise sum; counting shards merge associatively and commutatively.
inline FrequencyCounter merge_counters(const FrequencyCounter & a, const FrequencyCounter & b) {
    if (a.size() != b.size()) {
        throw length_mismatch_error("cannot merge counters of sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    FrequencyCounter out(a.size());
    for (std::int32_t i = 0; i < a.size(); ++i) {
        const auto sum = a.counts()[static_cast<std::size_t>(i)] + b.counts()[static_cast<std::size_t>(i)];
        if (sum != 0) {
            out.add(i, sum);
        }
    }
    return out;
}

// FNV-1a over the canonical (V, total, nonzero entries) encoding, used
// to detect stale counter/selection pairs.
inline std::uint64_t counter_digest(const FrequencyCounter & counter) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix64 = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= static_cast<unsigned char>(v >> (8 * i));
            h *= 0x100000001b3ULL;
        }
    };
    mix64(static_cast<std::uint64_t>(counter.size()));
    mix64(static_cast<std::uint64_t>(counter.total()));
    for (std::int32_t i = 0; i < counter.size(); ++i) {
        const auto c = counter.counts()[static_cast<std::size_t>(i)];
        if (c != 0) {
            mix64(static_cast<std::uint64_t>(i));
            mix64(static_cast<std::uint64_t>(c));
        }
    }
    return h;
}

inline std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return std::string(buf);
}

// Counter file: `vocabtrim-counter v1 V=<int> total=<int>` header, then
// one `<id>\t<count>` line per nonzero entry, ascending id, LF endings.
inline void save_counter(const FrequencyCounter & counter, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open counter file for writing: " + path.string());
    }
    out << "vocabtrim-counter v1 V=" << counter.size() << " total=" << counter.total() << "\n";
    for (std::int32_t i = 0; i < counter.size(); ++i) {
        const auto c = counter.counts()[static_cast<std::size_t>(i)];
        if (c != 0) {
            out << i << "\t" << c << "\n";
        }
    }
    if (!out) {
        throw data_error("failed writing counter file: " + path.string());
    }
}

inline FrequencyCounter load_counter(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw file_not_found_error("cannot open counter file: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error("counter file is empty: " + path.string());
    }
    long long v = 0;
    long long total = 0;
    if (std::sscanf(line.c_str(), "vocabtrim-counter v1 V=%lld total=%lld", &v, &total) != 2) {
        throw data_error("bad counter header in " + path.string() + ": " + line);
    }
    FrequencyCounter counter(static_cast<std::int32_t>(v));
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        long long id = 0;
        long long c = 0;
        if (std::sscanf(line.c_str(), "%lld\t%lld", &id, &c) != 2) {
            throw data_error("bad counter entry in " + path.string() + ": " + line);
        }
        counter.add(static_cast<TokenId>(id), c);
    }
    if (counter.total() != total) {
        throw data_error("counter total mismatch in " + path.string() + ": header says " + std::to_string(total) + ", entries sum to " + std::to_string(counter.total()));
    }
    return counter;
}

} // namespace vocabtrim
