#pragma once

#include <cstdint>
#include <string_view>

namespace vocabtrim {

// Counter-based deterministic generator (splitmix64 finalizer over
// seed + counter). No global state; every consumer derives its own
// stream from the single experiment seed via derive().
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * ++counter_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform double in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // uniform integer in [0, n), n > 0
    std::uint64_t below(std::uint64_t n) {
        return next_u64() % n;
    }

    // Independent substream labelled by tag (FNV-1a over seed bytes + tag).
    CounterRng derive(std::string_view tag) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](unsigned char b) {
            h ^= b;
            h *= 0x100000001b3ULL;
        };
        for (int i = 0; i < 8; ++i) {
            mix(static_cast<unsigned char>(seed_ >> (8 * i)));
        }
        for (char c : tag) {
            mix(static_cast<unsigned char>(c));
        }
        return CounterRng(h);
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

} // namespace vocabtrim
