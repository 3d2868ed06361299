#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/linear_head.hpp"
#include "vocabtrim/lm.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <tuple>
#include <vector>

namespace vocabtrim {

// Model container: magic `VTLM1`, a type tag, dimensions, then either
// row-major little-endian f64 matrices (linear head) or sorted
// (context-hash, token, count) triples (n-gram).
namespace model_io {

inline constexpr char k_magic[5] = {'V', 'T', 'L', 'M', '1'};
inline constexpr std::uint8_t k_tag_linear = 1;
inline constexpr std::uint8_t k_tag_ngram = 2;

namespace detail {

inline void put_u8(std::ostream & out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void put_u64(std::ostream & out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>(v >> (8 * i));
    }
    out.write(buf, 8);
}

inline void put_i32(std::ostream & out, std::int32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<char>(static_cast<std::uint32_t>(v) >> (8 * i));
    }
    out.write(buf, 4);
}

inline void put_f64(std::ostream & out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint8_t get_u8(std::istream & in) {
    const int c = in.get();
    if (c < 0) {
        throw data_error("truncated model file");
    }
    return static_cast<std::uint8_t>(c);
}

inline std::uint64_t get_u64(std::istream & in) {
    char buf[8];
    if (!in.read(buf, 8)) {
        throw data_error("truncated model file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    }
    return v;
}

inline std::int32_t get_i32(std::istream & in) {
    char buf[4];
    if (!in.read(buf, 4)) {
        throw data_error("truncated model file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    }
    return static_cast<std::int32_t>(v);
}

inline double get_f64(std::istream & in) {
    return std::bit_cast<double>(get_u64(in));
}

inline void put_magic(std::ostream & out) {
    out.write(k_magic, sizeof(k_magic));
}

inline void check_magic(std::istream & in, const std::filesystem::path & path) {
    char buf[5];
    if (!in.read(buf, 5) || std::memcmp(buf, k_magic, 5) != 0) {
        throw data_error("not a model file (bad magic): " + path.string());
    }
}

} // namespace detail

} // namespace model_io

inline void save_model(const LinearHeadModel & model, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open model file for writing: " + path.string());
    }
    using namespace model_io::detail;
    model_io::detail::put_magic(out);
    put_u8(out, model_io::k_tag_linear);
    put_i32(out, model.vocab_size());
    put_i32(out, model.hidden_dim());
    put_i32(out, model.mix_positions());
    put_u64(out, model.seed());
    for (double x : model.embed()) {
        put_f64(out, x);
    }
    for (double x : model.mix()) {
        put_f64(out, x);
    }
    for (double x : model.head()) {
        put_f64(out, x);
    }
    if (!out) {
        throw data_error("failed writing model file: " + path.string());
    }
}

inline void save_model(const NGramModel & model, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open model file for writing: " + path.string());
    }
    using namespace model_io::detail;
    model_io::detail::put_magic(out);
    put_u8(out, model_io::k_tag_ngram);
    put_i32(out, model.order());
    put_f64(out, model.alpha());
    put_i32(out, model.vocab_size());
    put_u64(out, static_cast<std::uint64_t>(model.min_context_total()));

    std::vector<std::tuple<std::uint64_t, TokenId, std::int64_t>> triples;
    for (const auto & [hash, bucket] : model.tables()) {
        for (const auto & [token, count] : bucket.by_token) {
            triples.emplace_back(hash, token, count);
        }
    }
    std::sort(triples.begin(), triples.end());
    put_u64(out, triples.size());
    for (const auto & [hash, token, count] : triples) {
        put_u64(out, hash);
        put_i32(out, token);
        put_u64(out, static_cast<std::uint64_t>(count));
    }
    if (!out) {
        throw data_error("failed writing model file: " + path.string());
    }
}

inline LinearHeadModel load_linear_head(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw file_not_found_error("cannot open model file: " + path.string());
    }
    using namespace model_io::detail;
    model_io::detail::check_magic(in, path);
    if (get_u8(in) != model_io::k_tag_linear) {
        throw data_error("model file does not hold a linear head model: " + path.string());
    }
    const auto v = get_i32(in);
    const auto d = get_i32(in);
    const auto m = get_i32(in);
    const auto seed = get_u64(in);
    auto read_matrix = [&in](std::int64_t n) {
        std::vector<double> out(static_cast<std::size_t>(n));
        for (double & x : out) {
            x = get_f64(in);
        }
        return out;
    };
    auto embed = read_matrix(static_cast<std::int64_t>(v) * d);
    auto mix = read_matrix(static_cast<std::int64_t>(m) * d);
    auto head = read_matrix(static_cast<std::int64_t>(v) * d);
    return LinearHeadModel(v, d, m, std::move(embed), std::move(mix), std::move(head), seed);
}

inline NGramModel load_ngram(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw file_not_found_error("cannot open model file: " + path.string());
    }
    using namespace model_io::detail;
    model_io::detail::check_magic(in, path);
    if (get_u8(in) != model_io::k_tag_ngram) {
        throw data_error("model file does not hold an n-gram model: " + path.string());
    }
    const auto order = get_i32(in);
    const auto alpha = get_f64(in);
    const auto v = get_i32(in);
    NGramModel model(order, alpha, v);
    const auto n = get_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto hash = get_u64(in);
        const auto token = get_i32(in);
        const auto count = static_cast<std::int64_t>(get_u64(in));
        model.restore_entry(hash, token, count);
    }
    return model;
}

inline std::unique_ptr<LanguageModel> load_model(const std::filesystem::path & path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) {
        throw file_not_found_error("cannot open model file: " + path.string());
    }
    model_io::detail::check_magic(probe, path);
    const auto tag = model_io::detail::get_u8(probe);
    probe.close();
    if (tag == model_io::k_tag_linear) {
        return std::make_unique<LinearHeadModel>(load_linear_head(path));
    }
    if (tag == model_io::k_tag_ngram) {
        return std::make_unique<NGramModel>(load_ngram(path));
    }
    throw data_error("unknown model type tag in " + path.string());
}

} // namespace vocabtrim
