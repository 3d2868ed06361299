#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vocabtrim {

using TokenId = std::int32_t;

// Error taxonomy. The CLI maps categories to exit codes:
// config_error -> 2, data_error -> 3, internal_error -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct config_error : error {
    using error::error;
};

struct data_error : error {
    using error::error;
};

struct internal_error : error {
    using error::error;
};

struct empty_corpus_error final : data_error {
    using data_error::data_error;
};

struct id_out_of_range_error final : data_error {
    using data_error::data_error;
};

struct length_mismatch_error final : data_error {
    using data_error::data_error;
};

struct k_too_small_error final : config_error {
    using config_error::config_error;
};

struct empty_result_error final : data_error {
    using data_error::data_error;
};

struct empty_prefix_error final : data_error {
    using data_error::data_error;
};

struct zero_blocks_error final : data_error {
    using data_error::data_error;
};

struct zero_target_error final : data_error {
    using data_error::data_error;
};

struct file_not_found_error final : data_error {
    using data_error::data_error;
};

struct empty_prompt_set_error final : data_error {
    using data_error::data_error;
};

inline void require_internal(bool cond, const std::string & what) {
    if (!cond) {
        throw internal_error("internal invariant violated: " + what);
    }
}

} // namespace vocabtrim
