#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/decode.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace vocabtrim {

// Draft cost model: c is the draft/target cost ratio, gamma the number
// of sequential draft passes per block (tree depth unless overridden).
struct LatencyModel {
    double c = 0.0;
    std::int32_t gamma = 1;
};

// tokens emitted per target verification pass; at most gamma + 1
inline double block_efficiency(const DecodeStats & stats) {
    if (stats.blocks < 1) {
        throw zero_blocks_error("block efficiency needs at least one block");
    }
    return static_cast<double>(stats.produced) / static_cast<double>(stats.blocks);
}

inline double relative_latency(std::int64_t draft_params, std::int64_t target_params) {
    if (target_params <= 0) {
        throw zero_target_error("relative latency needs target params > 0");
    }
    return static_cast<double>(draft_params) / static_cast<double>(target_params);
}

// memory-bound speed-up: tau / (c*gamma + 1)
inline double mbsu(double tau, double c, std::int32_t gamma) {
    if (tau < 1.0) {
        throw data_error("block efficiency below 1 fed to mbsu");
    }
    if (c < 0.0) {
        throw data_error("negative relative latency fed to mbsu");
    }
    if (gamma < 1) {
        throw config_error("mbsu gamma must be >= 1");
    }
    return tau / (c * static_cast<double>(gamma) + 1.0);
}

struct BenchRow {
    std::string task;
    std::int32_t k = 0;                  // kept vocabulary size
    std::int64_t head_params = 0;        // draft LM-head size, 0 if headless
    double block_eff = 0.0;
    double mbsu_value = 0.0;
    std::int64_t produced = 0;
    std::int32_t blocks = 0;
    std::uint64_t seed = 0;
    std::string source;                  // calibration source, or "baseline"

    // retained for audit/recomputation; not serialized to CSV
    std::vector<std::int32_t> accepted_per_block;
    double rel_latency = 0.0;
    std::int32_t gamma = 0;
    bool gamma_overridden = false;
    bool latency_overridden = false;
};

struct BenchReport {
    std::vector<BenchRow> rows;

    void add(BenchRow row) {
        const double upper = static_cast<double>(row.gamma) + 1.0;
        require_internal(row.block_eff >= 1.0 && row.block_eff <= upper + 1e-12,
                         "block efficiency " + std::to_string(row.block_eff) + " outside [1, gamma+1]");
        rows.push_back(std::move(row));
    }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
}

} // namespace detail

inline std::string report_csv(const BenchReport & report) {
    std::string out = "task,K,head_params,BE,MBSU,produced,blocks,seed,source\n";
    for (const auto & row : report.rows) {
        out += row.task + ",";
        out += std::to_string(row.k) + ",";
        out += std::to_string(row.head_params) + ",";
        out += detail::format_double(row.block_eff) + ",";
        out += detail::format_double(row.mbsu_value) + ",";
        out += std::to_string(row.produced) + ",";
        out += std::to_string(row.blocks) + ",";
        out += std::to_string(row.seed) + ",";
        out += row.source + "\n";
    }
    return out;
}

inline void save_report_csv(const BenchReport & report, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open report file for writing: " + path.string());
    }
    out << report_csv(report);
    if (!out) {
        throw data_error("failed writing report file: " + path.string());
    }
}

// aligned table for stdout, with the gamma/latency provenance noted
inline std::string report_table(const BenchReport & report) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %8s %12s %8s %8s %9s %7s %-10s\n",
                  "task", "K", "head_params", "BE", "MBSU", "produced", "blocks", "source");
    out += line;
    for (const auto & row : report.rows) {
        std::snprintf(line, sizeof(line), "%-24s %8d %12lld %8.4f %8.4f %9lld %7d %-10s\n",
                      row.task.c_str(), row.k, static_cast<long long>(row.head_params),
                      row.block_eff, row.mbsu_value, static_cast<long long>(row.produced),
                      row.blocks, row.source.c_str());
        out += line;
    }
    if (!report.rows.empty()) {
        const auto & r = report.rows.front();
        std::snprintf(line, sizeof(line), "gamma=%d (%s), c per row from %s\n",
                      r.gamma, r.gamma_overridden ? "override" : "tree depth",
                      r.latency_overridden ? "--relative-latency override" : "param_count ratio");
        out += line;
    }
    return out;
}

// (K, BE, MBSU) triples for the sweet-spot curve
inline void save_plot_data(const BenchReport & report, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot open plot data file for writing: " + path.string());
    }
    out << "# K\tBE\tMBSU\n";
    for (const auto & row : report.rows) {
        out << row.k << "\t" << detail::format_double(row.block_eff) << "\t"
            << detail::format_double(row.mbsu_value) << "\n";
    }
    if (!out) {
        throw data_error("failed writing plot data file: " + path.string());
    }
}

} // namespace vocabtrim
