#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "alsim/acquisition.hpp"
#include "alsim/al_loop.hpp"
#include "alsim/errors.hpp"
#include "alsim/text.hpp"

namespace alsim {

// ---------------------------------------------------------------------------
// Report files. Per-record: strategy,trial,stage,labeled_count,test_mse.
// Aggregated: strategy,stage,labeled_count,mean_mse,std_mse.

constexpr const char* kTrialsHeader = "strategy,trial,stage,labeled_count,test_mse";
constexpr const char* kSummaryHeader = "strategy,stage,labeled_count,mean_mse,std_mse";

inline std::string trial_row_line(strategy s, int trial, const stage_record& rec) {
    return to_string(s) + "," + std::to_string(trial) + "," + std::to_string(rec.stage) + "," +
           std::to_string(rec.labeled_count) + "," + fmt_double(rec.test_mse);
}

inline void write_trials_csv(const report& rep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot open '" + path + "' for writing");
    out << kTrialsHeader << "\n";
    for (const auto& r : rep.rows) {
        out << trial_row_line(r.strat, r.trial, r.rec) << "\n";
    }
}

inline void write_summary_csv(const report& rep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot open '" + path + "' for writing");
    out << kSummaryHeader << "\n";
    for (const auto& s : rep.summary) {
        out << to_string(s.strat) << ',' << s.stage << ',' << s.labeled_count << ','
            << fmt_double(s.mean_mse) << ',' << fmt_double(s.std_mse) << "\n";
    }
}

inline std::vector<report_row> read_trial_rows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open report file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line) != kTrialsHeader) {
        throw parse_error(path + " line 1: expected header '" + std::string(kTrialsHeader) + "'");
    }
    std::vector<report_row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != 5) {
            throw parse_error(path + " line " + std::to_string(line_no) + ": expected 5 columns");
        }
        report_row r;
        try {
            r.strat = parse_strategy(cells[0]);
        } catch (const validation_error& e) {
            throw parse_error(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        r.trial = static_cast<int>(parse_int(cells[1], line_no));
        r.rec.stage = static_cast<int>(parse_int(cells[2], line_no));
        r.rec.labeled_count = static_cast<std::size_t>(parse_int(cells[3], line_no));
        r.rec.test_mse = parse_double(cells[4], line_no);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Pool-predictions file for standalone selection. Dataset-style conventions:
// header "dim=<int>", then one row per sample:
//   <role L|P>,<global index>,<dim mean values>,<dim epistemic sd values>
// L rows are the labeled centers, P rows the candidates.

inline void write_pool_predictions(const pool_predictions& labeled, const pool_predictions& pool,
                                   const std::string& path) {
    if (labeled.dim != pool.dim && labeled.size() > 0 && pool.size() > 0) {
        throw shape_error("write_pool_predictions: width mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot open '" + path + "' for writing");
    const std::size_t dim = pool.size() > 0 ? pool.dim : labeled.dim;
    out << "dim=" << dim << "\n";
    auto dump = [&](const pool_predictions& p, char role) {
        for (std::size_t r = 0; r < p.size(); ++r) {
            out << role << ',' << p.indices[r];
            for (double v : p.mean_row(r)) out << ',' << fmt_double(v);
            for (double v : p.sd_row(r)) out << ',' << fmt_double(v);
            out << "\n";
        }
    };
    dump(labeled, 'L');
    dump(pool, 'P');
}

// Returns {labeled, pool}.
inline std::pair<pool_predictions, pool_predictions> read_pool_predictions(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open predictions file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw parse_error("line 1: empty predictions file");
    const auto header = trim(line);
    if (!header.starts_with("dim=")) {
        throw parse_error("line 1: expected header 'dim=<int>', got '" + std::string(header) +
                          "'");
    }
    const long long dim = parse_int(header.substr(4), 1);
    if (dim < 1) throw parse_error("line 1: dim must be >= 1");

    pool_predictions labeled, pool;
    labeled.dim = pool.dim = static_cast<std::size_t>(dim);
    const std::size_t ncols = 2 + 2 * static_cast<std::size_t>(dim);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != ncols) {
            throw parse_error("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(ncols) + " columns, got " +
                              std::to_string(cells.size()));
        }
        pool_predictions* dst = nullptr;
        if (cells[0] == "L") dst = &labeled;
        else if (cells[0] == "P") dst = &pool;
        else {
            throw parse_error("line " + std::to_string(line_no) +
                              ": role must be L or P, got '" + std::string(cells[0]) + "'");
        }
        const long long idx = parse_int(cells[1], line_no);
        if (idx < 0) throw parse_error("line " + std::to_string(line_no) + ": negative index");
        dst->indices.push_back(static_cast<std::size_t>(idx));
        for (std::size_t c = 0; c < static_cast<std::size_t>(dim); ++c) {
            dst->means.push_back(parse_double(cells[2 + c], line_no));
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(dim); ++c) {
            dst->epistemic_sd.push_back(parse_double(cells[2 + dim + c], line_no));
        }
    }
    labeled.validate();
    pool.validate();
    return {std::move(labeled), std::move(pool)};
}

inline void write_chosen_indices(const selection_result& sel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot open '" + path + "' for writing");
    for (std::size_t idx : sel.chosen) out << idx << "\n";
}

} // namespace alsim
