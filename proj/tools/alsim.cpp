// Command-line front end: run experiments, run selectors standalone,
// generate datasets, re-aggregate reports.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alsim/alsim.hpp"

namespace fs = std::filesystem;

namespace {

std::string raw_file_name(alsim::strategy s, int trial) {
    return to_string(s) + "_trial" + std::to_string(trial) + ".csv";
}

int cmd_run(const std::string& config_path) {
    alsim::experiment_config cfg = alsim::parse_config(config_path);
    alsim::apply_env_overrides(cfg);

    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir / "raw");
    {
        std::ofstream echo(out_dir / "config_resolved.cfg", std::ios::binary);
        if (!echo) throw alsim::parse_error("cannot write resolved config to " + cfg.output_dir);
        echo << alsim::emit_config(cfg);
    }

    // Per-unit partial files, headers first so interrupted runs stay readable.
    for (alsim::strategy s : cfg.strategies) {
        for (int t = 0; t < cfg.trials; ++t) {
            std::ofstream f(out_dir / "raw" / raw_file_name(s, t), std::ios::binary);
            f << alsim::kTrialsHeader << "\n";
        }
    }

    std::mutex log_mu;
    auto sink = [&](alsim::strategy s, int trial, const alsim::stage_record& rec) {
        std::ofstream f(out_dir / "raw" / raw_file_name(s, trial),
                        std::ios::binary | std::ios::app);
        f << alsim::trial_row_line(s, trial, rec) << "\n";
        std::lock_guard<std::mutex> lock(log_mu);
        std::printf("%-11s trial %d stage %2d  labeled %5zu  test_mse %.6g  (%.1fs)\n",
                    to_string(s).c_str(), trial, rec.stage, rec.labeled_count, rec.test_mse,
                    rec.wall_time);
        std::fflush(stdout);
    };

    const alsim::report rep = alsim::run_experiment(cfg, nullptr, sink);
    alsim::write_trials_csv(rep, (out_dir / "trials.csv").string());
    alsim::write_summary_csv(rep, (out_dir / "summary.csv").string());
    std::printf("wrote %s and %s\n", (out_dir / "trials.csv").c_str(),
                (out_dir / "summary.csv").c_str());
    return 0;
}

int cmd_select(const std::string& preds_path, const std::string& strategy_name,
               std::size_t budget, double eta, std::uint64_t seed,
               const std::string& out_path, const std::string& scoring_name) {
    const alsim::strategy strat = alsim::parse_strategy(strategy_name);
    auto [labeled, pool] = alsim::read_pool_predictions(preds_path);

    alsim::selection_result sel;
    switch (strat) {
        case alsim::strategy::random: {
            alsim::rng g(seed);
            sel = alsim::select_random(pool.indices, budget, g);
            break;
        }
        case alsim::strategy::uncertainty:
            sel = alsim::select_uncertainty(pool, budget);
            break;
        case alsim::strategy::coreset:
            sel = alsim::select_coreset(labeled, pool, budget);
            break;
        case alsim::strategy::cke: {
            const alsim::cke_scoring scoring = scoring_name == "min_upper"
                                                   ? alsim::cke_scoring::upper_min
                                                   : alsim::cke_scoring::upper_at_lower_nearest;
            sel = alsim::select_cke(labeled, pool, budget, eta, scoring);
            break;
        }
    }

    if (out_path.empty()) {
        for (std::size_t idx : sel.chosen) std::printf("%zu\n", idx);
    } else {
        alsim::write_chosen_indices(sel, out_path);
    }
    return 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path, long long seed) {
    alsim::experiment_config cfg = alsim::parse_config(spec_path);
    const std::uint64_t data_seed = seed >= 0
                                        ? static_cast<std::uint64_t>(seed)
                                        : alsim::derive_seed(cfg.master_seed, alsim::salt::data);
    const alsim::synthetic_data gen = alsim::generate_synthetic(cfg.synth, data_seed);
    alsim::save_dataset(gen.data, out_path);
    std::printf("wrote %zu samples (D=%d, K=%d) to %s\n", gen.data.size(),
                gen.data.feature_dim(), gen.data.joints(), out_path.c_str());
    return 0;
}

int cmd_report(const std::string& in_dir) {
    const fs::path raw = fs::path(in_dir) / "raw";
    if (!fs::is_directory(raw)) {
        throw alsim::parse_error("no raw/ directory under '" + in_dir + "'");
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(raw)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
    }
    if (files.empty()) throw alsim::parse_error("no per-trial csv files under '" + raw.string() + "'");
    std::sort(files.begin(), files.end());

    alsim::report rep;
    for (const auto& f : files) {
        const auto rows = alsim::read_trial_rows(f);
        rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    }
    std::sort(rep.rows.begin(), rep.rows.end(), [](const auto& a, const auto& b) {
        if (a.strat != b.strat) return static_cast<int>(a.strat) < static_cast<int>(b.strat);
        if (a.trial != b.trial) return a.trial < b.trial;
        return a.rec.stage < b.rec.stage;
    });
    rep.summary = alsim::aggregate_rows(rep.rows);

    const fs::path dir(in_dir);
    alsim::write_trials_csv(rep, (dir / "trials.csv").string());
    alsim::write_summary_csv(rep, (dir / "summary.csv").string());
    std::printf("aggregated %zu trial files into %s and %s\n", files.size(),
                (dir / "trials.csv").c_str(), (dir / "summary.csv").c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pool-based active-learning simulator for uncertainty-aware regression"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "config file")->required();

    std::string preds_path, strategy_name = "coreset", out_path, scoring_name = "lower_nearest";
    std::size_t budget = 1;
    double eta = 0.3;
    std::uint64_t sel_seed = 0;
    auto* select = app.add_subcommand("select", "run a selector over a pool-predictions file");
    select->add_option("preds", preds_path, "pool-predictions file")->required();
    select->add_option("--strategy", strategy_name, "random|uncertainty|coreset|cke");
    select->add_option("--budget", budget, "number of picks")->required();
    select->add_option("--eta", eta, "epistemic influence weight (cke)");
    select->add_option("--seed", sel_seed, "seed for the random strategy");
    select->add_option("--out", out_path, "output file; stdout when omitted");
    select->add_option("--cke-scoring", scoring_name, "lower_nearest|min_upper");

    std::string spec_path, data_out;
    long long gen_seed = -1;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
    gen->add_option("spec", spec_path, "config file holding the data.* section")->required();
    gen->add_option("--out", data_out, "output dataset path")->required();
    gen->add_option("--seed", gen_seed, "generation seed; defaults to the config seed");

    std::string report_dir;
    auto* rep = app.add_subcommand("report", "re-aggregate per-trial files into mean/std curves");
    rep->add_option("--in", report_dir, "experiment output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (select->parsed()) {
            return cmd_select(preds_path, strategy_name, budget, eta, sel_seed, out_path,
                              scoring_name);
        }
        if (gen->parsed()) return cmd_gen_data(spec_path, data_out, gen_seed);
        if (rep->parsed()) return cmd_report(report_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
