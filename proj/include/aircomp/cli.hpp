// Command-line front end: flag parsing, subcommand dispatch, run manifests.
#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aircomp/config.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/experiments.hpp"
#include "aircomp/oracles.hpp"

namespace aircomp {

inline const char* build_identifier() {
    return "aircomp " __DATE__ " " __TIME__;
}

namespace detail {

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

/// Collects run metadata and guarantees a manifest lands on disk even when
/// the run aborts partway.
class ManifestWriter {
public:
    ManifestWriter(std::string out_dir, std::string subcommand, const ExperimentConfig& cfg)
        : out_dir_(std::move(out_dir)) {
        manifest_["build"] = build_identifier();
        manifest_["subcommand"] = std::move(subcommand);
        manifest_["seed"] = cfg.seed;
        manifest_["config"] = config_to_json(cfg);
        manifest_["started"] = utc_timestamp();
        manifest_["outputs"] = nlohmann::json::array();
        manifest_["status"] = "running";
        flush();
    }

    /// Record a finished output file and re-flush so the list is never stale.
    void add_output(const std::string& path) {
        manifest_["outputs"].push_back(path);
        flush();
    }

    void finish_ok() {
        manifest_["status"] = "ok";
        manifest_["finished"] = utc_timestamp();
        flush();
    }

    void finish_error(const std::string& message) {
        manifest_["status"] = "error";
        manifest_["error"] = message;
        manifest_["finished"] = utc_timestamp();
        flush();
    }

private:
    void flush() const {
        std::ofstream out(out_dir_ + "/manifest.json", std::ios::binary);
        if (out) out << manifest_.dump(2) << '\n';
    }

    std::string out_dir_;
    nlohmann::json manifest_;
};

inline std::string join_path(const std::string& dir, const std::string& name) {
    return dir + "/" + name;
}

inline std::vector<std::string> matrix_long_csv(const std::string& name,
                                                const Eigen::MatrixXd& m) {
    std::vector<std::string> lines;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            lines.push_back(name + "," + std::to_string(r) + "," + std::to_string(c) +
                            "," + fmt_g17(m(r, c)));
        }
    }
    return lines;
}

} // namespace detail

/**
 * @brief Run one subcommand against a validated config.
 *
 * Writes every output CSV under out_dir and maintains manifest.json there
 * throughout the run. Returns 0 on success, 2 when a numerical or
 * convergence failure aborts the run (the manifest records the error).
 * Unknown subcommand names return 1.
 */
inline int dispatch(const std::string& subcommand, const ExperimentConfig& cfg,
                    const std::string& out_dir, std::ostream& log = std::cout) {
    static const std::vector<std::string> known = {"kf-run", "filter-design", "altmin",
                                                   "sweep-l", "trace", "validate"};
    if (std::find(known.begin(), known.end(), subcommand) == known.end()) {
        log << "unknown subcommand: " << subcommand << "\n"
            << "usage: aircomp {kf-run|filter-design|altmin|sweep-l|trace|validate}"
               " [--config f] [--seed n] [--out dir] [--threads n]"
               " [--alpha a] [--K n] [--l n] [--rounds n]\n";
        return 1;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        log << "error: cannot create output directory " << out_dir << "\n";
        return 1;
    }
    detail::ManifestWriter manifest(out_dir, subcommand, cfg);
    try {
        if (subcommand == "kf-run") {
            const auto rows = kf_run(cfg);
            const std::string path = detail::join_path(out_dir, "kf_run.csv");
            write_lines(path, kf_run_csv_lines(rows));
            manifest.add_output(path);
        } else if (subcommand == "filter-design") {
            const GaussMarkovModel model = model_from_config(cfg);
            RngStream root(cfg.seed);
            RngStream channel_rng = root.substream(0);
            const Eigen::VectorXd h = detail::config_channel(cfg, channel_rng);
            const EffectiveScaling b = detail::initial_scaling(cfg, model, h);
            const FilterDesign d = optimal_filter(model, b, cfg.sigma_z2, cfg.l);

            std::vector<std::string> lines = {"# cmse = " + fmt_g17(d.cmse),
                                              "tap_index,g"};
            for (Eigen::Index i = 0; i < d.g.size(); ++i) {
                lines.push_back(std::to_string(i) + "," + fmt_g17(d.g(i)));
            }
            const std::string path = detail::join_path(out_dir, "filter_design.csv");
            write_lines(path, lines);
            manifest.add_output(path);

            std::vector<std::string> mat = {"matrix,row,col,value"};
            auto append = [&](const std::vector<std::string>& more) {
                mat.insert(mat.end(), more.begin(), more.end());
            };
            append(detail::matrix_long_csv("M_obs", d.M_obs));
            append(detail::matrix_long_csv("V_c", d.V_c));
            for (std::size_t i = 0; i < d.C.size(); ++i) {
                append(detail::matrix_long_csv("C_" + std::to_string(i + 1), d.C[i]));
            }
            append(detail::matrix_long_csv("b", b.b));
            const std::string mpath =
                detail::join_path(out_dir, "filter_design_matrices.csv");
            write_lines(mpath, mat);
            manifest.add_output(mpath);
        } else if (subcommand == "altmin") {
            const GaussMarkovModel model = model_from_config(cfg);
            RngStream root(cfg.seed);
            RngStream channel_rng = root.substream(0);
            const Eigen::VectorXd h = detail::config_channel(cfg, channel_rng);
            const EffectiveScaling init = detail::initial_scaling(cfg, model, h);
            const AltMinTrace trace = alternating_minimization(
                model, h, cfg.P, cfg.sigma_z2, cfg.l, cfg.rounds, init, cfg.power_bound,
                cfg.tol);

            std::vector<TraceRow> rows;
            for (const auto& r : trace.rounds) {
                rows.push_back(TraceRow{cfg.channel_name, r});
            }
            const std::string tpath = detail::join_path(out_dir, "altmin_trace.csv");
            write_lines(tpath, trace_csv_lines(rows));
            manifest.add_output(tpath);

            std::vector<std::string> lines = {"quantity,index,value"};
            for (Eigen::Index i = 0; i < trace.g.size(); ++i) {
                lines.push_back("g," + std::to_string(i) + "," + fmt_g17(trace.g(i)));
            }
            for (Eigen::Index i = 0; i < trace.b.size(); ++i) {
                lines.push_back("b," + std::to_string(i) + "," + fmt_g17(trace.b(i)));
            }
            lines.push_back("cmse,0," + fmt_g17(trace.cmse));
            lines.push_back(std::string("converged,0,") + (trace.converged ? "1" : "0"));
            const std::string rpath = detail::join_path(out_dir, "altmin_result.csv");
            write_lines(rpath, lines);
            manifest.add_output(rpath);
        } else if (subcommand == "sweep-l") {
            const CmseReport report = sweep_filter_length(cfg);
            const std::string path = detail::join_path(out_dir, "sweep.csv");
            write_lines(path, sweep_csv_lines(report));
            manifest.add_output(path);
            const std::string gp = detail::join_path(out_dir, "sweep.gp");
            write_lines(gp, gnuplot_sweep_script("sweep.csv", "sweep.png"));
            manifest.add_output(gp);
        } else if (subcommand == "trace") {
            const auto rows = convergence_trace(cfg);
            const std::string path = detail::join_path(out_dir, "trace.csv");
            write_lines(path, trace_csv_lines(rows));
            manifest.add_output(path);
            const std::string gp = detail::join_path(out_dir, "trace.gp");
            write_lines(gp, gnuplot_trace_script("trace.csv", "trace.png"));
            manifest.add_output(gp);
        } else {  // validate
            if (!run_validation_suite(log, cfg.seed)) {
                manifest.finish_error("validation suite reported failures");
                return 2;
            }
        }
    } catch (const std::exception& e) {
        manifest.finish_error(e.what());
        log << "error: " << e.what() << "\n";
        return 2;
    }
    manifest.finish_ok();
    return 0;
}

/**
 * @brief Full command-line entry point (argv parsing plus dispatch).
 *
 * Flags override config-file keys. Exit codes: 0 success, 1 configuration
 * problem (bad flags, bad config file, unknown subcommand), 2 numerical or
 * convergence failure during the run.
 */
inline int cli_main(int argc, const char* const* argv, std::ostream& log = std::cout) {
    CLI::App app{"Simulation toolkit for sum estimation over a superposing"
                 " noisy channel"};
    app.fallthrough();
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    long threads = -1, K = -1, l = -1, rounds = -1;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    app.add_option("--config", config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", seed, "root RNG seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads (0 = auto)");
    app.add_option("--alpha", alpha, "one-step correlation of the default model");
    app.add_option("--K", K, "number of sensors");
    app.add_option("--l", l, "window length parameter");
    app.add_option("--rounds", rounds, "alternating-minimization rounds");

    app.add_subcommand("kf-run", "simulate the recursive policy on one trajectory");
    app.add_subcommand("filter-design", "solve the windowed filter for a fixed scaling");
    app.add_subcommand("altmin", "jointly optimize taps and scaling on one channel");
    app.add_subcommand("sweep-l", "channel-averaged error versus window length");
    app.add_subcommand("trace", "alternating-minimization convergence traces");
    app.add_subcommand("validate", "run the cross-check oracle suite");
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        log << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        log << "argument error: " << e.what() << "\n" << app.help();
        return 1;
    }
    const auto subcommands = app.get_subcommands();
    if (subcommands.empty()) {
        log << app.help();
        return 1;
    }

    ExperimentConfig cfg;
    try {
        if (!config_path.empty()) {
            cfg = parse_config(config_path);
        }
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (threads >= 0) cfg.threads = threads;
        if (!std::isnan(alpha)) cfg.alpha = alpha;
        if (K > 0) {
            // A uniform power budget follows a dimension override (validation
            // re-expands it); a per-sensor budget must match the new K itself.
            if (K != cfg.P.size() && cfg.P.size() > 0 &&
                (cfg.P.array() == cfg.P(0)).all()) {
                cfg.P = Eigen::VectorXd::Constant(1, cfg.P(0));
            }
            cfg.K = K;
        }
        if (l >= 0) {
            cfg.l = l;
            cfg.l_values = {l};
        }
        if (rounds > 0) cfg.rounds = rounds;
        validate_config(cfg);
    } catch (const std::exception& e) {
        log << "config error: " << e.what() << "\n";
        return 1;
    }
    return dispatch(subcommands.front()->get_name(), cfg, out_dir, log);
}

} // namespace aircomp
