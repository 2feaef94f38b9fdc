// Experiment harness: empirical error measurement, channel-averaged sweeps
// over the filter length, convergence traces, CSV output, and plot scripts.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "aircomp/channel.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/filter_policy.hpp"
#include "aircomp/kf_policy.hpp"
#include "aircomp/power_opt.hpp"
#include "aircomp/random.hpp"
#include "aircomp/signal_model.hpp"

namespace aircomp {

// ===== Configuration =====

enum class ChannelKind { Rayleigh, Explicit };

/// Fully resolved experiment parameters (see config.hpp for JSON parsing).
struct ExperimentConfig {
    double alpha = 0.9;
    bool has_explicit_A = false;
    Eigen::MatrixXd A;               // used when has_explicit_A
    long K = 10;
    bool has_explicit_V_w = false;
    Eigen::MatrixXd V_w;             // default: V_w = I - A A^T, giving V_x = I
    double sigma_z2 = 1.0;
    Eigen::VectorXd P = Eigen::VectorXd::Constant(1, 10.0);  // power limits; scalar expands to length K
    ChannelKind channel = ChannelKind::Rayleigh;
    Eigen::VectorXd h;               // used when channel == Explicit
    std::string channel_name = "rayleigh";  // "rayleigh" | "s1" | "s2" | "custom"
    std::vector<long> l_values = {0, 1, 2, 3, 4, 5};
    long l = 4;
    long n_channel_realizations = 1000;
    long n_mc_samples = 100000;
    long n_steps = 200;              // kf-run trajectory length
    long burn_in = 50;
    std::uint64_t seed = 0;
    long rounds = 50;
    long threads = 0;                // 0: AIRCOMP_THREADS env, then hardware count
    PowerBoundRule power_bound = PowerBoundRule::WithH2;
    bool init_full_power = true;
    Eigen::VectorXd init_b;          // used when !init_full_power
    double tol = 1e-10;              // quadratic-solver stationarity tolerance
};

/// All-ones channel vector.
inline Eigen::VectorXd channel_s1(long K) {
    return Eigen::VectorXd::Ones(K);
}

/// K evenly spaced channel gains covering [0.1, 1.9] inclusive.
inline Eigen::VectorXd channel_s2(long K) {
    Eigen::VectorXd h(K);
    if (K == 1) {
        h(0) = 0.1;
        return h;
    }
    for (long k = 0; k < K; ++k) {
        h(k) = 0.1 + 1.8 * static_cast<double>(k) / static_cast<double>(K - 1);
    }
    return h;
}

/// Build the signal model a config describes.
inline GaussMarkovModel model_from_config(const ExperimentConfig& cfg) {
    const Eigen::MatrixXd A = cfg.has_explicit_A
        ? cfg.A
        : Eigen::MatrixXd(cfg.alpha * Eigen::MatrixXd::Identity(cfg.K, cfg.K));
    const Eigen::MatrixXd V_w = cfg.has_explicit_V_w
        ? cfg.V_w
        : Eigen::MatrixXd(Eigen::MatrixXd::Identity(A.rows(), A.cols()) - A * A.transpose());
    return make_model(A, V_w);
}

inline long resolve_threads(long requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("AIRCOMP_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<long>(hw) : 1;
}

// ===== Deterministic parallel map over channel realizations =====

/// Evaluate fn(j, rng_j) for j = 0..n-1 with one RNG substream per index and
/// results stored by index, so the output is independent of the worker count.
template <typename Fn>
inline auto run_over_realizations(long n, std::uint64_t seed, long threads, Fn&& fn)
    -> std::vector<decltype(fn(0L, std::declval<RngStream&>()))> {
    using Result = decltype(fn(0L, std::declval<RngStream&>()));
    if (n < 1) {
        throw ValidityError("run_over_realizations: n must be >= 1");
    }
    const RngStream root(seed);
    std::vector<Result> results(static_cast<std::size_t>(n));
    const long workers = std::max(1L, std::min(resolve_threads(threads), n));
    if (workers == 1) {
        for (long j = 0; j < n; ++j) {
            RngStream rng = root.substream(static_cast<std::uint64_t>(j));
            results[static_cast<std::size_t>(j)] = fn(j, rng);
        }
        return results;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    for (long w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const long j = next.fetch_add(1);
                if (j >= n || failed.load()) break;
                try {
                    RngStream rng = root.substream(static_cast<std::uint64_t>(j));
                    results[static_cast<std::size_t>(j)] = fn(j, rng);
                } catch (...) {
                    if (!failed.exchange(true)) first_error = std::current_exception();
                    break;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(first_error);
    return results;
}

// ===== Empirical error measurement =====

struct PolicySpec {
    enum class Kind { Kf, Filter };
    Kind kind = Kind::Kf;
    Eigen::VectorXd g;  // filter taps when kind == Filter

    static PolicySpec kf() { return PolicySpec{}; }
    static PolicySpec filter(Eigen::VectorXd taps) {
        PolicySpec p;
        p.kind = Kind::Filter;
        p.g = std::move(taps);
        return p;
    }
};

struct CmseEstimate {
    double mean = 0.0;
    double se = 0.0;   // standard error of the mean
    long n_used = 0;
};

/// Sample mean and batch-means standard error (correlated-sequence safe).
inline CmseEstimate batch_means(const std::vector<double>& samples, int batches = 20) {
    const long n = static_cast<long>(samples.size());
    const long per = n / batches;
    const long used = per * batches;
    double mean = 0.0;
    for (long i = 0; i < used; ++i) mean += samples[static_cast<std::size_t>(i)];
    mean /= static_cast<double>(used);
    double var_of_means = 0.0;
    for (int j = 0; j < batches; ++j) {
        double m = 0.0;
        for (long i = j * per; i < (j + 1) * per; ++i) m += samples[static_cast<std::size_t>(i)];
        m /= static_cast<double>(per);
        var_of_means += (m - mean) * (m - mean);
    }
    CmseEstimate e;
    e.mean = mean;
    e.se = std::sqrt(var_of_means / (static_cast<double>(batches) * (batches - 1)));
    e.n_used = used;
    return e;
}

/**
 * @brief Measure a policy's error on one long stationary trajectory.
 *
 * Simulates x_t and y_t from slot 0 (stationary draw), discards
 * max(burn_in, filter length) slots, then averages (chi_t - 1^T x_t)^2 over
 * n slots. The standard error uses 20 batch means because successive errors
 * are correlated.
 *
 * @throws ValidityError if n < 100.
 */
inline CmseEstimate empirical_cmse(const PolicySpec& policy, const GaussMarkovModel& model,
                                   const EffectiveScaling& b, double sigma_z2, long n,
                                   long burn_in, std::uint64_t seed) {
    if (n < 100) {
        throw ValidityError("empirical_cmse: n must be >= 100");
    }
    if (burn_in < 0) {
        throw ValidityError("empirical_cmse: burn_in must be >= 0");
    }
    const long l = policy.kind == PolicySpec::Kind::Filter
        ? static_cast<long>(policy.g.size()) - 1 : 0;
    const long burn = std::max(burn_in, l);
    const long total = burn + n;
    const double sigma_z = std::sqrt(sigma_z2);

    RngStream rng(seed);
    SignalState x = init_state(model, rng);
    std::vector<double> sq_err;
    sq_err.reserve(static_cast<std::size_t>(n));

    if (policy.kind == PolicySpec::Kind::Kf) {
        const KalmanSchedule sched = kf_gain_schedule(model, b, sigma_z2, total);
        Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(model.dim);
        for (long s = 0; s < total; ++s) {
            if (s > 0) step(model, x, rng);
            const double y = receive(b, x, sigma_z, rng);
            x_hat = model.A * x_hat;
            x_hat += sched.gain[static_cast<std::size_t>(s)] * (y - b.b.dot(x_hat));
            if (s >= burn) {
                const double err = x_hat.sum() - x.x.sum();
                sq_err.push_back(err * err);
            }
        }
    } else {
        std::vector<double> window(static_cast<std::size_t>(l + 1), 0.0);
        for (long s = 0; s < total; ++s) {
            if (s > 0) step(model, x, rng);
            const double y = receive(b, x, sigma_z, rng);
            window[static_cast<std::size_t>(s % (l + 1))] = y;
            if (s >= burn) {
                double chi = 0.0;
                for (long i = 0; i <= l; ++i) {
                    chi += policy.g(i) * window[static_cast<std::size_t>((s - l + i) % (l + 1))];
                }
                const double err = chi - x.x.sum();
                sq_err.push_back(err * err);
            }
        }
    }
    return batch_means(sq_err);
}

// ===== Reports and CSV emission =====

struct CmseRow {
    double alpha = 0.0;
    long K = 0;
    long l = 0;
    std::string policy;  // "kf-optimal" | "low-complexity"
    double cmse_mean = 0.0;
    double cmse_se = 0.0;
    long n_realizations = 0;
};

struct CmseReport {
    std::vector<CmseRow> rows;
    std::vector<std::string> header_notes;  // emitted as leading '#' lines
};

/// 17-significant-digit decimal form: round-trips doubles and is stable
/// across runs (iostream state can vary; snprintf does not).
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open output file: " + path);
    }
    for (const auto& line : lines) out << line << '\n';
    if (!out) {
        throw Error("write failed: " + path);
    }
}

inline std::vector<std::string> sweep_csv_lines(const CmseReport& report) {
    std::vector<std::string> lines;
    for (const auto& note : report.header_notes) lines.push_back("# " + note);
    lines.push_back("alpha,K,l,policy,cmse_mean,cmse_stderr,n_realizations");
    for (const auto& row : report.rows) {
        lines.push_back(fmt_g17(row.alpha) + "," + std::to_string(row.K) + "," +
                        std::to_string(row.l) + "," + row.policy + "," +
                        fmt_g17(row.cmse_mean) + "," + fmt_g17(row.cmse_se) + "," +
                        std::to_string(row.n_realizations));
    }
    return lines;
}

struct TraceRow {
    std::string scenario;
    AltMinRound round;
};

inline std::vector<std::string> trace_csv_lines(const std::vector<TraceRow>& rows) {
    std::vector<std::string> lines;
    lines.push_back("scenario,round,cmse_after_g,cmse_after_b");
    for (const auto& r : rows) {
        lines.push_back(r.scenario + "," + std::to_string(r.round.round) + "," +
                        fmt_g17(r.round.cmse_after_g) + "," + fmt_g17(r.round.cmse_after_b));
    }
    return lines;
}

// ===== Channel-averaged policy comparison over the filter length =====

namespace detail {

struct RealizationSweep {
    std::vector<double> low;  // closed-form error per entry of l_values
    double kf = 0.0;          // steady-state error with the largest-l scaling
};

inline Eigen::VectorXd config_channel(const ExperimentConfig& cfg, RngStream& rng) {
    if (cfg.channel == ChannelKind::Explicit) return cfg.h;
    return sample_rayleigh(cfg.K, rng);
}

inline EffectiveScaling initial_scaling(const ExperimentConfig& cfg,
                                        const GaussMarkovModel& model,
                                        const Eigen::VectorXd& h) {
    if (cfg.init_full_power) {
        return full_power_scaling(model, h, cfg.P, cfg.power_bound);
    }
    return EffectiveScaling{cfg.init_b};
}

} // namespace detail

/**
 * @brief Average both policies' errors over channel draws, per filter length.
 *
 * Per realization: re-run alternating minimization at every l (the average
 * is over optimized systems, which is why this op is the expensive one), and
 * evaluate the observation-optimal policy's steady-state error using the
 * scaling produced at the largest l. Rows for that policy repeat the same
 * per-realization value at every l for plotting convenience.
 */
inline CmseReport sweep_filter_length(const ExperimentConfig& cfg) {
    if (cfg.l_values.empty()) {
        throw ValidityError("sweep_filter_length: l_values must be non-empty");
    }
    const GaussMarkovModel model = model_from_config(cfg);
    const long l_max = *std::max_element(cfg.l_values.begin(), cfg.l_values.end());
    const long n = cfg.n_channel_realizations;

    auto per_realization = [&](long, RngStream& rng) {
        detail::RealizationSweep out;
        const Eigen::VectorXd h = detail::config_channel(cfg, rng);
        const EffectiveScaling init = detail::initial_scaling(cfg, model, h);
        Eigen::VectorXd b_largest;
        out.low.reserve(cfg.l_values.size());
        for (const long l : cfg.l_values) {
            const AltMinTrace t = alternating_minimization(
                model, h, cfg.P, cfg.sigma_z2, l, cfg.rounds, init, cfg.power_bound, cfg.tol);
            out.low.push_back(t.cmse);
            if (l == l_max) b_largest = t.b;
        }
        const Eigen::MatrixXd M_inf =
            steady_state_error(model, EffectiveScaling{b_largest}, cfg.sigma_z2);
        out.kf = M_inf.sum();
        return out;
    };
    const auto results = run_over_realizations(n, cfg.seed, cfg.threads, per_realization);

    auto mean_se = [n](auto&& extract) {
        double mean = 0.0;
        for (long j = 0; j < n; ++j) mean += extract(j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (long j = 0; j < n; ++j) {
            const double d = extract(j) - mean;
            var += d * d;
        }
        const double se = n > 1
            ? std::sqrt(var / (static_cast<double>(n) * static_cast<double>(n - 1)))
            : 0.0;
        return std::pair<double, double>(mean, se);
    };

    CmseReport report;
    report.header_notes.push_back(
        "n_channel_realizations = " + std::to_string(n) +
        " (reference protocol: 100000)");
    report.header_notes.push_back(
        std::string("power_bound = ") + power_bound_name(cfg.power_bound));
    for (std::size_t li = 0; li < cfg.l_values.size(); ++li) {
        const auto [low_mean, low_se] =
            mean_se([&](long j) { return results[static_cast<std::size_t>(j)].low[li]; });
        report.rows.push_back(CmseRow{cfg.alpha, cfg.K, cfg.l_values[li], "low-complexity",
                                      low_mean, low_se, n});
    }
    const auto [kf_mean, kf_se] =
        mean_se([&](long j) { return results[static_cast<std::size_t>(j)].kf; });
    for (const long l : cfg.l_values) {
        report.rows.push_back(CmseRow{cfg.alpha, cfg.K, l, "kf-optimal", kf_mean, kf_se, n});
    }
    return report;
}

// ===== Convergence traces of the alternating optimization =====

/// Alternating-minimization traces for the configured channel; with a
/// Rayleigh (unspecified) channel, runs the two named deterministic
/// scenarios: all-equal gains and evenly spread gains.
inline std::vector<TraceRow> convergence_trace(const ExperimentConfig& cfg) {
    const GaussMarkovModel model = model_from_config(cfg);
    std::vector<std::pair<std::string, Eigen::VectorXd>> scenarios;
    if (cfg.channel == ChannelKind::Explicit) {
        scenarios.emplace_back(cfg.channel_name, cfg.h);
    } else {
        scenarios.emplace_back("s1", channel_s1(cfg.K));
        scenarios.emplace_back("s2", channel_s2(cfg.K));
    }
    std::vector<TraceRow> rows;
    for (const auto& [name, h] : scenarios) {
        const EffectiveScaling init = detail::initial_scaling(cfg, model, h);
        const AltMinTrace trace = alternating_minimization(
            model, h, cfg.P, cfg.sigma_z2, cfg.l, cfg.rounds, init, cfg.power_bound, cfg.tol);
        for (const auto& round : trace.rounds) {
            rows.push_back(TraceRow{name, round});
        }
    }
    return rows;
}

/// Channel-averaged error of the configured single-l pipeline.
inline CmseReport monte_carlo_over_channels(const ExperimentConfig& cfg) {
    ExperimentConfig single = cfg;
    single.l_values = {cfg.l};
    return sweep_filter_length(single);
}

// ===== Observation-optimal policy trajectory run =====

struct KfRunRow {
    long t = 0;
    double y = 0.0;
    double chi = 0.0;
    double cmse_theoretical = 0.0;
    double sum_true = 0.0;
};

/// Simulate one trajectory under the recursive policy with a full-power
/// scaling on the configured channel; rows start at slot 0.
inline std::vector<KfRunRow> kf_run(const ExperimentConfig& cfg) {
    const GaussMarkovModel model = model_from_config(cfg);
    RngStream root(cfg.seed);
    RngStream channel_rng = root.substream(0);
    RngStream traj_rng = root.substream(1);
    const Eigen::VectorXd h = detail::config_channel(cfg, channel_rng);
    const EffectiveScaling b = detail::initial_scaling(cfg, model, h);
    const double sigma_z = std::sqrt(cfg.sigma_z2);

    std::vector<KfRunRow> rows;
    rows.reserve(static_cast<std::size_t>(cfg.n_steps));
    SignalState x = init_state(model, traj_rng);
    KalmanState est = kf_init(model);
    for (long s = 0; s < cfg.n_steps; ++s) {
        if (s > 0) step(model, x, traj_rng);
        const double y = receive(b, x, sigma_z, traj_rng);
        est = kf_update(est, model, b, cfg.sigma_z2, y);
        rows.push_back(KfRunRow{s, y, estimate_sum(est), kf_cmse(est), x.x.sum()});
    }
    return rows;
}

inline std::vector<std::string> kf_run_csv_lines(const std::vector<KfRunRow>& rows) {
    std::vector<std::string> lines;
    lines.push_back("t,y_t,chi_t,cmse_theoretical,sum_true");
    for (const auto& r : rows) {
        lines.push_back(std::to_string(r.t) + "," + fmt_g17(r.y) + "," + fmt_g17(r.chi) +
                        "," + fmt_g17(r.cmse_theoretical) + "," + fmt_g17(r.sum_true));
    }
    return lines;
}

// ===== Plot-script emission =====

inline std::vector<std::string> gnuplot_sweep_script(const std::string& csv_name,
                                                     const std::string& png_name) {
    return {
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        "set output '" + png_name + "'",
        "set xlabel 'filter length l'",
        "set ylabel 'computation MSE'",
        "set key top right",
        "plot '" + csv_name + "' skip 1 using 3:(strcol(4) eq 'low-complexity' ? $5 : 1/0) "
            "with linespoints title 'low-complexity', \\",
        "     '" + csv_name + "' skip 1 using 3:(strcol(4) eq 'kf-optimal' ? $5 : 1/0) "
            "with linespoints title 'recursive optimal'",
    };
}

inline std::vector<std::string> gnuplot_trace_script(const std::string& csv_name,
                                                     const std::string& png_name) {
    return {
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        "set output '" + png_name + "'",
        "set xlabel 'round'",
        "set ylabel 'computation MSE'",
        "set key top right",
        "plot '" + csv_name + "' skip 1 using 2:(strcol(1) eq 's1' ? $4 : 1/0) "
            "with linespoints title 'equal gains', \\",
        "     '" + csv_name + "' skip 1 using 2:(strcol(1) eq 's2' ? $4 : 1/0) "
            "with linespoints title 'spread gains'",
    };
}

} // namespace aircomp
