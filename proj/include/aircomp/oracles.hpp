// Independent cross-checks used by the test suite and the `validate`
// subcommand. Every routine here recomputes a quantity through a different
// route than the library's production path: brute-force grids, bisection,
// direct simulation, or textbook joint-covariance algebra.
#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aircomp/channel.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/experiments.hpp"
#include "aircomp/filter_policy.hpp"
#include "aircomp/kf_policy.hpp"
#include "aircomp/linalg.hpp"
#include "aircomp/power_opt.hpp"
#include "aircomp/random.hpp"
#include "aircomp/signal_model.hpp"

namespace aircomp {

// ===== Test-instance generation =====

/// Random model with prescribed spectral radius: dense A rescaled to the
/// target, V_w a random Gram matrix plus a small ridge.
inline GaussMarkovModel random_stable_model(RngStream& rng, Eigen::Index K,
                                            double rho_target = 0.7) {
    Eigen::MatrixXd A(K, K);
    for (Eigen::Index i = 0; i < K; ++i) {
        for (Eigen::Index j = 0; j < K; ++j) A(i, j) = rng.normal();
    }
    const double rho = spectral_radius(A);
    if (rho > 0.0) A *= rho_target / rho;
    Eigen::MatrixXd G(K, K);
    for (Eigen::Index i = 0; i < K; ++i) {
        for (Eigen::Index j = 0; j < K; ++j) G(i, j) = rng.normal();
    }
    const Eigen::MatrixXd V_w =
        G * G.transpose() / static_cast<double>(K) +
        0.05 * Eigen::MatrixXd::Identity(K, K);
    return make_model(A, V_w);
}

/// Random effective scaling with entries of order one.
inline Eigen::VectorXd random_scaling(RngStream& rng, Eigen::Index K) {
    Eigen::VectorXd b(K);
    for (Eigen::Index k = 0; k < K; ++k) b(k) = rng.normal();
    return b;
}

// ===== Closed-form scalar and small-matrix oracles =====

/// Eigenvalue magnitudes of a 2x2 matrix from the characteristic polynomial.
inline double spectral_radius_2x2(const Eigen::Matrix2d& A) {
    const double tr = A(0, 0) + A(1, 1);
    const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    const double disc = tr * tr - 4.0 * det;
    if (disc >= 0.0) {
        const double s = std::sqrt(disc);
        return std::max(std::abs(0.5 * (tr + s)), std::abs(0.5 * (tr - s)));
    }
    return std::sqrt(det);  // complex pair, |lambda|^2 = det
}

/// A^p by plain repeated multiplication.
inline Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& A, long p) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(A.rows(), A.cols());
    for (long i = 0; i < p; ++i) out = out * A;
    return out;
}

/// Positive root of the scalar steady-state equation
///   m = (a^2 m + v_w) sigma_z2 / (sigma_z2 + b^2 (a^2 m + v_w))
/// found by bisection on [0, v_x]; the right side is increasing in m and the
/// fixed point is unique there.
inline double scalar_riccati_bisection(double a, double v_w, double b, double sigma_z2,
                                       double tol = 1e-14) {
    const double v_x = v_w / (1.0 - a * a);
    auto f = [&](double m) {
        const double pred = a * a * m + v_w;
        return pred * sigma_z2 / (sigma_z2 + b * b * pred) - m;
    };
    double lo = 0.0, hi = v_x;
    if (f(hi) > 0.0) hi = v_x + 1.0;  // guard; cannot happen for b != 0
    for (int it = 0; it < 500 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ===== Joint-covariance route to the windowed filter =====

/// Optimal taps and error from the stationary joint covariance of the window
/// and the target, using only Cov(x_s, x_{s+d}) = V_x (A^d)^T. This route
/// never touches the window-noise decomposition (V_c, C_i), so agreement is
/// meaningful evidence for both.
struct WindowLmmse {
    Eigen::VectorXd g;
    double cmse = 0.0;
};

inline WindowLmmse joint_covariance_lmmse(const GaussMarkovModel& model,
                                          const EffectiveScaling& b, double sigma_z2,
                                          long l) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(model.dim);
    std::vector<Eigen::MatrixXd> Apow(static_cast<std::size_t>(l + 1));
    Apow[0] = Eigen::MatrixXd::Identity(model.dim, model.dim);
    for (long d = 1; d <= l; ++d) Apow[static_cast<std::size_t>(d)] = Apow[d - 1] * model.A;

    Eigen::MatrixXd Syy(l + 1, l + 1);
    Eigen::VectorXd Sys(l + 1);
    for (long i = 0; i <= l; ++i) {
        for (long j = i; j <= l; ++j) {
            // window entries i <= j sit d = j - i slots apart
            const double cov =
                b.b.dot(model.V_x * Apow[static_cast<std::size_t>(j - i)].transpose() * b.b);
            Syy(i, j) = cov + (i == j ? sigma_z2 : 0.0);
            Syy(j, i) = Syy(i, j);
        }
        Sys(i) =
            b.b.dot(model.V_x * Apow[static_cast<std::size_t>(l - i)].transpose() * ones);
    }
    WindowLmmse out;
    out.g = Syy.ldlt().solve(Sys);
    out.cmse = ones.dot(model.V_x * ones) - Sys.dot(out.g);
    if (out.cmse < 0.0 && out.cmse > -1e-10) out.cmse = 0.0;
    return out;
}

// ===== Direct-simulation oracles =====

/// Empirical window-noise moments from raw trajectories: each trial draws a
/// stationary window start, steps the model forward, and measures
/// c_i = y_{t-l+i} - b^T A^i x_{t-l} together with the innovations, entirely
/// from simulated quantities.
struct WindowMomentsMc {
    Eigen::MatrixXd V_hat;                 ///< mean of c c^T
    Eigen::MatrixXd V_se;                  ///< standard error per entry
    std::vector<Eigen::MatrixXd> C_hat;    ///< C_hat[i-1] ~ E[c w_{t-i}^T]
    std::vector<Eigen::MatrixXd> C_se;
};

inline WindowMomentsMc window_moments_mc(const GaussMarkovModel& model,
                                         const EffectiveScaling& b, double sigma_z2,
                                         long l, long n, std::uint64_t seed) {
    const double sigma_z = std::sqrt(sigma_z2);
    const Eigen::Index K = model.dim;
    const long w = l + 1;

    Eigen::MatrixXd v_sum = Eigen::MatrixXd::Zero(w, w);
    Eigen::MatrixXd v_sumsq = Eigen::MatrixXd::Zero(w, w);
    std::vector<Eigen::MatrixXd> c_sum(static_cast<std::size_t>(l),
                                       Eigen::MatrixXd::Zero(w, K));
    std::vector<Eigen::MatrixXd> c_sumsq(static_cast<std::size_t>(l),
                                         Eigen::MatrixXd::Zero(w, K));

    RngStream rng(seed);
    Eigen::VectorXd c(w);
    std::vector<Eigen::VectorXd> innovations(static_cast<std::size_t>(l));
    for (long trial = 0; trial < n; ++trial) {
        const Eigen::VectorXd x_start = sample_stationary(model, rng);
        Eigen::VectorXd x = x_start;
        Eigen::VectorXd x_pred = x_start;  // A^i x_start, noise-free propagation
        c(0) = sigma_z * rng.normal();     // y_{t-l} - b^T x_start
        for (long i = 1; i <= l; ++i) {
            const Eigen::VectorXd wvec = model.sqrt_V_w * rng.normal_vector(K);
            innovations[static_cast<std::size_t>(i - 1)] = wvec;
            x = model.A * x + wvec;
            x_pred = model.A * x_pred;
            const double y = b.b.dot(x) + sigma_z * rng.normal();
            c(i) = y - b.b.dot(x_pred);
        }
        const Eigen::MatrixXd cc = c * c.transpose();
        v_sum += cc;
        v_sumsq += cc.cwiseProduct(cc);
        for (long i = 1; i <= l; ++i) {
            // w_{t-i} is the innovation entering step l-i+1 of the window
            const Eigen::VectorXd& wvec = innovations[static_cast<std::size_t>(l - i)];
            const Eigen::MatrixXd cw = c * wvec.transpose();
            c_sum[static_cast<std::size_t>(i - 1)] += cw;
            c_sumsq[static_cast<std::size_t>(i - 1)] += cw.cwiseProduct(cw);
        }
    }

    const double dn = static_cast<double>(n);
    auto finish = [&](const Eigen::MatrixXd& sum, const Eigen::MatrixXd& sumsq,
                      Eigen::MatrixXd& mean, Eigen::MatrixXd& se) {
        mean = sum / dn;
        const Eigen::MatrixXd var =
            (sumsq / dn - mean.cwiseProduct(mean)).cwiseMax(0.0);
        se = (var / (dn - 1.0)).cwiseSqrt();
    };
    WindowMomentsMc out;
    finish(v_sum, v_sumsq, out.V_hat, out.V_se);
    out.C_hat.resize(static_cast<std::size_t>(l));
    out.C_se.resize(static_cast<std::size_t>(l));
    for (long i = 0; i < l; ++i) {
        finish(c_sum[static_cast<std::size_t>(i)], c_sumsq[static_cast<std::size_t>(i)],
               out.C_hat[static_cast<std::size_t>(i)], out.C_se[static_cast<std::size_t>(i)]);
    }
    return out;
}

/// Slot index at which the recursive policy's theoretical error has
/// stabilized, plus the error there.
struct SteadySlot {
    long slot = 0;
    double cmse = 0.0;
};

inline SteadySlot steady_state_slot(const GaussMarkovModel& model, const EffectiveScaling& b,
                                    double sigma_z2, double tol = 1e-12,
                                    long max_slots = 100000) {
    Eigen::MatrixXd M = model.V_x;
    double prev = M.sum();
    for (long s = 0; s < max_slots; ++s) {
        const Eigen::MatrixXd M_pred =
            symmetrize(model.A * M * model.A.transpose() + model.V_w);
        const Eigen::VectorXd Mb = M_pred * b.b;
        const Eigen::VectorXd gain = Mb / (sigma_z2 + b.b.dot(Mb));
        M = symmetrize(M_pred - gain * Mb.transpose());
        const double cmse = M.sum();
        if (s > 0 && std::abs(cmse - prev) <= tol * (1.0 + std::abs(cmse))) {
            return SteadySlot{s, cmse};
        }
        prev = cmse;
    }
    throw ConvergenceError("steady_state_slot: error did not stabilize");
}

/// Monte Carlo estimate of the recursive policy's squared sum error at fixed
/// slots, averaged over independent trajectories (plain i.i.d. standard
/// errors apply).
inline std::vector<CmseEstimate> kf_mc_at_slots(const GaussMarkovModel& model,
                                                const EffectiveScaling& b, double sigma_z2,
                                                const std::vector<long>& slots, long n_traj,
                                                std::uint64_t seed, long threads = 0) {
    const long max_slot = *std::max_element(slots.begin(), slots.end());
    const KalmanSchedule sched = kf_gain_schedule(model, b, sigma_z2, max_slot + 1);
    const double sigma_z = std::sqrt(sigma_z2);

    auto per_traj = [&](long, RngStream& rng) {
        std::vector<double> sq(slots.size());
        SignalState x = init_state(model, rng);
        Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(model.dim);
        for (long s = 0; s <= max_slot; ++s) {
            if (s > 0) step(model, x, rng);
            const double y = receive(b, x, sigma_z, rng);
            x_hat = model.A * x_hat;
            x_hat += sched.gain[static_cast<std::size_t>(s)] * (y - b.b.dot(x_hat));
            for (std::size_t i = 0; i < slots.size(); ++i) {
                if (slots[i] == s) {
                    const double err = x_hat.sum() - x.x.sum();
                    sq[i] = err * err;
                }
            }
        }
        return sq;
    };
    const auto samples = run_over_realizations(n_traj, seed, threads, per_traj);

    std::vector<CmseEstimate> out(slots.size());
    const double dn = static_cast<double>(n_traj);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[i];
        mean /= dn;
        double var = 0.0;
        for (const auto& s : samples) var += (s[i] - mean) * (s[i] - mean);
        out[i].mean = mean;
        out[i].se = n_traj > 1 ? std::sqrt(var / (dn * (dn - 1.0))) : 0.0;
        out[i].n_used = n_traj;
    }
    return out;
}

// ===== Brute-force optimization oracles =====

struct GridMin {
    Eigen::VectorXd argmin;
    double value = 0.0;
};

/// Exhaustive search of a K = 2 quadratic over its box at the given
/// per-axis resolution.
inline GridMin grid_min_qcqp_2d(const QcqpProblem& p, long resolution = 2001) {
    if (p.Q.rows() != 2) {
        throw DimensionError("grid_min_qcqp_2d: built for K = 2 only");
    }
    const double s0 = p.bounds.s(0), s1 = p.bounds.s(1);
    GridMin best;
    best.argmin = Eigen::VectorXd::Zero(2);
    best.value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd b(2);
    for (long i = 0; i < resolution; ++i) {
        b(0) = -s0 + 2.0 * s0 * static_cast<double>(i) / static_cast<double>(resolution - 1);
        for (long jj = 0; jj < resolution; ++jj) {
            b(1) = -s1 + 2.0 * s1 * static_cast<double>(jj) / static_cast<double>(resolution - 1);
            const double f = qcqp_objective(p, b);
            if (f < best.value) {
                best.value = f;
                best.argmin = b;
            }
        }
    }
    return best;
}

/// Joint scalar optimum of E[(g y - x)^2] = g^2 (b^2 v_x + sigma_z2)
/// - 2 g b v_x + v_x over the b box and a g grid, written from the scalar
/// expansion directly (no library calls).
inline GridMin scalar_joint_grid(double v_x, double sigma_z2, double u, long nb = 4001,
                                 long ng = 4001) {
    const double s = std::sqrt(u);
    const double g_max = s * v_x / sigma_z2 + 1.0;
    GridMin best;
    best.argmin = Eigen::VectorXd::Zero(2);  // (b, g)
    best.value = std::numeric_limits<double>::infinity();
    for (long i = 0; i < nb; ++i) {
        const double b = -s + 2.0 * s * static_cast<double>(i) / static_cast<double>(nb - 1);
        for (long jj = 0; jj < ng; ++jj) {
            const double g =
                -g_max + 2.0 * g_max * static_cast<double>(jj) / static_cast<double>(ng - 1);
            const double f = g * g * (b * b * v_x + sigma_z2) - 2.0 * g * b * v_x + v_x;
            if (f < best.value) {
                best.value = f;
                best.argmin << b, g;
            }
        }
    }
    return best;
}

// ===== Aggregated validation suite =====

/// Run the cross-module oracle checks at desk scale, logging one line per
/// check. Each check derives its own substream of the root seed, so checks
/// are independent of each other's sampling. Returns true only if every
/// check passes.
inline bool run_validation_suite(std::ostream& log, std::uint64_t seed = 0) {
    bool all_ok = true;
    auto check = [&](const std::string& name, bool ok, const std::string& detail) {
        log << (ok ? "ok   " : "FAIL ") << name;
        if (!detail.empty()) log << "  (" << detail << ")";
        log << '\n';
        all_ok = all_ok && ok;
    };
    const RngStream root(seed);

    {   // stationary covariance residual on random stable models
        RngStream rng = root.substream(101);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::Index K = 2 + static_cast<Eigen::Index>(rng.uniform() * 7);
            const GaussMarkovModel m = random_stable_model(rng, K, 0.5 + 0.4 * rng.uniform());
            const double num =
                (m.A * m.V_x * m.A.transpose() - m.V_x + m.V_w).norm();
            worst = std::max(worst, num / (1.0 + m.V_w.norm()));
        }
        check("stationary-covariance residual", worst <= 1e-10,
              "worst relative residual " + fmt_g17(worst));
    }
    {   // scalar closed forms: one-step filter and steady state
        const double b = 0.8, sz2 = 0.5;
        const GaussMarkovModel m = make_iid_model(0.9, 1);
        const double v_x = m.V_x(0, 0);
        const FilterDesign d =
            optimal_filter(m, EffectiveScaling{Eigen::VectorXd::Constant(1, b)}, sz2, 0);
        const double g_ref = b * v_x / (b * b * v_x + sz2);
        const double e_ref = v_x * sz2 / (b * b * v_x + sz2);
        const bool ok_g = std::abs(d.g(0) - g_ref) <= 1e-12;
        const bool ok_e = std::abs(d.cmse - e_ref) <= 1e-12;
        const double m_bis = scalar_riccati_bisection(0.9, 0.19, 1.0, 1.0);
        const Eigen::MatrixXd M_inf = steady_state_error(
            m, EffectiveScaling{Eigen::VectorXd::Ones(1)}, 1.0);
        const bool ok_ss = std::abs(M_inf(0, 0) - m_bis) <= 1e-9;
        check("scalar closed forms", ok_g && ok_e && ok_ss, "");
    }
    {   // windowed error: quadratic-in-b form vs direct expansion
        RngStream rng = root.substream(102);
        double worst = 0.0;
        for (int trial = 0; trial < 25; ++trial) {
            const Eigen::Index K = 2 + static_cast<Eigen::Index>(rng.uniform() * 3);
            const long l = static_cast<long>(rng.uniform() * 4);
            const GaussMarkovModel m = random_stable_model(rng, K, 0.7);
            const Eigen::VectorXd b = random_scaling(rng, K);
            Eigen::VectorXd g(l + 1);
            for (long i = 0; i <= l; ++i) g(i) = rng.normal();
            const double direct = closed_form_cmse(m, EffectiveScaling{b}, g, 1.0, l);
            const QcqpProblem p = build_qcqp(m, g, 1.0, l, Eigen::VectorXd::Ones(K),
                                             Eigen::VectorXd::Constant(K, 10.0));
            const double quad = qcqp_objective(p, b);
            worst = std::max(worst, std::abs(direct - quad) / (1.0 + std::abs(direct)));
        }
        check("quadratic-form identity", worst <= 1e-9,
              "worst relative gap " + fmt_g17(worst));
    }
    {   // joint-covariance route to the optimal taps
        RngStream rng = root.substream(103);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
            const Eigen::VectorXd b = random_scaling(rng, 3);
            const FilterDesign d = optimal_filter(m, EffectiveScaling{b}, 1.0, 3);
            const WindowLmmse ref = joint_covariance_lmmse(m, EffectiveScaling{b}, 1.0, 3);
            worst = std::max(worst, (d.g - ref.g).norm());
            worst = std::max(worst, std::abs(d.cmse - ref.cmse));
        }
        check("joint-covariance filter agreement", worst <= 1e-10,
              "worst gap " + fmt_g17(worst));
    }
    {   // Monte Carlo triangle: empirical error vs both closed forms
        RngStream rng = root.substream(104);
        const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
        const Eigen::VectorXd b = random_scaling(rng, 3);
        const long l = 2;
        const FilterDesign d = optimal_filter(m, EffectiveScaling{b}, 1.0, l);
        const CmseEstimate emp =
            empirical_cmse(PolicySpec::filter(d.g), m, EffectiveScaling{b}, 1.0, 50000,
                           50, root.substream(105).seed());
        const bool ok = std::abs(emp.mean - d.cmse) <= 3.0 * emp.se;
        check("simulated vs closed-form error", ok,
              "empirical " + fmt_g17(emp.mean) + " closed form " + fmt_g17(d.cmse) +
                  " se " + fmt_g17(emp.se));
    }
    {   // window-noise covariance vs raw simulation
        RngStream rng = root.substream(106);
        const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
        const Eigen::VectorXd b = random_scaling(rng, 3);
        const long l = 3;
        const Eigen::MatrixXd V_c = build_noise_covariance(m, EffectiveScaling{b}, 1.0, l);
        const WindowMomentsMc mc = window_moments_mc(m, EffectiveScaling{b}, 1.0, l,
                                                     100000, root.substream(107).seed());
        double worst = 0.0;
        for (long i = 0; i <= l; ++i) {
            for (long jj = 0; jj <= l; ++jj) {
                if (mc.V_se(i, jj) <= 0.0) continue;
                worst = std::max(worst,
                                 std::abs(mc.V_hat(i, jj) - V_c(i, jj)) / mc.V_se(i, jj));
            }
        }
        check("window-noise covariance vs simulation", worst <= 3.0,
              "worst entry deviation " + fmt_g17(worst) + " standard errors");
    }
    {   // box-constrained quadratic vs exhaustive grid
        RngStream rng = root.substream(108);
        const GaussMarkovModel m = random_stable_model(rng, 2, 0.6);
        Eigen::VectorXd g(3);
        g << rng.normal(), rng.normal(), rng.normal();
        const Eigen::VectorXd h = Eigen::VectorXd::Constant(2, 1.0);
        const QcqpProblem p =
            build_qcqp(m, g, 1.0, 2, h, Eigen::VectorXd::Constant(2, 5.0));
        const Eigen::VectorXd b_star = solve_qcqp(p, 1e-10);
        const GridMin grid = grid_min_qcqp_2d(p, 801);
        const bool ok = qcqp_objective(p, b_star) <= grid.value + 1e-4;
        check("constrained quadratic vs grid", ok,
              "solver " + fmt_g17(qcqp_objective(p, b_star)) + " grid " +
                  fmt_g17(grid.value));
    }
    {   // alternating-minimization descent
        const GaussMarkovModel m = make_iid_model(0.9, 10);
        const Eigen::VectorXd h = channel_s2(10);
        const Eigen::VectorXd P = Eigen::VectorXd::Constant(10, 10.0);
        const AltMinTrace t = alternating_minimization(
            m, h, P, 1.0, 4, 50, full_power_scaling(m, h, P));
        bool ok = true;
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& r : t.rounds) {
            if (r.cmse_after_g > prev + 1e-9 || r.cmse_after_b > r.cmse_after_g + 1e-9) {
                ok = false;
            }
            prev = r.cmse_after_b;
        }
        check("alternating-minimization descent", ok, "");
    }
    return all_ok;
}

} // namespace aircomp
