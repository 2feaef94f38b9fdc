// Transmit-scaling optimization: the windowed-policy error as a quadratic in
// the effective scaling b, per-sensor average-power box constraints, a
// projected-gradient solver, and alternating minimization over (g, b).
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aircomp/channel.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/filter_policy.hpp"
#include "aircomp/linalg.hpp"
#include "aircomp/signal_model.hpp"

namespace aircomp {

/// How the per-sensor bound on b_k^2 is scaled. WithH2 uses h_k^2 P_k /
/// Var(x_k), consistent with b absorbing the channel coefficient; PaperEq28
/// drops the h_k^2 factor. The choice is reported alongside results.
enum class PowerBoundRule { WithH2, PaperEq28 };

inline const char* power_bound_name(PowerBoundRule rule) {
    return rule == PowerBoundRule::WithH2 ? "with_h2" : "paper_eq28";
}

/// Box constraint b_k^2 <= u[k]. s[k] = sqrt(u[k]) is nudged down so that
/// s[k]*s[k] <= u[k] holds exactly in floating point; projecting onto
/// [-s, s] therefore never violates the squared bound. Sensors whose signal
/// variance is zero carry no constraint (u = s = +inf, flagged).
struct PowerBounds {
    Eigen::VectorXd u;
    Eigen::VectorXd s;
    std::vector<bool> unbounded;
};

inline PowerBounds power_bounds(const GaussMarkovModel& model, const Eigen::VectorXd& h,
                                const Eigen::VectorXd& P,
                                PowerBoundRule rule = PowerBoundRule::WithH2) {
    if (h.size() != model.dim || P.size() != model.dim) {
        throw DimensionError("power_bounds: h and P must have length K");
    }
    if (!h.allFinite()) {
        throw ValidityError("power_bounds: h must be finite");
    }
    PowerBounds out;
    out.u.resize(model.dim);
    out.s.resize(model.dim);
    out.unbounded.assign(static_cast<std::size_t>(model.dim), false);
    for (Eigen::Index k = 0; k < model.dim; ++k) {
        if (!(P(k) > 0.0)) {
            throw ValidityError("power_bounds: P[" + std::to_string(k) + "] must be > 0");
        }
        const double var_xk = model.V_x(k, k);
        if (var_xk <= 0.0) {
            out.u(k) = std::numeric_limits<double>::infinity();
            out.s(k) = std::numeric_limits<double>::infinity();
            out.unbounded[static_cast<std::size_t>(k)] = true;
            continue;
        }
        const double scale = rule == PowerBoundRule::WithH2 ? h(k) * h(k) : 1.0;
        out.u(k) = scale * P(k) / var_xk;
        double s = std::sqrt(out.u(k));
        while (s * s > out.u(k)) s = std::nextafter(s, 0.0);
        out.s(k) = s;
    }
    return out;
}

/// Minimization of b^T Q b - 2 b^T r + constant over the box b_k^2 <= u_k.
struct QcqpProblem {
    Eigen::MatrixXd Q;        ///< Symmetric PSD (Gram-type sums).
    Eigen::VectorXd r;
    double constant = 0.0;
    PowerBounds bounds;
};

inline double qcqp_objective(const QcqpProblem& p, const Eigen::VectorXd& b) {
    return b.dot(p.Q * b) - 2.0 * b.dot(p.r) + p.constant;
}

/// Clamp each coordinate into [-s_k, s_k].
inline Eigen::VectorXd project_to_box(const PowerBounds& bounds, Eigen::VectorXd b) {
    for (Eigen::Index k = 0; k < b.size(); ++k) {
        const double s = bounds.s(k);
        if (b(k) > s) b(k) = s;
        else if (b(k) < -s) b(k) = -s;
    }
    return b;
}

/**
 * @brief Express the windowed-policy error as a quadratic in b for fixed g.
 *
 * Writing S_u = sum_{i=u}^{l} g_i A^{i-u} (so S_0 weights the window-start
 * state and S_u, u >= 1, weights innovation w_{t-l+u-1}), the estimate is
 * g^T y = b^T [S_0 x_{t-l} + sum_u S_u w_{t-l+u-1}] + channel noise, and the
 * error against 1^T x_t expands into
 *   Q = S_0 V_x S_0^T + sum_{u=1}^{l} S_u V_w S_u^T,
 *   r = S_0 V_x (A^l)^T 1 + sum_{i=1}^{l} S_i V_w (A^{l-i})^T 1,
 *   constant = 1^T A^l V_x (A^l)^T 1 + sigma_z2 g^T g
 *              + sum_{i=1}^{l} 1^T A^{l-i} V_w (A^{l-i})^T 1.
 * Both quadratic blocks are Gram sums, so Q is symmetric PSD by construction.
 *
 * @throws ValidityError if sigma_z2 <= 0 or any P_k <= 0.
 * @throws DimensionError on shape mismatch.
 */
inline QcqpProblem build_qcqp(const GaussMarkovModel& model, const Eigen::VectorXd& g,
                              double sigma_z2, long l, const Eigen::VectorXd& h,
                              const Eigen::VectorXd& P,
                              PowerBoundRule rule = PowerBoundRule::WithH2) {
    if (!(sigma_z2 > 0.0)) {
        throw ValidityError("build_qcqp: sigma_z2 must be > 0");
    }
    if (g.size() != l + 1) {
        throw DimensionError("build_qcqp: g must have length l+1");
    }
    const Eigen::Index K = model.dim;

    // S[u] by the backward recursion S_l = g_l I, S_u = g_u I + A S_{u+1}.
    std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(l + 1));
    S[static_cast<std::size_t>(l)] = g(l) * Eigen::MatrixXd::Identity(K, K);
    for (long u = l - 1; u >= 0; --u) {
        S[static_cast<std::size_t>(u)] =
            g(u) * Eigen::MatrixXd::Identity(K, K) + model.A * S[static_cast<std::size_t>(u + 1)];
    }
    const auto pow1 = detail::ones_through_powers(model, l);

    QcqpProblem p;
    p.Q = symmetrize(S[0] * model.V_x * S[0].transpose());
    p.r = S[0] * (model.V_x * pow1[static_cast<std::size_t>(l)]);
    p.constant = pow1[static_cast<std::size_t>(l)].dot(model.V_x * pow1[static_cast<std::size_t>(l)]) +
                 sigma_z2 * g.squaredNorm();
    for (long i = 1; i <= l; ++i) {
        const Eigen::MatrixXd& Si = S[static_cast<std::size_t>(i)];
        const Eigen::VectorXd& v = pow1[static_cast<std::size_t>(l - i)];
        p.Q += symmetrize(Si * model.V_w * Si.transpose());
        p.r += Si * (model.V_w * v);
        p.constant += v.dot(model.V_w * v);
    }
    p.bounds = power_bounds(model, h, P, rule);
    return p;
}

/**
 * @brief Minimize the box-constrained convex quadratic by projected gradient.
 *
 * Candidate starts: the warm start (if given), the solution of Q b = r
 * projected into the box, and zero. Descent runs from the best candidate
 * with fixed step 1/L, L = 1.1 * lambda_max(2Q), which never increases the
 * objective; with a warm start the result is therefore no worse than it.
 *
 * Termination is a per-coordinate first-order check with slack
 * tol * (1 + ||grad||): interior coordinates need a small partial
 * derivative, coordinates at +s_k need the partial <= slack (no inward
 * improvement), mirrored at -s_k.
 *
 * @throws ValidityError on non-finite problem data.
 * @throws ConvergenceError if the check is not met within 500000 iterations.
 */
inline Eigen::VectorXd solve_qcqp(const QcqpProblem& p, double tol = 1e-10,
                                  const Eigen::VectorXd& warm_start = Eigen::VectorXd()) {
    const Eigen::Index K = p.Q.rows();
    if (!is_finite(p.Q) || !p.r.allFinite() || !std::isfinite(p.constant)) {
        throw ValidityError("solve_qcqp: problem data must be finite");
    }
    if (p.Q.cols() != K || p.r.size() != K || p.bounds.s.size() != K) {
        throw DimensionError("solve_qcqp: inconsistent problem dimensions");
    }
    if (!(tol > 0.0)) {
        throw ValidityError("solve_qcqp: tol must be > 0");
    }

    Eigen::VectorXd best = project_to_box(p.bounds, Eigen::VectorXd::Zero(K));
    double best_f = qcqp_objective(p, best);
    auto consider = [&](const Eigen::VectorXd& cand) {
        const Eigen::VectorXd c = project_to_box(p.bounds, cand);
        const double f = qcqp_objective(p, c);
        if (f < best_f) {
            best = c;
            best_f = f;
        }
    };
    if (warm_start.size() == K) consider(warm_start);
    consider(p.Q.ldlt().solve(p.r));

    double L = 1.1 * power_iteration_max_eig(2.0 * p.Q);
    if (!(L > 0.0)) L = 1.0;  // Q = 0: one projected step lands on the corner minimizer.
    const double step = 1.0 / L;

    Eigen::VectorXd b = best;
    for (long it = 0; it < 500000; ++it) {
        const Eigen::VectorXd grad = 2.0 * (p.Q * b - p.r);
        const double slack = tol * (1.0 + grad.norm());
        bool stationary = true;
        for (Eigen::Index k = 0; k < K; ++k) {
            const double s = p.bounds.s(k);
            if (b(k) >= s) {
                if (grad(k) > slack) { stationary = false; break; }
            } else if (b(k) <= -s) {
                if (grad(k) < -slack) { stationary = false; break; }
            } else if (std::abs(grad(k)) > slack) {
                stationary = false;
                break;
            }
        }
        if (stationary) return b;
        b = project_to_box(p.bounds, b - step * grad);
    }
    throw ConvergenceError("solve_qcqp: projected gradient did not reach stationarity");
}

/// Full-power start: b_k at its bound, zero where the sensor is unconstrained.
inline EffectiveScaling full_power_scaling(const GaussMarkovModel& model,
                                           const Eigen::VectorXd& h, const Eigen::VectorXd& P,
                                           PowerBoundRule rule = PowerBoundRule::WithH2) {
    const PowerBounds bounds = power_bounds(model, h, P, rule);
    Eigen::VectorXd b(model.dim);
    for (Eigen::Index k = 0; k < model.dim; ++k) {
        b(k) = bounds.unbounded[static_cast<std::size_t>(k)] ? 0.0 : bounds.s(k);
    }
    return EffectiveScaling{b};
}

/// One round of coordinate descent over (g, b) with the error after each half-step.
struct AltMinRound {
    long round = 0;
    double cmse_after_g = 0.0;
    double cmse_after_b = 0.0;
};

/// Full record of an alternating-minimization run.
struct AltMinTrace {
    std::vector<AltMinRound> rounds;
    Eigen::VectorXd g;        ///< Final filter taps.
    Eigen::VectorXd b;        ///< Final effective scaling.
    double cmse = 0.0;        ///< Error after the last half-step.
    bool converged = false;   ///< Early stop on relative change < rel_stop.
};

/**
 * @brief Alternate closed-form filter design with scaling optimization.
 *
 * Each round solves for g in closed form at the current b, then re-optimizes
 * b with the filter frozen, warm-starting the quadratic solver at the
 * incumbent so every half-step is a descent step. Stops early once the
 * error changes by less than rel_stop relatively between successive rounds.
 *
 * @throws ValidityError if rounds < 1 or the init has the wrong length.
 */
inline AltMinTrace alternating_minimization(const GaussMarkovModel& model,
                                            const Eigen::VectorXd& h, const Eigen::VectorXd& P,
                                            double sigma_z2, long l, long rounds,
                                            const EffectiveScaling& init,
                                            PowerBoundRule rule = PowerBoundRule::WithH2,
                                            double solver_tol = 1e-10,
                                            double rel_stop = 1e-8) {
    if (rounds < 1) {
        throw ValidityError("alternating_minimization: rounds must be >= 1");
    }
    if (init.b.size() != model.dim) {
        throw DimensionError("alternating_minimization: init has wrong length");
    }
    const PowerBounds bounds = power_bounds(model, h, P, rule);
    Eigen::VectorXd b = project_to_box(bounds, init.b);

    AltMinTrace trace;
    trace.rounds.reserve(static_cast<std::size_t>(rounds));
    double prev_cmse = std::numeric_limits<double>::infinity();
    Eigen::VectorXd g;
    for (long round = 1; round <= rounds; ++round) {
        const FilterDesign design = optimal_filter(model, EffectiveScaling{b}, sigma_z2, l);
        g = design.g;

        const QcqpProblem qcqp = build_qcqp(model, g, sigma_z2, l, h, P, rule);
        b = solve_qcqp(qcqp, solver_tol, b);
        const double cmse_b = closed_form_cmse(model, EffectiveScaling{b}, g, sigma_z2, l);

        trace.rounds.push_back(AltMinRound{round, design.cmse, cmse_b});
        trace.cmse = cmse_b;
        if (std::isfinite(prev_cmse)) {
            const double rel = std::abs(prev_cmse - cmse_b) / std::max(prev_cmse, 1e-300);
            if (rel < rel_stop) {
                trace.converged = true;
                break;
            }
        }
        prev_cmse = cmse_b;
    }
    trace.g = g;
    trace.b = b;
    return trace;
}

} // namespace aircomp
