// Kalman-filter estimator for the sum of a Gauss-Markov state observed
// through a scalar noisy linear measurement y_t = b^T x_t + z_t.
#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aircomp/channel.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/linalg.hpp"
#include "aircomp/signal_model.hpp"

namespace aircomp {

/// Filter state after t observations. M is the error covariance of x_hat,
/// kept symmetric PSD (eigenvalues below -1e-10 are rejected, tiny negatives clipped).
struct KalmanState {
    Eigen::VectorXd x_hat;  ///< Conditional-mean estimate of x_t.
    Eigen::MatrixXd M;      ///< Error covariance Cov(x_t - x_hat).
    long t = 0;             ///< Number of observations incorporated.
};

/// Stationary prior: x_hat = 0, M = V_x. Its prediction step maps to itself,
/// so the first update runs the same predict-correct as every later one.
inline KalmanState kf_init(const GaussMarkovModel& model) {
    KalmanState s;
    s.x_hat = Eigen::VectorXd::Zero(model.dim);
    s.M = model.V_x;
    s.t = 0;
    return s;
}

/// Sum estimate chi_t = 1^T x_hat.
inline double estimate_sum(const KalmanState& state) {
    return state.x_hat.sum();
}

/// Theoretical mean-square error of the sum estimate: 1^T M 1.
inline double kf_cmse(const KalmanState& state) {
    return state.M.sum();
}

/**
 * @brief Incorporate one observation: predict through the model, then correct.
 *
 * Prediction: x_hat <- A x_hat, M_pred = A M A^T + V_w.
 * Gain: gain = M_pred b / (sigma_z2 + b^T M_pred b).
 * Correction: x_hat <- x_hat + gain (y - b^T x_hat), M = (I - gain b^T) M_pred.
 *
 * Pure: the input state is untouched, the advanced state is returned.
 *
 * @throws ValidityError if sigma_z2 <= 0 (the gain denominator must be positive).
 * @throws DimensionError on state/model/scaling shape mismatch.
 */
inline KalmanState kf_update(const KalmanState& state, const GaussMarkovModel& model,
                             const EffectiveScaling& b, double sigma_z2, double y_t) {
    if (!(sigma_z2 > 0.0)) {
        throw ValidityError("kf_update: sigma_z2 must be > 0, got " +
                            std::to_string(sigma_z2));
    }
    if (state.x_hat.size() != model.dim || state.M.rows() != model.dim ||
        b.b.size() != model.dim) {
        throw DimensionError("kf_update: state, model, and scaling dimensions differ");
    }

    KalmanState next;
    next.t = state.t + 1;

    const Eigen::VectorXd x_pred = model.A * state.x_hat;
    const Eigen::MatrixXd M_pred =
        symmetrize(model.A * state.M * model.A.transpose() + model.V_w);

    const Eigen::VectorXd Mb = M_pred * b.b;
    const double denom = sigma_z2 + b.b.dot(Mb);
    const Eigen::VectorXd gain = Mb / denom;

    next.x_hat = x_pred + gain * (y_t - b.b.dot(x_pred));
    Eigen::MatrixXd M = symmetrize(M_pred - gain * Mb.transpose());
    if (min_eigenvalue_sym(M) < 0.0) {
        M = psd_clip(M, kPsdSlack, "kf_update error covariance");
    }
    next.M = M;
    return next;
}

/**
 * @brief Fixed point of the error-covariance recursion for time-invariant b.
 *
 * Iterates M <- (I - gain b^T)(A M A^T + V_w) from M = V_x until successive
 * iterates differ by at most tol in Frobenius norm.
 *
 * @throws ValidityError if sigma_z2 <= 0 or tol <= 0.
 * @throws ConvergenceError if 10^6 iterations do not reach tol.
 */
inline Eigen::MatrixXd steady_state_error(const GaussMarkovModel& model,
                                          const EffectiveScaling& b, double sigma_z2,
                                          double tol = 1e-12) {
    if (!(sigma_z2 > 0.0)) {
        throw ValidityError("steady_state_error: sigma_z2 must be > 0");
    }
    if (!(tol > 0.0)) {
        throw ValidityError("steady_state_error: tol must be > 0");
    }
    if (b.b.size() != model.dim) {
        throw DimensionError("steady_state_error: scaling dimension does not match model");
    }
    Eigen::MatrixXd M = model.V_x;
    for (long it = 0; it < 1000000; ++it) {
        const Eigen::MatrixXd M_pred =
            symmetrize(model.A * M * model.A.transpose() + model.V_w);
        const Eigen::VectorXd Mb = M_pred * b.b;
        const Eigen::VectorXd gain = Mb / (sigma_z2 + b.b.dot(Mb));
        Eigen::MatrixXd next = symmetrize(M_pred - gain * Mb.transpose());
        const double step = (next - M).norm();
        M.swap(next);
        if (step <= tol) {
            return psd_clip(M, kPsdSlack, "steady-state error covariance");
        }
    }
    throw ConvergenceError("steady_state_error: no fixed point within 10^6 iterations");
}

/// Precomputed gain sequence for a fixed b. The covariance recursion does not
/// depend on the data, so Monte Carlo trajectories can replay gains in O(K^2)
/// per step instead of re-deriving covariances.
struct KalmanSchedule {
    std::vector<Eigen::VectorXd> gain;  ///< gain[s] applied to observation s.
    std::vector<double> cmse;           ///< 1^T M 1 after observation s.
};

inline KalmanSchedule kf_gain_schedule(const GaussMarkovModel& model,
                                       const EffectiveScaling& b, double sigma_z2,
                                       long steps) {
    if (!(sigma_z2 > 0.0)) {
        throw ValidityError("kf_gain_schedule: sigma_z2 must be > 0");
    }
    if (b.b.size() != model.dim) {
        throw DimensionError("kf_gain_schedule: scaling dimension does not match model");
    }
    KalmanSchedule sched;
    sched.gain.reserve(static_cast<std::size_t>(steps));
    sched.cmse.reserve(static_cast<std::size_t>(steps));
    Eigen::MatrixXd M = model.V_x;
    for (long s = 0; s < steps; ++s) {
        const Eigen::MatrixXd M_pred =
            symmetrize(model.A * M * model.A.transpose() + model.V_w);
        const Eigen::VectorXd Mb = M_pred * b.b;
        const Eigen::VectorXd gain = Mb / (sigma_z2 + b.b.dot(Mb));
        M = symmetrize(M_pred - gain * Mb.transpose());
        sched.gain.push_back(gain);
        sched.cmse.push_back(M.sum());
    }
    return sched;
}

} // namespace aircomp
