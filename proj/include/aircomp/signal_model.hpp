// Linear Gauss-Markov signal model and its stationary statistics.
#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "aircomp/errors.hpp"
#include "aircomp/linalg.hpp"
#include "aircomp/random.hpp"

namespace aircomp {

/**
 * @brief First-order vector autoregression  x_{t+1} = A x_t + w_t.
 *
 * The innovation w_t is zero-mean Gaussian with covariance V_w, independent
 * across time. For a stable A the state admits a stationary distribution
 * N(0, V_x) with V_x the unique solution of  A V_x A^T - V_x + V_w = 0.
 *
 * Instances are immutable after construction; build them with make_model or
 * make_iid_model so the stationarity invariants are established once.
 */
struct GaussMarkovModel {
    Eigen::Index dim = 0;   ///< State dimension K.
    Eigen::MatrixXd A;      ///< Transition matrix, spectral radius < 1.
    Eigen::MatrixXd V_w;    ///< Innovation covariance, symmetric PSD.
    Eigen::MatrixXd V_x;    ///< Stationary state covariance.
    Eigen::MatrixXd sqrt_V_w;  ///< Factor S with S S^T = V_w, for sampling.
    Eigen::MatrixXd sqrt_V_x;  ///< Factor S with S S^T = V_x, for sampling.
};

/// State of one simulated trajectory.
struct SignalState {
    long t = 0;          ///< Number of transitions applied since the draw.
    Eigen::VectorXd x;   ///< Current state vector.
};

/**
 * @brief Validate (A, V_w) and precompute the stationary covariance.
 *
 * V_w may carry eigenvalues down to -1e-10 from upstream rounding; they are
 * clipped to zero. The computed V_x is checked against the defining equation
 * with a residual bound scaled by ||V_w||_F.
 *
 * @throws DimensionError on shape mismatch.
 * @throws InstabilityError if rho(A) >= 1.
 * @throws ValidityError if V_w is asymmetric beyond 1e-10 or indefinite.
 */
inline GaussMarkovModel make_model(Eigen::MatrixXd A, Eigen::MatrixXd V_w) {
    if (A.rows() != A.cols() || A.rows() == 0) {
        throw DimensionError("make_model: A must be square and non-empty");
    }
    if (V_w.rows() != A.rows() || V_w.cols() != A.cols()) {
        throw DimensionError("make_model: V_w must have the same shape as A");
    }
    if (!is_finite(A) || !is_finite(V_w)) {
        throw ValidityError("make_model: A and V_w must be finite");
    }
    if ((V_w - V_w.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw ValidityError("make_model: V_w must be symmetric");
    }

    GaussMarkovModel m;
    m.dim = A.rows();
    m.A = std::move(A);
    m.V_w = psd_clip(V_w, kPsdSlack, "V_w");
    m.V_x = solve_discrete_lyapunov(m.A, m.V_w);

    const double residual = (m.A * m.V_x * m.A.transpose() - m.V_x + m.V_w).norm();
    if (residual > 1e-10 * (1.0 + m.V_w.norm())) {
        throw ConvergenceError("make_model: stationary covariance residual " +
                               std::to_string(residual) + " too large");
    }
    m.sqrt_V_w = psd_sqrt(m.V_w);
    m.sqrt_V_x = psd_sqrt(m.V_x);
    return m;
}

/**
 * @brief Model with A = alpha*I and unit stationary covariance.
 *
 * Choosing V_w = (1 - alpha^2) I makes V_x = I exactly, so every component
 * is an independent AR(1) process with unit marginal variance and one-step
 * correlation alpha.
 *
 * @throws InstabilityError unless |alpha| < 1; ValidityError unless K >= 1.
 */
inline GaussMarkovModel make_iid_model(double alpha, Eigen::Index K) {
    if (!(std::abs(alpha) < 1.0)) {
        throw InstabilityError("make_iid_model: |alpha| must be < 1, got " +
                               std::to_string(alpha));
    }
    if (K < 1) {
        throw ValidityError("make_iid_model: K must be >= 1");
    }
    const Eigen::MatrixXd A = alpha * Eigen::MatrixXd::Identity(K, K);
    const Eigen::MatrixXd V_w = (1.0 - alpha * alpha) * Eigen::MatrixXd::Identity(K, K);
    return make_model(A, V_w);
}

/// Draw x ~ N(0, V_x), the stationary distribution.
inline Eigen::VectorXd sample_stationary(const GaussMarkovModel& m, RngStream& rng) {
    return m.sqrt_V_x * rng.normal_vector(m.dim);
}

/// Initialize a trajectory from the stationary distribution.
inline SignalState init_state(const GaussMarkovModel& m, RngStream& rng) {
    SignalState s;
    s.t = 0;
    s.x = sample_stationary(m, rng);
    return s;
}

/// Advance one step: x <- A x + w, w ~ N(0, V_w).
inline void step(const GaussMarkovModel& m, SignalState& s, RngStream& rng) {
    if (s.x.size() != m.dim) {
        throw DimensionError("step: state dimension does not match model");
    }
    s.x = m.A * s.x + m.sqrt_V_w * rng.normal_vector(m.dim);
    s.t += 1;
}

} // namespace aircomp
