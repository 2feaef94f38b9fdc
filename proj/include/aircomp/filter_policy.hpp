// Windowed linear-filter estimator of the state sum: given the last l+1
// received signals y_{t-l}..y_t, the estimate is chi_t = g^T y. Each window
// sample decomposes against the window-start state as
//   y_{t-l+i} = b^T A^i x_{t-l} + c_i,
//   c_i = z_{t-l+i} + sum_{m=1}^{i} b^T A^{i-m} w_{t-l+m-1},
// so the window obeys y = M x_{t-l} + c with known second-order statistics.
// Window entries, filter taps, and matrix rows are 0-based with entry i
// holding y_{t-l+i}; row i of M carries A^i (oldest sample pairs with A^0).
#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aircomp/channel.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/linalg.hpp"
#include "aircomp/signal_model.hpp"

namespace aircomp {

/**
 * @brief Complete second-order description of one windowed design.
 *
 * Built once per (model, b, sigma_z2, l); immutable afterwards and safe to
 * share across Monte Carlo workers.
 */
struct FilterDesign {
    long l = 0;               ///< Window covers l+1 received signals.
    Eigen::VectorXd g;        ///< Filter taps, length l+1.
    Eigen::MatrixXd M_obs;    ///< (l+1) x K, row i = b^T A^i.
    Eigen::MatrixXd V_c;      ///< (l+1) x (l+1) window-noise covariance, PD.
    std::vector<Eigen::MatrixXd> C;  ///< C[i-1] = E[c w_{t-i}^T], i = 1..l, each (l+1) x K.
    double cmse = 0.0;        ///< Closed-form mean-square error of g^T y - 1^T x_t.
};

/// The l+1 most recent received signals; entry i holds y_{t-l+i}.
struct ReceivedWindow {
    Eigen::VectorXd y;
    long t = 0;  ///< Time index of the newest sample; must be >= l.
};

/**
 * @brief Observation matrix of the stacked window: row i = b^T A^i, i = 0..l.
 *
 * Rows are produced by iterated right-multiplication v^T <- v^T A.
 */
inline Eigen::MatrixXd build_observation_matrix(const GaussMarkovModel& model,
                                                const EffectiveScaling& b, long l) {
    if (b.b.size() != model.dim) {
        throw DimensionError("build_observation_matrix: scaling dimension does not match model");
    }
    if (l < 0) {
        throw ValidityError("build_observation_matrix: l must be >= 0");
    }
    Eigen::MatrixXd M(l + 1, model.dim);
    Eigen::RowVectorXd row = b.b.transpose();
    M.row(0) = row;
    for (long i = 1; i <= l; ++i) {
        row = row * model.A;
        M.row(i) = row;
    }
    return M;
}

/**
 * @brief Covariance of the window-noise vector c.
 *
 * V_c = sigma_z2 * I + W where W_{ij} (1 <= i <= j) collects the process
 * noise shared by samples i and j:
 *   W_{ij} = b^T [ sum_{u=1}^{i} A^{i-u} V_w (A^{j-u})^T ] b,
 * and W has zero row/column 0 (the oldest sample carries channel noise only).
 * Evaluated through the row vectors m_i = b^T A^i as
 *   W_{ij} = sum_{u=1}^{i} m_{i-u} V_w m_{j-u}^T,
 * which costs O(l^3 K + l K^2) for the whole matrix.
 *
 * @throws ValidityError if sigma_z2 <= 0.
 */
inline Eigen::MatrixXd build_noise_covariance(const GaussMarkovModel& model,
                                              const EffectiveScaling& b, double sigma_z2,
                                              long l) {
    if (!(sigma_z2 > 0.0)) {
        throw ValidityError("build_noise_covariance: sigma_z2 must be > 0");
    }
    const Eigen::MatrixXd M = build_observation_matrix(model, b, l);
    // q[d] = V_w * (b^T A^d)^T; W_{ij} = sum over shared innovations of m . q.
    std::vector<Eigen::VectorXd> q(static_cast<std::size_t>(l + 1));
    for (long d = 0; d <= l; ++d) {
        q[static_cast<std::size_t>(d)] = model.V_w * M.row(d).transpose();
    }
    Eigen::MatrixXd V =
        sigma_z2 * Eigen::MatrixXd::Identity(l + 1, l + 1);
    for (long i = 1; i <= l; ++i) {
        for (long j = i; j <= l; ++j) {
            double acc = 0.0;
            for (long u = 1; u <= i; ++u) {
                acc += M.row(i - u).dot(q[static_cast<std::size_t>(j - u)]);
            }
            V(i, j) += acc;
            if (i != j) V(j, i) += acc;
        }
    }
    return V;
}

/**
 * @brief Cross-covariance C_i = E[c w_{t-i}^T] for i in 1..l.
 *
 * The first l+1-i rows are zero (those samples predate w_{t-i}); the
 * remaining rows are b^T A^0 V_w, ..., b^T A^{i-1} V_w in order.
 *
 * @throws ValidityError if i is outside 1..l.
 */
inline Eigen::MatrixXd build_cross_covariance(const GaussMarkovModel& model,
                                              const EffectiveScaling& b, long l, long i) {
    if (i < 1 || i > l) {
        throw ValidityError("build_cross_covariance: need 1 <= i <= l, got i = " +
                            std::to_string(i) + " with l = " + std::to_string(l));
    }
    const Eigen::MatrixXd M = build_observation_matrix(model, b, i - 1);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(l + 1, model.dim);
    for (long row = 0; row < i; ++row) {
        C.row(l + 1 - i + row) = M.row(row) * model.V_w;
    }
    return C;
}

namespace detail {

/// Powers-of-A images of the all-ones vector: result[d] = (A^T)^d 1, d = 0..l.
inline std::vector<Eigen::VectorXd> ones_through_powers(const GaussMarkovModel& model,
                                                        long l) {
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(l + 1));
    v[0] = Eigen::VectorXd::Ones(model.dim);
    for (long d = 1; d <= l; ++d) {
        v[static_cast<std::size_t>(d)] = model.A.transpose() * v[static_cast<std::size_t>(d - 1)];
    }
    return v;
}

} // namespace detail

/**
 * @brief Mean-square error of the estimate g^T y against the target 1^T x_t.
 *
 * Decomposing x_t = A^l x_{t-l} + sum_{i=1}^{l} A^{l-i} w_{t-i} and
 * y = M x_{t-l} + c, with x_{t-l} independent of every window noise, the
 * error expands into six exact terms:
 *   g^T M V_x M^T g - 2 g^T M V_x (A^l)^T 1 + 1^T A^l V_x (A^l)^T 1
 *   + g^T V_c g + sum_i 1^T A^{l-i} V_w (A^{l-i})^T 1
 *   - 2 g^T sum_i C_i (A^{i-1})^T 1
 * (C_i describes w_{t-i}, whose weight in the target 1^T x_t is A^{i-1}).
 * Tiny negative totals (>= -1e-10, rounding) clip to zero.
 */
inline double closed_form_cmse(const GaussMarkovModel& model, const EffectiveScaling& b,
                               const Eigen::VectorXd& g, double sigma_z2, long l) {
    if (g.size() != l + 1) {
        throw DimensionError("closed_form_cmse: g must have length l+1");
    }
    const Eigen::MatrixXd M = build_observation_matrix(model, b, l);
    const Eigen::MatrixXd V_c = build_noise_covariance(model, b, sigma_z2, l);
    const auto pow1 = detail::ones_through_powers(model, l);
    const Eigen::VectorXd& Al_1 = pow1[static_cast<std::size_t>(l)];

    const Eigen::VectorXd Mg = M.transpose() * g;
    double value = Mg.dot(model.V_x * Mg);
    value -= 2.0 * Mg.dot(model.V_x * Al_1);
    value += Al_1.dot(model.V_x * Al_1);
    value += g.dot(V_c * g);
    for (long i = 1; i <= l; ++i) {
        const Eigen::VectorXd& v = pow1[static_cast<std::size_t>(l - i)];
        value += v.dot(model.V_w * v);
        const Eigen::MatrixXd C_i = build_cross_covariance(model, b, l, i);
        value -= 2.0 * g.dot(C_i * pow1[static_cast<std::size_t>(i - 1)]);
    }
    if (value < -1e-10) {
        throw ValidityError("closed_form_cmse: negative value " + std::to_string(value));
    }
    return value < 0.0 ? 0.0 : value;
}

/// Residual of the optimality condition (M V_x M^T + V_c) g = rhs at the
/// given g, where rhs is the cross-covariance of the window with the target.
inline double stationarity_residual(const GaussMarkovModel& model, const EffectiveScaling& b,
                                    const Eigen::VectorXd& g, double sigma_z2, long l) {
    if (g.size() != l + 1) {
        throw DimensionError("stationarity_residual: g must have length l+1");
    }
    const Eigen::MatrixXd M = build_observation_matrix(model, b, l);
    const Eigen::MatrixXd V_c = build_noise_covariance(model, b, sigma_z2, l);
    const auto pow1 = detail::ones_through_powers(model, l);

    Eigen::VectorXd rhs = M * (model.V_x * pow1[static_cast<std::size_t>(l)]);
    for (long i = 1; i <= l; ++i) {
        rhs += build_cross_covariance(model, b, l, i) * pow1[static_cast<std::size_t>(i - 1)];
    }
    return ((M * model.V_x * M.transpose() + V_c) * g - rhs).norm();
}

/**
 * @brief Minimum-mean-square-error filter taps for the window model.
 *
 * Solves (M V_x M^T + V_c) g = M V_x (A^l)^T 1 + sum_i C_i (A^{l-i})^T 1 by
 * LDLT factorization; the system matrix dominates sigma_z2 * I, so it is
 * always positive definite. The returned design carries the closed-form
 * error value and is verified to satisfy the optimality condition to
 * 1e-8 * (1 + ||g||).
 *
 * @throws ConvergenceError if the solve fails the stationarity check.
 */
inline FilterDesign optimal_filter(const GaussMarkovModel& model, const EffectiveScaling& b,
                                   double sigma_z2, long l) {
    if (!(sigma_z2 > 0.0)) {
        throw ValidityError("optimal_filter: sigma_z2 must be > 0");
    }
    FilterDesign d;
    d.l = l;
    d.M_obs = build_observation_matrix(model, b, l);
    d.V_c = build_noise_covariance(model, b, sigma_z2, l);
    d.C.reserve(static_cast<std::size_t>(l));
    for (long i = 1; i <= l; ++i) {
        d.C.push_back(build_cross_covariance(model, b, l, i));
    }

    const auto pow1 = detail::ones_through_powers(model, l);
    Eigen::VectorXd rhs = d.M_obs * (model.V_x * pow1[static_cast<std::size_t>(l)]);
    for (long i = 1; i <= l; ++i) {
        rhs += d.C[static_cast<std::size_t>(i - 1)] * pow1[static_cast<std::size_t>(i - 1)];
    }
    const Eigen::MatrixXd S =
        symmetrize(d.M_obs * model.V_x * d.M_obs.transpose() + d.V_c);
    d.g = S.ldlt().solve(rhs);

    const double residual = (S * d.g - rhs).norm();
    if (!(residual <= 1e-8 * (1.0 + d.g.norm()))) {
        throw ConvergenceError("optimal_filter: stationarity residual " +
                               std::to_string(residual) + " too large");
    }
    d.cmse = closed_form_cmse(model, b, d.g, sigma_z2, l);
    return d;
}

/// chi_t = g^T y over the stored window.
inline double apply_filter(const FilterDesign& design, const ReceivedWindow& window) {
    if (window.y.size() != design.g.size()) {
        throw DimensionError("apply_filter: window length " + std::to_string(window.y.size()) +
                             " does not match filter length " + std::to_string(design.g.size()));
    }
    return design.g.dot(window.y);
}

} // namespace aircomp
