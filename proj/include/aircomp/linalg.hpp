// Small dense linear-algebra helpers used across the library.
#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "aircomp/errors.hpp"

namespace aircomp {

/// Eigenvalue slack when validating user-supplied covariances.
inline constexpr double kPsdSlack = 1e-10;

inline bool is_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    return m.allFinite();
}

/**
 * @brief Largest absolute eigenvalue of a square matrix.
 *
 * @throws DimensionError if A is not square.
 * @throws ValidityError if A has non-finite entries.
 */
inline double spectral_radius(const Eigen::Ref<const Eigen::MatrixXd>& A) {
    if (A.rows() != A.cols() || A.rows() == 0) {
        throw DimensionError("spectral_radius: matrix must be square and non-empty");
    }
    if (!is_finite(A)) {
        throw ValidityError("spectral_radius: matrix has non-finite entries");
    }
    if (A.rows() == 1) return std::abs(A(0, 0));
    return A.eigenvalues().cwiseAbs().maxCoeff();
}

/// (M + M^T) / 2
inline Eigen::MatrixXd symmetrize(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    return 0.5 * (M + M.transpose());
}

/// Minimum eigenvalue of a symmetric matrix.
inline double min_eigenvalue_sym(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/**
 * @brief Validate a symmetric PSD matrix and clip tiny negative eigenvalues to zero.
 *
 * Eigenvalues down to -slack are treated as rounding and clipped; anything
 * below that is rejected.
 *
 * @throws ValidityError if M is not symmetric PSD within the slack.
 */
inline Eigen::MatrixXd psd_clip(const Eigen::Ref<const Eigen::MatrixXd>& M,
                                double slack = kPsdSlack,
                                const std::string& what = "matrix") {
    if (M.rows() != M.cols()) {
        throw DimensionError("psd_clip: " + what + " must be square");
    }
    if (!is_finite(M)) {
        throw ValidityError("psd_clip: " + what + " has non-finite entries");
    }
    const Eigen::MatrixXd S = symmetrize(M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const Eigen::VectorXd& lam = es.eigenvalues();
    if (lam.minCoeff() < -slack) {
        throw ValidityError(what + " is not positive semi-definite (min eigenvalue " +
                            std::to_string(lam.minCoeff()) + ")");
    }
    if (lam.minCoeff() >= 0.0) return S;
    const Eigen::VectorXd clipped = lam.cwiseMax(0.0);
    return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

/// Square-root factor S with S*S^T = M for symmetric PSD M (negative eigenvalues clip to 0).
/// Handles rank-deficient M, which a Cholesky factorization would reject.
inline Eigen::MatrixXd psd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(M));
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal();
}

/**
 * @brief Unique PSD solution of  A V A^T - V + V_w = 0  for a stable A.
 *
 * Fixed-point iteration V <- A V A^T + V_w starting from V = V_w. The map is
 * a contraction for rho(A) < 1, so convergence is guaranteed; iteration stops
 * once the update step drops to `step_tol` in Frobenius norm.
 *
 * @throws InstabilityError if rho(A) >= 1.
 * @throws ValidityError if V_w is not symmetric PSD (within kPsdSlack).
 * @throws ConvergenceError if the iteration cap is hit.
 */
inline Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                               const Eigen::Ref<const Eigen::MatrixXd>& V_w,
                                               double step_tol = 1e-12,
                                               long max_iter = 1000000) {
    if (A.rows() != A.cols()) {
        throw DimensionError("solve_discrete_lyapunov: A must be square");
    }
    if (V_w.rows() != A.rows() || V_w.cols() != A.cols()) {
        throw DimensionError("solve_discrete_lyapunov: V_w must match A");
    }
    const double rho = spectral_radius(A);
    if (rho >= 1.0) {
        throw InstabilityError("solve_discrete_lyapunov: spectral radius " +
                               std::to_string(rho) + " >= 1, no stationary solution");
    }
    const Eigen::MatrixXd Q = psd_clip(V_w, kPsdSlack, "V_w");

    Eigen::MatrixXd V = Q;
    for (long it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd next = A * V * A.transpose() + Q;
        next = symmetrize(next);
        const double step = (next - V).norm();
        V = next;
        if (step <= step_tol) return V;
    }
    throw ConvergenceError("solve_discrete_lyapunov: no convergence within iteration cap");
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration_max_eig(const Eigen::Ref<const Eigen::MatrixXd>& M,
                                      int max_iter = 500, double tol = 1e-12) {
    const Eigen::Index n = M.rows();
    if (n == 1) return M(0, 0);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = M * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        w /= norm;
        const double next = w.dot(M * w);
        const bool done = std::abs(next - lambda) <= tol * (1.0 + std::abs(next));
        v = w;
        lambda = next;
        if (done) break;
    }
    return lambda;
}

} // namespace aircomp
