// Scaling-optimization tests: power bounds, the error-in-b quadratic form,
// the box-constrained solver, and alternating minimization.
#include <cmath>
#include <gtest/gtest.h>
#include <vector>

#include "aircomp/power_opt.hpp"
#include "aircomp/experiments.hpp"
#include "aircomp/oracles.hpp"

using namespace aircomp;

namespace {

QcqpProblem manual_problem(const Eigen::MatrixXd& Q, const Eigen::VectorXd& r,
                           double constant, const Eigen::VectorXd& u) {
    QcqpProblem p;
    p.Q = Q;
    p.r = r;
    p.constant = constant;
    p.bounds.u = u;
    p.bounds.s = u.cwiseSqrt();
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        while (p.bounds.s(k) * p.bounds.s(k) > u(k)) {
            p.bounds.s(k) = std::nextafter(p.bounds.s(k), 0.0);
        }
    }
    p.bounds.unbounded.assign(static_cast<std::size_t>(u.size()), false);
    return p;
}

} // namespace

// =============================================================================
// Power bounds
// =============================================================================

TEST(PowerBounds, ChannelWeightedRule) {
    const GaussMarkovModel m = make_iid_model(0.9, 2);
    const Eigen::Vector2d h(2.0, 0.5), P(10.0, 40.0);
    const PowerBounds pb = power_bounds(m, h, P, PowerBoundRule::WithH2);
    EXPECT_NEAR(pb.u(0), 4.0 * 10.0 / m.V_x(0, 0), 1e-9);
    EXPECT_NEAR(pb.u(1), 0.25 * 40.0 / m.V_x(1, 1), 1e-9);
}

TEST(PowerBounds, PlainRuleDropsChannelGain) {
    const GaussMarkovModel m = make_iid_model(0.9, 2);
    const Eigen::Vector2d h(2.0, 0.5), P(10.0, 40.0);
    const PowerBounds pb = power_bounds(m, h, P, PowerBoundRule::PaperEq28);
    EXPECT_NEAR(pb.u(0), 10.0 / m.V_x(0, 0), 1e-9);
    EXPECT_NEAR(pb.u(1), 40.0 / m.V_x(1, 1), 1e-9);
}

TEST(PowerBounds, HalfWidthSquaredNeverExceedsBound) {
    RngStream rng(111);
    for (int trial = 0; trial < 20; ++trial) {
        const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
        Eigen::Vector3d h, P;
        for (int k = 0; k < 3; ++k) {
            h(k) = 0.05 + rng.uniform() * 2.0;
            P(k) = 0.1 + rng.uniform() * 20.0;
        }
        const PowerBounds pb = power_bounds(m, h, P);
        for (int k = 0; k < 3; ++k) {
            EXPECT_LE(pb.s(k) * pb.s(k), pb.u(k));  // exact feasibility at the corner
        }
    }
}

TEST(PowerBounds, DegenerateVarianceIsFlaggedUnbounded) {
    Eigen::Matrix2d V_w = Eigen::Matrix2d::Zero();
    V_w(1, 1) = 1.0;
    const GaussMarkovModel m = make_model(Eigen::Matrix2d::Zero(), V_w);
    const PowerBounds pb =
        power_bounds(m, Eigen::Vector2d::Ones(), Eigen::Vector2d::Constant(10.0));
    EXPECT_TRUE(pb.unbounded[0]);
    EXPECT_FALSE(pb.unbounded[1]);
    EXPECT_TRUE(std::isinf(pb.u(0)));
}

TEST(PowerBounds, RejectsNonPositivePower) {
    const GaussMarkovModel m = make_iid_model(0.9, 2);
    EXPECT_THROW(power_bounds(m, Eigen::Vector2d::Ones(), Eigen::Vector2d(1.0, 0.0)),
                 ValidityError);
}

// =============================================================================
// Quadratic form in b
// =============================================================================

TEST(BuildQcqp, ObjectiveMatchesClosedFormError) {
    RngStream rng(112);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index K = 2 + static_cast<Eigen::Index>(rng.uniform() * 3);
        const long l = static_cast<long>(rng.uniform() * 5);
        const GaussMarkovModel m = random_stable_model(rng, K, 0.75);
        const Eigen::VectorXd b = random_scaling(rng, K);
        Eigen::VectorXd g(l + 1);
        for (long i = 0; i <= l; ++i) g(i) = rng.normal();
        const QcqpProblem p = build_qcqp(m, g, 1.0, l, Eigen::VectorXd::Ones(K),
                                         Eigen::VectorXd::Constant(K, 10.0));
        const double direct = closed_form_cmse(m, EffectiveScaling{b}, g, 1.0, l);
        EXPECT_NEAR(qcqp_objective(p, b), direct, 1e-9 * (1.0 + std::abs(direct)));
    }
}

TEST(BuildQcqp, ZeroTapsGiveConstantProblem) {
    const GaussMarkovModel m = make_iid_model(0.9, 3);
    const QcqpProblem p = build_qcqp(m, Eigen::VectorXd::Zero(3), 1.0, 2,
                                     Eigen::Vector3d::Ones(),
                                     Eigen::Vector3d::Constant(10.0));
    EXPECT_LT(p.Q.norm(), 1e-14);
    EXPECT_LT(p.r.norm(), 1e-14);
    EXPECT_NEAR(p.constant, m.V_x.sum(), 1e-9);
}

TEST(BuildQcqp, ScalarSingleTapCoefficients) {
    // Objective reduces to g^2 v_x b^2 - 2 g v_x b + v_x + sz2 g^2.
    const double g_val = 1.7, sz2 = 0.6;
    const GaussMarkovModel m = make_iid_model(0.9, 1);
    const double v_x = m.V_x(0, 0);
    const QcqpProblem p =
        build_qcqp(m, Eigen::VectorXd::Constant(1, g_val), sz2, 0,
                   Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 10.0));
    EXPECT_NEAR(p.Q(0, 0), g_val * g_val * v_x, 1e-12);
    EXPECT_NEAR(p.r(0), g_val * v_x, 1e-12);
    EXPECT_NEAR(p.constant, v_x + sz2 * g_val * g_val, 1e-12);
}

TEST(BuildQcqp, QuadraticBlockIsPsd) {
    RngStream rng(113);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index K = 2 + static_cast<Eigen::Index>(rng.uniform() * 3);
        const long l = static_cast<long>(rng.uniform() * 5);
        const GaussMarkovModel m = random_stable_model(rng, K, 0.7);
        Eigen::VectorXd g(l + 1);
        for (long i = 0; i <= l; ++i) g(i) = rng.normal();
        const QcqpProblem p = build_qcqp(m, g, 1.0, l, Eigen::VectorXd::Ones(K),
                                         Eigen::VectorXd::Constant(K, 10.0));
        EXPECT_LT((p.Q - p.Q.transpose()).norm(), 1e-12);
        EXPECT_GE(min_eigenvalue_sym(p.Q), -1e-10);
    }
}

// =============================================================================
// Box-constrained solver
// =============================================================================

TEST(SolveQcqp, InteriorCaseMatchesLinearSolve) {
    RngStream rng(114);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd G(3, 3);
        for (Eigen::Index i = 0; i < 3; ++i) {
            for (Eigen::Index j = 0; j < 3; ++j) G(i, j) = rng.normal();
        }
        const Eigen::MatrixXd Q =
            G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(3, 3);
        Eigen::Vector3d r(rng.normal(), rng.normal(), rng.normal());
        // Bounds wide enough that the unconstrained optimum is interior.
        const QcqpProblem p =
            manual_problem(Q, r, 0.0, Eigen::Vector3d::Constant(1e6));
        const Eigen::VectorXd b_star = solve_qcqp(p, 1e-12);
        const Eigen::VectorXd b_ref = Q.ldlt().solve(r);
        EXPECT_LT((b_star - b_ref).norm(), 1e-8 * (1.0 + b_ref.norm()));
    }
}

TEST(SolveQcqp, ScalarClippedToBound) {
    // f(b) = b^2 - 4b has its minimum at b = 2; the box [-1, 1] clips to 1.
    const QcqpProblem p =
        manual_problem(Eigen::MatrixXd::Identity(1, 1),
                       Eigen::VectorXd::Constant(1, 2.0), 0.0,
                       Eigen::VectorXd::Ones(1));
    const Eigen::VectorXd b_star = solve_qcqp(p, 1e-12);
    EXPECT_NEAR(b_star(0), 1.0, 1e-12);
}

TEST(SolveQcqp, MatchesGridOracle) {
    RngStream rng(115);
    for (int trial = 0; trial < 3; ++trial) {
        const GaussMarkovModel m = random_stable_model(rng, 2, 0.7);
        Eigen::VectorXd g(3);
        g << rng.normal(), rng.normal(), rng.normal();
        Eigen::Vector2d h(0.3 + rng.uniform(), 0.3 + rng.uniform());
        const QcqpProblem p =
            build_qcqp(m, g, 1.0, 2, h, Eigen::Vector2d::Constant(5.0));
        const Eigen::VectorXd b_star = solve_qcqp(p, 1e-10);
        const GridMin grid = grid_min_qcqp_2d(p, 801);
        EXPECT_LE(qcqp_objective(p, b_star), grid.value + 1e-4);
        for (int k = 0; k < 2; ++k) {
            EXPECT_LE(b_star(k) * b_star(k), p.bounds.u(k));
        }
    }
}

TEST(SolveQcqp, RejectsNonFiniteData) {
    QcqpProblem p = manual_problem(Eigen::MatrixXd::Identity(2, 2),
                                   Eigen::Vector2d::Ones(), 0.0,
                                   Eigen::Vector2d::Ones());
    p.r(0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(solve_qcqp(p), ValidityError);
}

TEST(FullPowerScaling, SitsAtTheBounds) {
    const GaussMarkovModel m = make_iid_model(0.9, 3);
    const Eigen::Vector3d h(1.0, 2.0, 0.5), P(10.0, 10.0, 10.0);
    const EffectiveScaling b = full_power_scaling(m, h, P);
    const PowerBounds pb = power_bounds(m, h, P);
    for (int k = 0; k < 3; ++k) {
        EXPECT_DOUBLE_EQ(b.b(k), pb.s(k));
    }
}

// =============================================================================
// Alternating minimization
// =============================================================================

TEST(AltMin, TraceIsNonincreasing) {
    RngStream rng(116);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::Index K = 2 + static_cast<Eigen::Index>(rng.uniform() * 4);
        const GaussMarkovModel m = random_stable_model(rng, K, 0.75);
        Eigen::VectorXd h(K), P(K);
        for (Eigen::Index k = 0; k < K; ++k) {
            h(k) = 0.1 + rng.uniform() * 1.8;
            P(k) = 1.0 + rng.uniform() * 10.0;
        }
        const AltMinTrace t = alternating_minimization(
            m, h, P, 1.0, 3, 20, full_power_scaling(m, h, P));
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& r : t.rounds) {
            EXPECT_LE(r.cmse_after_g, prev + 1e-9);
            EXPECT_LE(r.cmse_after_b, r.cmse_after_g + 1e-9);
            prev = r.cmse_after_b;
        }
        EXPECT_NEAR(t.cmse, t.rounds.back().cmse_after_b, 1e-15);
    }
}

TEST(AltMin, ScalarConvergesToJointOptimum) {
    // K = 1: the error is decreasing in b^2 once g is optimal, so the joint
    // optimum pins b at the power bound with the matching one-shot tap.
    const GaussMarkovModel m = make_iid_model(0.9, 1);
    const double v_x = m.V_x(0, 0);
    const Eigen::VectorXd h = Eigen::VectorXd::Constant(1, 0.8);
    const Eigen::VectorXd P = Eigen::VectorXd::Constant(1, 2.0);
    const PowerBounds pb = power_bounds(m, h, P);
    const AltMinTrace t =
        alternating_minimization(m, h, P, 1.0, 0, 50, full_power_scaling(m, h, P));
    EXPECT_TRUE(t.converged);
    EXPECT_LE(t.rounds.size(), 2u);
    EXPECT_NEAR(std::abs(t.b(0)), pb.s(0), 1e-12);
    const double b_val = pb.s(0);
    EXPECT_NEAR(t.g(0), b_val * v_x / (b_val * b_val * v_x + 1.0), 1e-9);
    const GridMin grid = scalar_joint_grid(v_x, 1.0, pb.u(0));
    EXPECT_LE(t.cmse, grid.value + 1e-6);
}

TEST(AltMin, EqualChannelsConvergeWithinThirtyRounds) {
    const GaussMarkovModel m = make_iid_model(0.9, 10);
    const Eigen::VectorXd h = channel_s1(10);
    const Eigen::VectorXd P = Eigen::VectorXd::Constant(10, 10.0);
    const AltMinTrace t =
        alternating_minimization(m, h, P, 1.0, 4, 50, full_power_scaling(m, h, P));
    ASSERT_GE(t.rounds.size(), 2u);
    bool settled = false;
    double prev = t.rounds.front().cmse_after_b;
    for (std::size_t k = 1; k < t.rounds.size() && k < 30; ++k) {
        const double cur = t.rounds[k].cmse_after_b;
        if (std::abs(prev - cur) < 1e-6 * std::max(1.0, std::abs(prev))) {
            settled = true;
            break;
        }
        prev = cur;
    }
    EXPECT_TRUE(settled || t.converged);
}

TEST(AltMin, RecordsRequestedRoundsOrStopsEarly) {
    const GaussMarkovModel m = make_iid_model(0.9, 4);
    const Eigen::VectorXd h = channel_s2(4);
    const Eigen::VectorXd P = Eigen::VectorXd::Constant(4, 10.0);
    const AltMinTrace t =
        alternating_minimization(m, h, P, 1.0, 2, 40, full_power_scaling(m, h, P));
    EXPECT_LE(t.rounds.size(), 40u);
    if (!t.converged) {
        EXPECT_EQ(t.rounds.size(), 40u);
    }
}

TEST(AltMin, RejectsInvalidArguments) {
    const GaussMarkovModel m = make_iid_model(0.9, 2);
    const Eigen::VectorXd h = Eigen::Vector2d::Ones();
    const Eigen::VectorXd P = Eigen::Vector2d::Constant(10.0);
    EXPECT_THROW(alternating_minimization(m, h, P, 1.0, 2, 0, full_power_scaling(m, h, P)),
                 ValidityError);
    EXPECT_THROW(alternating_minimization(m, h, P, 1.0, 2, 5,
                                          EffectiveScaling{Eigen::Vector3d::Ones()}),
                 DimensionError);
}
