// Monte Carlo harness tests: empirical error measurement, channel-averaged
// sweeps, convergence traces, CSV emission, and deterministic parallelism.
#include <cmath>
#include <gtest/gtest.h>
#include <string>
#include <vector>

#include "aircomp/experiments.hpp"
#include "aircomp/oracles.hpp"

using namespace aircomp;

namespace {

ExperimentConfig desk_config() {
    ExperimentConfig cfg;
    cfg.alpha = 0.9;
    cfg.K = 5;
    cfg.P = Eigen::VectorXd::Constant(5, 10.0);
    cfg.l_values = {0, 1, 2};
    cfg.l = 2;
    cfg.n_channel_realizations = 50;
    cfg.rounds = 15;
    cfg.seed = 7;
    cfg.threads = 1;
    return cfg;
}

} // namespace

// =============================================================================
// Batch means
// =============================================================================

TEST(BatchMeans, MeanMatchesArithmeticMean) {
    std::vector<double> samples;
    RngStream rng(121);
    double sum = 0.0;
    for (int k = 0; k < 2000; ++k) {
        samples.push_back(rng.normal());
        sum += samples.back();
    }
    const CmseEstimate est = batch_means(samples);
    EXPECT_NEAR(est.mean, sum / 2000.0, 1e-12);
    EXPECT_EQ(est.n_used, 2000);
}

TEST(BatchMeans, StandardErrorNearIidFormulaForIidInput) {
    std::vector<double> samples;
    RngStream rng(122);
    for (int k = 0; k < 20000; ++k) samples.push_back(rng.normal());
    const CmseEstimate est = batch_means(samples);
    const double iid_se = 1.0 / std::sqrt(20000.0);
    EXPECT_GT(est.se, 0.5 * iid_se);
    EXPECT_LT(est.se, 2.0 * iid_se);
}

// =============================================================================
// Empirical error measurement
// =============================================================================

TEST(EmpiricalCmse, ZeroPolicyRecoversPriorSumVariance) {
    const GaussMarkovModel m = make_iid_model(0.9, 20);
    const EffectiveScaling b{Eigen::VectorXd::Zero(20)};
    const CmseEstimate est = empirical_cmse(
        PolicySpec::filter(Eigen::VectorXd::Zero(1)), m, b, 1.0, 20000, 50, 123);
    EXPECT_NEAR(est.mean, 20.0, 3.0 * est.se);
}

TEST(EmpiricalCmse, RecursivePolicyMatchesSteadyState) {
    RngStream rng(124);
    const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
    const EffectiveScaling b{random_scaling(rng, 3)};
    const double target = steady_state_error(m, b, 1.0).sum();
    const CmseEstimate est = empirical_cmse(PolicySpec::kf(), m, b, 1.0, 50000, 50, 125);
    EXPECT_NEAR(est.mean, target, 3.0 * est.se);
}

TEST(EmpiricalCmse, WindowPolicyMatchesClosedForm) {
    RngStream rng(126);
    const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
    const EffectiveScaling b{random_scaling(rng, 3)};
    const FilterDesign d = optimal_filter(m, b, 1.0, 3);
    const CmseEstimate est =
        empirical_cmse(PolicySpec::filter(d.g), m, b, 1.0, 50000, 50, 127);
    EXPECT_NEAR(est.mean, d.cmse, 3.0 * est.se);
}

TEST(EmpiricalCmse, OracleTriangleAgreement) {
    // Sample estimate, closed form, and the quadratic-in-b form agree.
    RngStream rng(128);
    const GaussMarkovModel m = random_stable_model(rng, 3, 0.7);
    const Eigen::VectorXd b = random_scaling(rng, 3);
    const FilterDesign d = optimal_filter(m, EffectiveScaling{b}, 1.0, 2);
    const QcqpProblem p = build_qcqp(m, d.g, 1.0, 2, Eigen::VectorXd::Ones(3),
                                     Eigen::VectorXd::Constant(3, 10.0));
    const double quad = qcqp_objective(p, b);
    EXPECT_NEAR(quad, d.cmse, 1e-9 * (1.0 + d.cmse));
    const CmseEstimate est =
        empirical_cmse(PolicySpec::filter(d.g), m, EffectiveScaling{b}, 1.0, 50000, 50, 129);
    EXPECT_NEAR(est.mean, d.cmse, 3.0 * est.se);
}

TEST(EmpiricalCmse, RejectsTinySampleCount) {
    const GaussMarkovModel m = make_iid_model(0.9, 2);
    const EffectiveScaling b{Eigen::Vector2d::Ones()};
    EXPECT_THROW(empirical_cmse(PolicySpec::kf(), m, b, 1.0, 99, 0, 1), ValidityError);
}

// =============================================================================
// Named channels
// =============================================================================

TEST(Channels, S1IsAllOnes) {
    EXPECT_EQ(channel_s1(4), Eigen::VectorXd::Ones(4));
}

TEST(Channels, S2IsEvenlySpaced) {
    const Eigen::VectorXd h = channel_s2(8);
    ASSERT_EQ(h.size(), 8);
    EXPECT_NEAR(h(0), 0.1, 1e-15);
    EXPECT_NEAR(h(7), 1.9, 1e-15);
    for (int k = 1; k < 8; ++k) {
        EXPECT_NEAR(h(k) - h(k - 1), 1.8 / 7.0, 1e-12);
    }
}

TEST(Channels, S2SingleSensor) {
    const Eigen::VectorXd h = channel_s2(1);
    ASSERT_EQ(h.size(), 1);
    EXPECT_NEAR(h(0), 0.1, 1e-15);
}

// =============================================================================
// Deterministic parallel execution
// =============================================================================

TEST(RunOverRealizations, ResultsIndependentOfThreadCount) {
    auto work = [](long j, RngStream& rng) {
        double acc = static_cast<double>(j);
        for (int k = 0; k < 10; ++k) acc += rng.normal();
        return acc;
    };
    const auto one = run_over_realizations(64, 99, 1, work);
    const auto four = run_over_realizations(64, 99, 4, work);
    ASSERT_EQ(one.size(), four.size());
    for (std::size_t j = 0; j < one.size(); ++j) {
        EXPECT_EQ(one[j], four[j]);
    }
}

TEST(RunOverRealizations, PropagatesWorkerExceptions) {
    auto work = [](long j, RngStream&) -> double {
        if (j == 5) throw ValidityError("boom");
        return 0.0;
    };
    EXPECT_THROW(run_over_realizations(16, 1, 2, work), ValidityError);
}

// =============================================================================
// Channel-averaged sweep
// =============================================================================

TEST(SweepFilterLength, PolicyOrderingAndMonotonicity) {
    const ExperimentConfig cfg = desk_config();
    const CmseReport report = sweep_filter_length(cfg);
    ASSERT_EQ(report.rows.size(), 6u);  // 3 window lengths x 2 policies

    double kf_mean = 0.0, kf_se = 0.0;
    for (const auto& row : report.rows) {
        if (row.policy == "kf-optimal") {
            kf_mean = row.cmse_mean;
            kf_se = row.cmse_se;
        }
    }
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& row : report.rows) {
        if (row.policy != "low-complexity") continue;
        EXPECT_LE(row.cmse_mean, prev + 1e-9);  // nonincreasing in l
        const double combined = std::sqrt(row.cmse_se * row.cmse_se + kf_se * kf_se);
        EXPECT_GE(row.cmse_mean, kf_mean - 3.0 * combined);  // never beats the optimum
        prev = row.cmse_mean;
        EXPECT_EQ(row.n_realizations, 50);
    }
}

TEST(SweepFilterLength, HeaderNotesDocumentProtocol) {
    ExperimentConfig cfg = desk_config();
    cfg.n_channel_realizations = 10;
    const CmseReport report = sweep_filter_length(cfg);
    bool protocol_note = false, bound_note = false;
    for (const auto& note : report.header_notes) {
        if (note.find("reference protocol: 100000") != std::string::npos) protocol_note = true;
        if (note.find("power_bound = with_h2") != std::string::npos) bound_note = true;
    }
    EXPECT_TRUE(protocol_note);
    EXPECT_TRUE(bound_note);
}

TEST(SweepFilterLength, SeedDeterminismAndThreadInvariance) {
    ExperimentConfig cfg = desk_config();
    cfg.n_channel_realizations = 20;
    cfg.threads = 1;
    const auto lines_a = sweep_csv_lines(sweep_filter_length(cfg));
    const auto lines_b = sweep_csv_lines(sweep_filter_length(cfg));
    cfg.threads = 3;
    const auto lines_c = sweep_csv_lines(sweep_filter_length(cfg));
    EXPECT_EQ(lines_a, lines_b);
    EXPECT_EQ(lines_a, lines_c);
}

TEST(MonteCarloOverChannels, SingleRealizationMatchesDirectRun) {
    ExperimentConfig cfg = desk_config();
    cfg.n_channel_realizations = 1;
    cfg.l = 2;
    const CmseReport report = monte_carlo_over_channels(cfg);
    ASSERT_EQ(report.rows.size(), 2u);

    const GaussMarkovModel m = model_from_config(cfg);
    RngStream rng = RngStream(cfg.seed).substream(0);
    const Eigen::VectorXd h = sample_rayleigh(cfg.K, rng);
    const AltMinTrace t = alternating_minimization(
        m, h, cfg.P, cfg.sigma_z2, 2, cfg.rounds,
        full_power_scaling(m, h, cfg.P), cfg.power_bound, cfg.tol);
    EXPECT_DOUBLE_EQ(report.rows[0].cmse_mean, t.cmse);
    EXPECT_DOUBLE_EQ(report.rows[0].cmse_se, 0.0);
    const double kf = steady_state_error(m, EffectiveScaling{t.b}, cfg.sigma_z2).sum();
    EXPECT_DOUBLE_EQ(report.rows[1].cmse_mean, kf);
}

TEST(MonteCarloOverChannels, StandardErrorShrinksWithSampleCount) {
    ExperimentConfig cfg = desk_config();
    cfg.K = 3;
    cfg.P = Eigen::VectorXd::Constant(3, 10.0);
    cfg.l = 1;
    cfg.rounds = 10;
    cfg.n_channel_realizations = 400;
    const CmseReport small = monte_carlo_over_channels(cfg);
    cfg.n_channel_realizations = 800;
    const CmseReport large = monte_carlo_over_channels(cfg);
    const double ratio = large.rows[0].cmse_se / small.rows[0].cmse_se;
    EXPECT_GT(ratio, 0.6);
    EXPECT_LT(ratio, 0.85);
}

// =============================================================================
// Convergence traces
// =============================================================================

TEST(ConvergenceTrace, RayleighConfigRunsBothNamedScenarios) {
    ExperimentConfig cfg;
    cfg.alpha = 0.9;
    cfg.K = 10;
    cfg.P = Eigen::VectorXd::Constant(10, 10.0);
    cfg.l = 4;
    cfg.rounds = 50;
    const std::vector<TraceRow> rows = convergence_trace(cfg);
    long s1_rounds = 0, s2_rounds = 0;
    double prev_s1 = std::numeric_limits<double>::infinity();
    double prev_s2 = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        if (r.scenario == "s1") {
            ++s1_rounds;
            EXPECT_LE(r.round.cmse_after_g, prev_s1 + 1e-9);
            EXPECT_LE(r.round.cmse_after_b, r.round.cmse_after_g + 1e-9);
            prev_s1 = r.round.cmse_after_b;
        } else {
            ASSERT_EQ(r.scenario, "s2");
            ++s2_rounds;
            EXPECT_LE(r.round.cmse_after_g, prev_s2 + 1e-9);
            EXPECT_LE(r.round.cmse_after_b, r.round.cmse_after_g + 1e-9);
            prev_s2 = r.round.cmse_after_b;
        }
    }
    EXPECT_GE(s1_rounds, 1);
    EXPECT_GE(s2_rounds, 1);
    // Spread gains settle no faster than equal gains.
    EXPECT_GE(s2_rounds, s1_rounds);
}

TEST(ConvergenceTrace, ExplicitChannelRunsSingleScenario) {
    ExperimentConfig cfg;
    cfg.alpha = 0.9;
    cfg.K = 4;
    cfg.P = Eigen::VectorXd::Constant(4, 10.0);
    cfg.l = 2;
    cfg.rounds = 10;
    cfg.channel = ChannelKind::Explicit;
    cfg.h = Eigen::Vector4d(0.5, 1.0, 1.5, 2.0);
    cfg.channel_name = "custom";
    const std::vector<TraceRow> rows = convergence_trace(cfg);
    ASSERT_FALSE(rows.empty());
    for (const auto& r : rows) {
        EXPECT_EQ(r.scenario, "custom");
    }
}

// =============================================================================
// Trajectory emission and CSV formatting
// =============================================================================

TEST(KfRun, ReplaysThroughPublicUpdate) {
    ExperimentConfig cfg;
    cfg.alpha = 0.9;
    cfg.K = 4;
    cfg.P = Eigen::VectorXd::Constant(4, 10.0);
    cfg.n_steps = 30;
    cfg.channel = ChannelKind::Explicit;
    cfg.h = channel_s1(4);
    cfg.channel_name = "s1";
    const std::vector<KfRunRow> rows = kf_run(cfg);
    ASSERT_EQ(rows.size(), 30u);

    const GaussMarkovModel m = model_from_config(cfg);
    const EffectiveScaling b = full_power_scaling(m, cfg.h, cfg.P);
    KalmanState est = kf_init(m);
    for (const auto& r : rows) {
        est = kf_update(est, m, b, cfg.sigma_z2, r.y);
        EXPECT_NEAR(r.chi, estimate_sum(est), 1e-11 * (1.0 + std::abs(r.chi)));
        EXPECT_NEAR(r.cmse_theoretical, kf_cmse(est), 1e-11);
    }
}

TEST(KfRun, DeterministicForFixedSeed) {
    ExperimentConfig cfg;
    cfg.K = 3;
    cfg.P = Eigen::VectorXd::Constant(3, 10.0);
    cfg.n_steps = 10;
    cfg.seed = 5;
    const auto a = kf_run_csv_lines(kf_run(cfg));
    const auto b = kf_run_csv_lines(kf_run(cfg));
    EXPECT_EQ(a, b);
}

TEST(CsvFormat, SweepHeaderAndRoundTrip) {
    CmseReport report;
    report.rows.push_back(CmseRow{0.9, 10, 1, "low-complexity", 1.0 / 3.0, 0.01, 100});
    const auto lines = sweep_csv_lines(report);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0], "alpha,K,l,policy,cmse_mean,cmse_stderr,n_realizations");
    EXPECT_NE(lines[1].find("low-complexity"), std::string::npos);
    // %.17g preserves doubles exactly.
    EXPECT_EQ(std::stod(fmt_g17(1.0 / 3.0)), 1.0 / 3.0);
    EXPECT_EQ(std::stod(fmt_g17(1e-300)), 1e-300);
}

TEST(CsvFormat, TraceHeader) {
    const auto lines = trace_csv_lines({});
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(lines[0], "scenario,round,cmse_after_g,cmse_after_b");
}

TEST(PlotScripts, ReferenceTheCsvFiles) {
    const auto sweep = gnuplot_sweep_script("sweep.csv", "sweep.png");
    bool mentions = false;
    for (const auto& line : sweep) {
        if (line.find("sweep.csv") != std::string::npos) mentions = true;
    }
    EXPECT_TRUE(mentions);
    const auto trace = gnuplot_trace_script("trace.csv", "trace.png");
    mentions = false;
    for (const auto& line : trace) {
        if (line.find("trace.csv") != std::string::npos) mentions = true;
    }
    EXPECT_TRUE(mentions);
}
