#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "pspower/pspower.hpp"

using namespace pspower;

namespace {

SimulationConfig config(double kappa, std::int64_t n_pop, std::uint64_t seed = 2024) {
    SimulationConfig c;
    c.kappa = kappa;
    c.n_pop = n_pop;
    c.seed = seed;
    return c;
}

// Population drawn exactly from the latent logit-normal model with W_e as the only covariate.
Dataset latent_population(std::int64_t n, double mu, double s2, double a1, double a0, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> w(mu, std::sqrt(s2)), g(0, 1);
    std::uniform_real_distribution<double> u(0, 1);
    Dataset d;
    d.covariates.resize(n, 1);
    d.z.resize(n);
    d.y.resize(n);
    d.y1.resize(n);
    d.y0.resize(n);
    d.true_scores.resize(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double wi = w(rng);
        d.covariates(i, 0) = wi;
        d.true_scores[i] = expit(wi);
        d.z[i] = u(rng) < d.true_scores[i] ? 1.0 : 0.0;
        d.y1[i] = a1 * wi + g(rng);
        d.y0[i] = a0 * wi + g(rng);
        d.y[i] = d.z[i] == 1.0 ? d.y1[i] : d.y0[i];
    }
    return d;
}

double column_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double ma = a.mean(), mb = b.mean();
    const double c = ((a.array() - ma) * (b.array() - mb)).sum();
    return c / std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
}

class LargePopulation : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        auto cfg = config(1.0, 1'000'000, 7);
        cfg.beta0 = -0.951;
        kappa_one_ = std::make_unique<Dataset>(fit_logistic(generate(cfg)));
    }
    static void TearDownTestSuite() { kappa_one_.reset(); }
    static std::unique_ptr<Dataset> kappa_one_;
};
std::unique_ptr<Dataset> LargePopulation::kappa_one_;

}  // namespace

TEST(Generate, RandomizedAtKappaZero) {
    const auto d = generate(config(0.0, 200'000));
    d.validate();
    const double se = 1.0 / std::sqrt(static_cast<double>(d.size()));
    for (int j = 0; j < kNumCovariates; ++j) {
        EXPECT_LT(std::abs(column_correlation(d.z, d.covariates.col(j))), 3 * se) << "x" << j + 1;
    }
}

TEST(Generate, CovariateLaws) {
    const auto d = generate(config(0.5, 400'000));
    const double expected_mean[kNumCovariates] = {0.2, 0.4, 0.6, 0.8, 0.5, 1, 2, 3, 2.0 / 3.0, 0.4};
    const double expected_var[kNumCovariates] = {0.16, 0.24, 0.24, 0.16, 1.0 / 12, 1, 2, 3, 2.0 / 9.0, 0.04};
    const double n = static_cast<double>(d.size());
    for (int j = 0; j < kNumCovariates; ++j) {
        const auto col = d.covariates.col(j);
        const double m = col.mean();
        const double v = (col.array() - m).square().sum() / (n - 1);
        EXPECT_NEAR(m, expected_mean[j], 4 * std::sqrt(expected_var[j] / n)) << j;
        EXPECT_NEAR(v, expected_var[j], 0.02 * expected_var[j]) << j;
    }
}

TEST(Generate, DeterministicAcrossThreadCounts) {
    const auto cfg = config(0.9, 50'000, 99);
    const auto a = generate(cfg, 1);
    const auto b = generate(cfg, 3);
    EXPECT_TRUE(a.covariates == b.covariates);
    EXPECT_TRUE(a.z == b.z);
    EXPECT_TRUE(a.y == b.y);
    EXPECT_TRUE(a.true_scores == b.true_scores);
    const auto c = generate(config(0.9, 50'000, 100), 1);
    EXPECT_FALSE(a.y == c.y);
}

TEST(Generate, BinaryOutcomes) {
    auto cfg = config(1.0, 100'000);
    cfg.outcome_kind = OutcomeKind::binary;
    const auto d = generate(cfg);
    d.validate();
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        ASSERT_TRUE(d.y1[i] == 0.0 || d.y1[i] == 1.0);
    }
    // true effect on the dichotomized scale is about 0.089
    EXPECT_NEAR((d.y1 - d.y0).mean(), 0.089, 0.006);
}

TEST(Generate, ConfigValidation) {
    EXPECT_THROW(generate(config(1.0, 999)), domain_error);
    auto c = config(1.0, 5000);
    c.b_reps = 0;
    EXPECT_THROW(generate(c), domain_error);
    EXPECT_THROW(generate(config(-1.0, 5000)), domain_error);
}

TEST(ResolveIntercept, TableAndPilot) {
    EXPECT_EQ(resolve_intercept(1.0), -0.951);
    EXPECT_EQ(resolve_intercept(0.25), -0.248);
    const double b = resolve_intercept(0.6, 3, 200'000);
    EXPECT_LT(b, -0.489);
    EXPECT_GT(b, -0.722);
}

TEST_F(LargePopulation, TreatedShareAndOverlap) {
    const auto& d = *kappa_one_;
    EXPECT_NEAR(d.z.mean(), 0.50, 0.002);
    const std::span<const double> s(d.true_scores.data(), d.size());
    EXPECT_NEAR(overlap_from_scores(s, d.z.mean()), 0.81, 0.01);
}

TEST_F(LargePopulation, LogisticFitRecoversCoefficients) {
    const auto& fit = *kappa_one_->fit;
    EXPECT_NEAR(fit.coef[0], -0.951, 3 * fit.std_err[0]);
    for (int j = 0; j < kNumCovariates; ++j) {
        EXPECT_NEAR(fit.coef[j + 1], kPropensityCoef[static_cast<std::size_t>(j)], 3 * fit.std_err[j + 1]) << j;
    }
    EXPECT_NEAR(kappa_one_->fitted_scores->mean(), kappa_one_->z.mean(), 1e-8);
    EXPECT_FALSE(fit.separation);
}

TEST_F(LargePopulation, HajekEstimatesNearOne) {
    const auto& d = *kappa_one_;
    EXPECT_NEAR(hajek(d, {Estimand::ATE}, false), 1.0, 0.01);
    EXPECT_NEAR(hajek(d, {Estimand::ATT}, false), 1.0, 0.02);
    EXPECT_NEAR(hajek(d, {Estimand::ATO}, false), 1.0, 0.02);
}

TEST_F(LargePopulation, HajekWithinThreeStandardErrors) {
    const auto& d = *kappa_one_;
    const double n = static_cast<double>(d.size());
    for (auto est : {Estimand::ATE, Estimand::ATT, Estimand::ATO}) {
        const TiltingFunction h{est};
        const double se = std::sqrt(hajek_sandwich_variance(d, h, false) / n);
        EXPECT_NEAR(hajek(d, h, false), 1.0, 3 * se) << to_string(est);
    }
}

TEST_F(LargePopulation, SummaryExtraction) {
    const auto s = extract_summaries(*kappa_one_);
    // reference values are rounded to two decimals; S^2 also carries sampling error of about 0.03
    EXPECT_NEAR(s.s2_pooled, 19.81, 0.09);
    EXPECT_NEAR(s.rho2_pooled, 0.02, 0.006);
    EXPECT_NEAR(s.r2, 0.19, 0.006);
    EXPECT_NEAR(s.r, 0.5, 0.002);
    EXPECT_NEAR(s.phi_hat, 0.81, 0.01);
    EXPECT_NEAR(s.e1, -2.19, 0.03);
    EXPECT_NEAR(s.e0, -2.27, 0.03);
}

TEST_F(LargePopulation, FittedLinearPredictorLooksNormal) {
    const auto& w = *kappa_one_->fitted_linear;
    std::vector<double> v(w.data(), w.data() + w.size());
    EXPECT_GE(normality_diagnostic(v), 0.995);
}

TEST(ExtractSummaries, KappaZeroCorrelationsSmall) {
    const auto d = fit_logistic(generate(config(0.0, 1'000'000)));
    const auto s = extract_summaries(d);
    EXPECT_LE(s.rho1 * s.rho1, 0.03);
    EXPECT_LE(s.rho0 * s.rho0, 0.03);
}

TEST(ExtractSummaries, BinaryPipeline) {
    auto cfg = config(1.0, 300'000);
    cfg.outcome_kind = OutcomeKind::binary;
    const auto s = extract_summaries(fit_logistic(generate(cfg)));
    EXPECT_NEAR(s.s2_pooled, 0.25, 0.006);
    EXPECT_NEAR(s.r2, 0.12, 0.006);
}

TEST(ExtractSummaries, RequiresFit) {
    EXPECT_THROW(extract_summaries(generate(config(0.5, 2000))), domain_error);
}

TEST(FitLogistic, KappaZeroCoefficientsNull) {
    const auto d = fit_logistic(generate(config(0.0, 100'000, 5)));
    for (int j = 1; j <= kNumCovariates; ++j) {
        EXPECT_LE(std::abs(d.fit->coef[j]), 3 * d.fit->std_err[j]) << j;
    }
}

TEST(FitLogistic, RankDeficiency) {
    auto d = generate(config(0.5, 5000));
    d.covariates.col(3).setConstant(1.0);
    EXPECT_THROW(fit_logistic(d), rank_deficiency_error);
}

TEST(FitLogistic, SeparationIsFlaggedOrReported) {
    auto d = generate(config(0.5, 2000));
    for (Eigen::Index i = 0; i < d.z.size(); ++i) {
        d.z[i] = d.covariates(i, 4) > 0.5 ? 1.0 : 0.0;
        d.y[i] = d.z[i] == 1.0 ? d.y1[i] : d.y0[i];
    }
    try {
        const auto f = fit_logistic(d);
        EXPECT_TRUE(f.fit->separation);
    } catch (const convergence_error& e) {
        EXPECT_NE(std::string(e.what()).find("gradient norms"), std::string::npos);
    }
}

TEST(Hajek, ConstantScoresGiveDifferenceInMeans) {
    auto d = generate(config(0.5, 10'000));
    d.true_scores.setConstant(0.4);
    double s1 = 0, s0 = 0, n1 = 0, n0 = 0;
    for (Eigen::Index i = 0; i < d.z.size(); ++i) {
        if (d.z[i] == 1.0) { s1 += d.y[i]; n1 += 1; } else { s0 += d.y[i]; n0 += 1; }
    }
    for (auto est : {Estimand::ATE, Estimand::ATT, Estimand::ATO}) {
        EXPECT_NEAR(hajek(d, {est}, false), s1 / n1 - s0 / n0, 1e-10);
    }
}

TEST(Hajek, LocationScaleInvariance) {
    auto d = generate(config(1.0, 20'000));
    for (auto est : {Estimand::ATE, Estimand::ATT, Estimand::ATO}) {
        const double t = hajek(d, {est}, false);
        Dataset shifted = d;
        shifted.y.array() += 17.5;
        EXPECT_NEAR(hajek(shifted, {est}, false), t, 1e-10);
        Dataset scaled = d;
        scaled.y *= -3.0;
        EXPECT_NEAR(hajek(scaled, {est}, false), -3.0 * t, 1e-10);
    }
}

TEST(Hajek, EmptyArmAndMissingScores) {
    auto d = generate(config(0.5, 2000));
    EXPECT_THROW(hajek(d, {Estimand::ATE}, true), domain_error);
    d.z.setZero();
    d.y = d.y0;
    EXPECT_THROW(hajek(d, {Estimand::ATE}, false), estimation_error);
}

TEST(Sandwich, ConstantScoresMatchTwoSampleVariance) {
    auto d = generate(config(0.0, 10'000, 3));
    d.true_scores.setConstant(0.5);
    double n1 = 0, n0 = 0, s1 = 0, s0 = 0, q1 = 0, q0 = 0;
    for (Eigen::Index i = 0; i < d.z.size(); ++i) {
        if (d.z[i] == 1.0) { n1 += 1; s1 += d.y[i]; q1 += d.y[i] * d.y[i]; }
        else { n0 += 1; s0 += d.y[i]; q0 += d.y[i] * d.y[i]; }
    }
    const double v1 = (q1 - s1 * s1 / n1) / (n1 - 1), v0 = (q0 - s0 * s0 / n0) / (n0 - 1);
    const double two_sample = v1 / n1 + v0 / n0;
    const double sandwich = hajek_sandwich_variance(d, {Estimand::ATE}, false) / static_cast<double>(d.size());
    EXPECT_NEAR(sandwich, two_sample, 0.05 * two_sample);
}

TEST(Sandwich, KnownScoreMatchesBootstrap) {
    const auto d = generate(config(0.5, 5000, 11));
    const TiltingFunction h{Estimand::ATE};
    const double v = hajek_sandwich_variance(d, h, false) / static_cast<double>(d.size());
    auto rng = make_rng_stream(123, 0);
    std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
    std::vector<std::size_t> rows(d.size());
    double s = 0, s2 = 0;
    const int reps = 500;
    for (int b = 0; b < reps; ++b) {
        for (auto& r : rows) r = pick(rng);
        const double t = hajek(d.subset(rows), h, false);
        s += t;
        s2 += t * t;
    }
    const double boot = (s2 - s * s / reps) / (reps - 1);
    EXPECT_NEAR(v, boot, 0.10 * boot);
}

TEST(Sandwich, EstimatedScoresNotLargerForAte) {
    const auto d = fit_logistic(generate(config(0.5, 5000, 11)));
    const TiltingFunction h{Estimand::ATE};
    const double known = hajek_sandwich_variance(d, h, false);
    const double fitted = hajek_sandwich_variance(d, h, true);
    EXPECT_LE(fitted, 1.02 * known);
}

TEST(Sandwich, SingularInformationIsReported) {
    auto d = fit_logistic(generate(config(0.5, 3000)));
    d.covariates.col(0) = d.covariates.col(1);
    EXPECT_THROW(hajek_sandwich_variance(d, {Estimand::ATE}, true), rank_deficiency_error);
}

TEST(Sandwich, LatentModelWateVarianceUsesSquaredMean) {
    // On data drawn from the latent model, the sandwich estimates the E[h]^2-normalized variance.
    const double mu = -0.4, s2 = 1.8, a1 = 0.7, a0 = -0.3;
    const auto d = latent_population(400'000, mu, s2, a1, a0, 4242);
    LogitNormalPropensity ps;
    ps.mu_e = mu;
    ps.sigma_e2 = s2;
    OutcomeModel m;
    m.slope = {a0, a1};
    m.resid_var = {1.0, 1.0};
    for (auto est : {Estimand::ATT, Estimand::ATO}) {
        const TiltingFunction h{est};
        const double empirical = hajek_sandwich_variance(d, h, false);
        const double squared_mean = wate_variance(h, m, ps, {}, WateNormalization::squared_mean);
        const double second_moment = wate_variance(h, m, ps, {}, WateNormalization::second_moment);
        EXPECT_NEAR(empirical, squared_mean, 0.03 * squared_mean) << to_string(est);
        EXPECT_GT(std::abs(empirical - second_moment), 0.08 * empirical) << to_string(est);
    }
}

TEST(EmpiricalPower, SizeUnderTheNull) {
    auto cfg = config(0.5, 200'000, 31);
    cfg.tau = 0.0;
    const auto pop = generate(cfg);
    const auto p = empirical_power(pop, 600, 4000, {Estimand::ATE}, false, 0.05, Sidedness::two,
                                   SamplingMode::without_replacement, 5);
    EXPECT_NEAR(p.power, 0.05, 3 * std::sqrt(0.05 * 0.95 / 4000));
    EXPECT_EQ(p.failures, 0);
    EXPECT_EQ(p.reps, 4000);
}

TEST(EmpiricalPower, ReferencePowerAtKappa075) {
    const auto pop = generate(config(0.75, 200'000, 41));
    const auto p = empirical_power(pop, 993, 4000, {Estimand::ATE}, false, 0.05, Sidedness::two,
                                   SamplingMode::without_replacement, 6);
    EXPECT_NEAR(p.power, 0.78, 0.02);
}

TEST(EmpiricalPower, ZtestSizeUnderpowered) {
    const auto pop = generate(config(1.0, 200'000, 43));
    const auto p = empirical_power(pop, 622, 4000, {Estimand::ATE}, false, 0.05, Sidedness::two,
                                   SamplingMode::without_replacement, 7);
    EXPECT_NEAR(p.power, 0.40, 0.02);
}

TEST(EmpiricalPower, DeterministicAcrossThreads) {
    const auto pop = fit_logistic(generate(config(1.0, 20'000, 3)));
    const auto a = empirical_power(pop, 400, 200, {Estimand::ATO}, true, 0.05, Sidedness::two,
                                   SamplingMode::with_replacement, 9, 1);
    const auto b = empirical_power(pop, 400, 200, {Estimand::ATO}, true, 0.05, Sidedness::two,
                                   SamplingMode::with_replacement, 9, 4);
    EXPECT_EQ(a.rejections, b.rejections);
    EXPECT_EQ(a.failures, b.failures);
    EXPECT_EQ(a.max_weight, b.max_weight);
}

TEST(EmpiricalPower, ReplicateFailuresAreCounted) {
    const auto pop = generate(config(1.0, 5000, 3));
    const auto p = empirical_power(pop, 4, 300, {Estimand::ATE}, false);
    EXPECT_GT(p.failures, 0);
    EXPECT_EQ(p.reps, 300);
    EXPECT_THROW(empirical_power(pop, 6000, 10, {Estimand::ATE}, false), domain_error);
}

TEST(EmpiricalPower, FittedScoresAreConservative) {
    for (double kappa : {0.0, 0.5, 1.0}) {
        const auto pop = fit_logistic(generate(config(kappa, 200'000, 51)));
        const auto s = extract_summaries(pop);
        DesignInputs d;
        d.overlap = {s.r, std::min(1.0, s.phi_hat)};
        d.rho2 = s.rho2_pooled;
        d.tau_std = 1.0 / std::sqrt(s.s2_pooled);
        const auto n = sample_size(d).n;
        const auto t = empirical_power(pop, n, 1000, {Estimand::ATE}, false, 0.05, Sidedness::two,
                                       SamplingMode::without_replacement, 8);
        const auto f = empirical_power(pop, n, 1000, {Estimand::ATE}, true, 0.05, Sidedness::two,
                                       SamplingMode::without_replacement, 8);
        const double se = std::hypot(t.mc_se, f.mc_se);
        EXPECT_GE(f.power, t.power - 2 * se) << "kappa=" << kappa;
    }
}

TEST(SampleWithoutReplacement, DistinctSorted) {
    auto rng = make_rng_stream(1, 2);
    const auto s = sample_without_replacement(1000, 300, rng);
    ASSERT_EQ(s.size(), 300u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
    EXPECT_LT(s.back(), 1000u);
}

TEST(NormalityDiagnostic, Reference) {
    const int n = 500;
    std::vector<double> q(n);
    for (int i = 0; i < n; ++i) q[i] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
    std::shuffle(q.begin(), q.end(), std::mt19937_64(3));
    EXPECT_NEAR(normality_diagnostic(q), 1.0, 1e-6);

    std::mt19937_64 rng(4);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> b(10'000);
    for (auto& x : b) x = coin(rng) ? 1.0 : 0.0;
    EXPECT_LE(normality_diagnostic(b), 0.98);

    EXPECT_THROW(normality_diagnostic(std::vector<double>(50, 2.0)), domain_error);
    EXPECT_THROW(normality_diagnostic(std::vector<double>(10, 1.0)), domain_error);
}

TEST(OverlapFromFittedScores, ConsistentForBetaPopulation) {
    std::mt19937_64 rng(21);
    std::gamma_distribution<double> ga(2.0, 1.0), gb(3.0, 1.0);
    const double target = overlap_from_beta({2.0, 3.0});
    double prev_err = INFINITY;
    for (int n : {1000, 1'000'000}) {
        std::vector<double> s(static_cast<std::size_t>(n));
        for (auto& e : s) {
            const double x = ga(rng), y = gb(rng);
            e = x / (x + y);
        }
        const double err = std::abs(overlap_from_scores(s, 0.4) - target);
        EXPECT_LT(err, std::max(prev_err, 3.0 * 0.17 / std::sqrt(static_cast<double>(n))));
        prev_err = err;
    }
}

TEST(Io, CsvRoundTrip) {
    auto d = fit_logistic(generate(config(1.0, 3000, 12)));
    std::stringstream ss;
    io::write_csv(ss, d);
    const std::string text = ss.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,z,y,y1,y0,e_true,e_hat,w_hat");
    const auto back = io::read_csv(ss);
    EXPECT_TRUE(back.covariates == d.covariates);
    EXPECT_TRUE(back.y == d.y);
    EXPECT_TRUE(back.true_scores == d.true_scores);
    EXPECT_TRUE(*back.fitted_scores == *d.fitted_scores);
    EXPECT_TRUE(*back.fitted_linear == *d.fitted_linear);

    Dataset plain = generate(config(0.0, 1000, 12));
    std::stringstream ss2;
    io::write_csv(ss2, plain);
    const auto back2 = io::read_csv(ss2);
    EXPECT_FALSE(back2.fitted_scores.has_value());
    EXPECT_TRUE(back2.z == plain.z);
}

TEST(Io, CsvRejectsBadInput) {
    std::stringstream bad_header("x1,z,y\n1,0,0\n");
    EXPECT_THROW(io::read_csv(bad_header), domain_error);
    std::stringstream bad_cell("x1,z,y,y1,y0,e_true\n1,0,abc,0,0,0.5\n");
    EXPECT_THROW(io::read_csv(bad_cell), domain_error);
    std::stringstream inconsistent("x1,z,y,y1,y0,e_true\n1,1,0,2,0,0.5\n");
    EXPECT_THROW(io::read_csv(inconsistent), domain_error);
}

TEST(Io, PowerRecordJsonRoundTrip) {
    const io::PowerRecord r{0.81, 0.02, 1617, 0.8125, 0.0087, "true"};
    const nlohmann::json j = r;
    const auto back = j.get<io::PowerRecord>();
    EXPECT_EQ(back.phi, r.phi);
    EXPECT_EQ(back.rho2, r.rho2);
    EXPECT_EQ(back.n, r.n);
    EXPECT_EQ(back.power, r.power);
    EXPECT_EQ(back.mc_se, r.mc_se);
    EXPECT_EQ(back.mode, r.mode);
    EXPECT_EQ(j.size(), 6u);
}
