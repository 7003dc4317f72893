#include <gtest/gtest.h>

#include "bnip/qlearn.hpp"
#include "support.hpp"

namespace bnip {
namespace {

using testing::make_vector;

const OutcomeModelSpec linear_spec{FeatureMap{BasisKind::linear}, FeatureMap{BasisKind::linear}};

struct LinearFixture {
    OutcomeTable out;
    Vector abar;
    Vector alpha0, beta0;
};

LinearFixture noiseless(std::uint64_t seed, Index n = 200, Index p = 3) {
    std::mt19937_64 rng(seed);
    LinearFixture f;
    f.out.x = testing::random_normal(rng, n, p);
    f.abar = testing::random_uniform(rng, n, 1, 0.0, 2.0);
    f.alpha0 = testing::random_uniform(rng, p + 1, 1, -1.0, 1.0);
    f.beta0 = testing::random_uniform(rng, p + 1, 1, -1.0, 1.0);
    const Matrix phi = FeatureMap{BasisKind::linear}.expand_rows(f.out.x);
    f.out.y = phi * f.alpha0 + f.abar.cwiseProduct(phi * f.beta0);
    return f;
}

TEST(QLearn, NoiselessRecoversTruth) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const LinearFixture f = noiseless(s);
        const QFit fit = fit_q(f.out, f.abar, linear_spec);
        EXPECT_LE((fit.alpha - f.alpha0).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LE((fit.beta - f.beta0).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LE(fit.residuals.cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(QLearn, ThreePointExample) {
    OutcomeTable out{Matrix(3, 0), make_vector({1, 2, 3}), std::nullopt};
    const QFit fit = fit_q(out, make_vector({0, 1, 2}), linear_spec);
    EXPECT_NEAR(fit.alpha(0), 1.0, 1e-12);
    EXPECT_NEAR(fit.beta(0), 1.0, 1e-12);
}

TEST(QLearn, ZeroExposureIsRankDeficient) {
    OutcomeTable out{Matrix(5, 0), make_vector({1, 2, 3, 4, 5}), std::nullopt};
    try {
        fit_q(out, Vector::Zero(5), linear_spec);
        FAIL() << "expected a rank error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("offending pivot column 1"), std::string::npos)
            << e.what();
    }
}

TEST(QLearn, TooFewRows) {
    const LinearFixture f = noiseless(9, 8, 3);
    EXPECT_THROW(fit_q(f.out, f.abar, linear_spec), ValidationError);
}

TEST(QLearn, NormalEquationsAndCovarianceShape) {
    std::mt19937_64 rng(21);
    LinearFixture f = noiseless(21, 500, 2);
    f.out.y += testing::random_normal(rng, 500, 1) * 0.3;
    const QFit fit = fit_q(f.out, f.abar, linear_spec);
    const Matrix d = outcome_design(f.out.x, f.abar, linear_spec);
    const double scale = 500.0 * f.out.y.cwiseAbs().maxCoeff();
    EXPECT_LE((d.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-8 * scale);
    EXPECT_LE(q_estimating_function(d, f.out.y, fit.theta()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(fit.cov_theta, fit.cov_theta.transpose());
    EXPECT_TRUE((fit.cov_theta.diagonal().array() >= 0.0).all());
}

TEST(QLearn, BreadMatchesFiniteDifferences) {
    std::mt19937_64 rng(22);
    const OutcomeModelSpec spec{FeatureMap{BasisKind::quadratic}, FeatureMap{BasisKind::trig}};
    for (int rep = 0; rep < 5; ++rep) {
        OutcomeTable out;
        out.x = testing::random_normal(rng, 150, 2);
        out.y = testing::random_normal(rng, 150, 1);
        const Vector abar = testing::random_uniform(rng, 150, 1);
        const QFit fit = fit_q(out, abar, spec);
        const Matrix d = outcome_design(out.x, abar, spec);
        const Matrix fd = testing::fd_jacobian(
            [&](const Vector& t) { return q_estimating_function(d, out.y, t); }, fit.theta());
        EXPECT_LE(testing::relative_gap(fit.bread, -fd), 1e-5);
    }
}

TEST(QLearn, PredictProperties) {
    std::mt19937_64 rng(23);
    LinearFixture f = noiseless(23, 100, 2);
    f.out.y += testing::random_normal(rng, 100, 1) * 0.1;
    const QFit fit = fit_q(f.out, f.abar, linear_spec);
    const Vector base = q_predict(fit, f.out, Vector::Zero(100));
    const Matrix phi = FeatureMap{BasisKind::linear}.expand_rows(f.out.x);
    EXPECT_EQ(base, Vector(phi * fit.alpha));
    EXPECT_LE((q_predict(fit, f.out, f.abar) + fit.residuals - f.out.y).cwiseAbs().maxCoeff(),
              1e-12);
    const Vector once = q_predict(fit, f.out, f.abar) - base;
    const Vector twice = q_predict(fit, f.out, 2.0 * f.abar) - base;
    EXPECT_LE((twice - 2.0 * once).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(q_predict(fit, Matrix::Zero(3, 5), Vector::Zero(3)), ValidationError);
}

TEST(QLearn, SandwichNearClassicalUnderHomoskedasticity) {
    std::mt19937_64 rng(24);
    LinearFixture f = noiseless(24, 5000, 3);
    f.out.y += testing::random_normal(rng, 5000, 1) * 0.5;
    const QFit fit = fit_q(f.out, f.abar, linear_spec);
    const Matrix d = outcome_design(f.out.x, f.abar, linear_spec);
    const double s2 = fit.residuals.squaredNorm() / static_cast<double>(5000 - d.cols());
    const Vector ols = (s2 * (d.transpose() * d).inverse()).diagonal().cwiseSqrt();
    const Vector sandwich = fit.se_theta();
    for (Index k = 0; k < ols.size(); ++k)
        EXPECT_NEAR(sandwich(k) / ols(k), 1.0, 0.15) << "coordinate " << k;
}

}  // namespace
}  // namespace bnip
