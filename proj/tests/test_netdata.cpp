#include <gtest/gtest.h>

#include "bnip/netdata.hpp"
#include "support.hpp"

namespace bnip {
namespace {

using testing::make_matrix;
using testing::make_vector;

struct Bundle2x2 {
    InterferenceMap h{Matrix::Ones(2, 2)};
    OutcomeTable out{Matrix::Zero(2, 1), Vector::Zero(2), std::nullopt};
    InterventionTable in{Matrix::Zero(2, 1), make_vector({0, 1}), std::nullopt};
};

TEST(Validate, ConsistentBundleGivesEmptyReport) {
    Bundle2x2 b;
    const auto r = validate_bundle(b.h, b.out, b.in);
    EXPECT_TRUE(r.empty()) << r.summary();
    EXPECT_TRUE(r.usable());
}

TEST(Validate, ZeroColumnIsFlagged) {
    Bundle2x2 b;
    b.h.h.col(1).setZero();
    const auto r = validate_bundle(b.h, b.out, b.in);
    ASSERT_EQ(r.issues.size(), 1u);
    EXPECT_EQ(r.issues[0].message, "column 1 has no transport");
    EXPECT_EQ(r.issues[0].severity, Severity::warning);
    EXPECT_TRUE(r.usable());
}

TEST(Validate, NonBinaryTreatmentIsFlagged) {
    Bundle2x2 b;
    b.in.a = make_vector({0, 2});
    const auto r = validate_bundle(b.h, b.out, b.in);
    ASSERT_EQ(r.issues.size(), 1u);
    EXPECT_EQ(r.issues[0].message, "non-binary treatment at index 1");
    EXPECT_FALSE(r.usable());
}

TEST(Validate, DimensionAndValueProblems) {
    Bundle2x2 b;
    b.h.h = Matrix::Ones(3, 2);
    b.h.h(0, 0) = -1.0;
    b.out.person_years = make_vector({1.0, 0.0});
    b.in.cost = make_vector({1.0, -2.0});
    const auto r = validate_bundle(b.h, b.out, b.in);
    EXPECT_FALSE(r.usable());
    const std::string s = r.summary();
    EXPECT_NE(s.find("negative entries"), std::string::npos);
    EXPECT_NE(s.find("3 rows but there are 2 outcome units"), std::string::npos);
    EXPECT_NE(s.find("person_years at index 1"), std::string::npos);
    EXPECT_NE(s.find("cost at index 1"), std::string::npos);
}

TEST(Validate, IsPure) {
    Bundle2x2 b;
    b.h.h.col(0).setZero();
    b.in.a(0) = 0.5;
    EXPECT_TRUE(validate_bundle(b.h, b.out, b.in) == validate_bundle(b.h, b.out, b.in));
}

TEST(Standardizer, HandExample) {
    const Matrix x = make_matrix({{1}, {3}});
    const Standardizer s = fit_standardizer(x);
    EXPECT_DOUBLE_EQ(s.means(0), 2.0);
    EXPECT_NEAR(s.sds(0), std::sqrt(2.0), 1e-15);
    const Matrix z = s.apply(x);
    EXPECT_NEAR(z(0, 0), -1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(z(1, 0), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_FALSE(s.has_constant_columns());
}

TEST(Standardizer, ConstantColumnFlaggedAndCentered) {
    const Matrix x = make_matrix({{5, 1}, {5, 2}, {5, 4}});
    const Standardizer s = fit_standardizer(x);
    ASSERT_EQ(s.constant_columns.size(), 1u);
    EXPECT_EQ(s.constant_columns[0], 0);
    EXPECT_EQ(s.sds(0), 1.0);
    const Matrix z = s.apply(x);
    EXPECT_TRUE((z.col(0).array() == 0.0).all());
}

TEST(Standardizer, IdempotentOnStandardizedData) {
    std::mt19937_64 rng(1);
    const Matrix x = testing::random_normal(rng, 50, 4) * 3.0;
    const Matrix z = fit_standardizer(x).apply(x);
    const Matrix z2 = fit_standardizer(z).apply(z);
    EXPECT_LE((z - z2).cwiseAbs().maxCoeff(), 1e-12);
    for (Index c = 0; c < z.cols(); ++c) {
        EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
        EXPECT_NEAR(std::sqrt(z.col(c).squaredNorm() / 49.0), 1.0, 1e-12);
    }
}

TEST(Standardizer, RoundTrip) {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = (testing::random_normal(rng, 30, 5).array() * 100.0 + 7.0).matrix();
        const Standardizer s = fit_standardizer(x);
        const Matrix back = s.invert(s.apply(x));
        EXPECT_LE(((back - x).array() / x.array().abs().max(1.0)).abs().maxCoeff(), 1e-12);
    }
}

TEST(Standardizer, RejectsNonFinite) {
    Matrix x = make_matrix({{1}, {2}});
    x(1, 0) = std::nan("");
    EXPECT_THROW(fit_standardizer(x), ValidationError);
}

TEST(FeatureMap, DimensionFormulas) {
    for (Index p = 1; p <= 20; ++p) {
        EXPECT_EQ(FeatureMap{BasisKind::linear}.dim(p), 1 + p);
        EXPECT_EQ(FeatureMap{BasisKind::quadratic}.dim(p), 1 + 2 * p);
        EXPECT_EQ(FeatureMap{BasisKind::cubic}.dim(p), 1 + 3 * p);
        EXPECT_EQ(FeatureMap{BasisKind::trig}.dim(p), 1 + 3 * p);
        const Vector x = Vector::LinSpaced(p, -1.0, 2.0);
        for (auto k : {BasisKind::linear, BasisKind::quadratic, BasisKind::cubic, BasisKind::trig})
            EXPECT_EQ(FeatureMap{k}.expand(x).size(), FeatureMap{k}.dim(p));
    }
}

TEST(FeatureMap, ZeroVectorUnderLinear) {
    const Vector e = FeatureMap{BasisKind::linear}.expand(Vector::Zero(4));
    EXPECT_EQ(e(0), 1.0);
    EXPECT_TRUE((e.tail(4).array() == 0.0).all());
}

TEST(FeatureMap, LayoutAndNames) {
    const Vector x = make_vector({2.0, -1.0});
    const Vector q = FeatureMap{BasisKind::quadratic}.expand(x);
    EXPECT_EQ(q, make_vector({1, 2, -1, 4, 1}));
    const Vector t = FeatureMap{BasisKind::trig}.expand(x);
    EXPECT_DOUBLE_EQ(t(3), std::sin(2.0));
    EXPECT_DOUBLE_EQ(t(6), std::cos(-1.0));
    const auto names = FeatureMap{BasisKind::cubic}.names({"a", "b"});
    EXPECT_EQ(names, (std::vector<std::string>{"(intercept)", "a", "b", "a^2", "b^2", "a^3", "b^3"}));
    // rows and single-row expansion agree
    const Matrix rows = make_matrix({{2.0, -1.0}, {0.5, 3.0}});
    const Matrix e = FeatureMap{BasisKind::trig}.expand_rows(rows);
    EXPECT_EQ(Vector(e.row(0).transpose()), t);
}

TEST(FeatureMap, ParseKinds) {
    EXPECT_EQ(parse_basis_kind("cubic"), BasisKind::cubic);
    EXPECT_THROW(parse_basis_kind("spline"), ValidationError);
}

}  // namespace
}  // namespace bnip
