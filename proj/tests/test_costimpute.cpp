#include <gtest/gtest.h>

#include <set>

#include "bnip/costimpute.hpp"
#include "support.hpp"

namespace bnip {
namespace {

using testing::make_matrix;
using testing::make_vector;

TEST(Nmae, HandExample) {
    EXPECT_DOUBLE_EQ(nmae(make_vector({10, 20}), make_vector({8, 25})), 0.225);
    const Vector c = make_vector({3, 1, 4});
    EXPECT_EQ(nmae(c, c), 0.0);
}

TEST(Nmae, ScaleInvariant) {
    std::mt19937_64 rng(71);
    const Vector a = testing::random_uniform(rng, 20, 1, 1.0, 5.0);
    const Vector p = testing::random_uniform(rng, 20, 1, 1.0, 5.0);
    for (double k : {0.5, 3.0, 1000.0})
        EXPECT_NEAR(nmae(k * a, k * p), nmae(a, p), 1e-14);
}

TEST(Nmae, ZeroPredictionRaises) {
    EXPECT_THROW(nmae(make_vector({1, 2}), make_vector({1, 1e-13})), NumericalError);
    EXPECT_THROW(nmae(make_vector({1}), make_vector({1, 2})), ValidationError);
}

TEST(Split, Sizes) {
    const Split s = split_train_val(135, {});
    EXPECT_EQ(s.train.size(), 108u);
    EXPECT_EQ(s.validation.size(), 27u);
    const Split t = split_train_val(10, {0.8, 3});
    EXPECT_EQ(t.train.size(), 8u);
    EXPECT_EQ(t.validation.size(), 2u);
}

TEST(Split, DeterministicDisjointExhaustive) {
    const Split a = split_train_val(50, {0.7, 5});
    const Split b = split_train_val(50, {0.7, 5});
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.validation, b.validation);
    std::set<Index> all(a.train.begin(), a.train.end());
    all.insert(a.validation.begin(), a.validation.end());
    EXPECT_EQ(all.size(), 50u);
    EXPECT_EQ(*all.begin(), 0);
    EXPECT_EQ(*all.rbegin(), 49);
    EXPECT_NE(split_train_val(50, {0.7, 6}).train, a.train);
}

TEST(Split, Errors) {
    EXPECT_THROW(split_train_val(4, {}), ValidationError);
    EXPECT_THROW(split_train_val(10, {1.0, 1}), ValidationError);
    EXPECT_THROW(split_train_val(10, {0.99, 1}), ValidationError);
}

TEST(LinearCost, ExactLine) {
    const LinearCostModel m = fit_linear_cost(make_matrix({{0}, {1}, {2}, {5}}), make_vector({0, 2, 4, 10}));
    EXPECT_NEAR(m.predict(make_matrix({{3}}))(0), 6.0, 1e-9);
    EXPECT_THROW(m.predict(Matrix::Zero(1, 2)), ValidationError);
}

TEST(CostModels, LinearTargetSelectsLinear) {
    std::mt19937_64 rng(72);
    const Matrix x = testing::random_normal(rng, 100, 3);
    const Vector c = (x * make_vector({2.0, -1.0, 0.5})).array() + 20.0;
    ForestOptions fo;
    fo.trees = 100;
    const CostModelFit fit = fit_cost_models(x, c, {}, fo);
    EXPECT_EQ(fit.kind, CostModelKind::linear);
    EXPECT_LE(fit.nmae_validation, 1e-10);
    ASSERT_EQ(fit.leaderboard.size(), 2u);
    EXPECT_EQ(fit.leaderboard[0].kind, CostModelKind::linear);
    EXPECT_EQ(fit.importance.size(), 0);
}

TEST(CostModels, StepTargetSelectsForest) {
    std::mt19937_64 rng(73);
    const Matrix x = testing::random_normal(rng, 500, 3);
    Vector c(500);
    for (Index j = 0; j < 500; ++j) c(j) = x(j, 0) > 0.0 ? 100.0 : 10.0;
    const CostModelFit fit = fit_cost_models(x, c);
    EXPECT_EQ(fit.kind, CostModelKind::forest);
    EXPECT_LT(fit.leaderboard[0].nmae, fit.leaderboard[1].nmae);
    EXPECT_EQ(fit.leaderboard[1].kind, CostModelKind::linear);
    ASSERT_EQ(fit.importance.size(), 3);
    EXPECT_GT(fit.importance(0), fit.importance(1));
    EXPECT_GT(fit.importance(0), fit.importance(2));
}

TEST(CostModels, Errors) {
    const Matrix x = Matrix::Random(20, 2);
    EXPECT_THROW(fit_cost_models(x, Vector::Constant(20, 3.0)), ValidationError);
    EXPECT_THROW(fit_cost_models(Matrix::Random(6, 8), Vector::LinSpaced(6, 1, 6)), ValidationError);
}

TEST(Forest, UnusedFeatureHasZeroImportance) {
    std::mt19937_64 rng(74);
    Matrix x = testing::random_normal(rng, 200, 3);
    x.col(1).setConstant(4.0);
    const Vector y = x.col(0).array().square() + x.col(2).array();
    ForestOptions fo;
    fo.trees = 50;
    const RegressionForest f = fit_forest(x, y, fo);
    EXPECT_EQ(f.importance(1), 0.0);
    EXPECT_GT(f.importance(0), 0.0);
    EXPECT_TRUE((f.importance.array() >= 0.0).all());
}

TEST(Forest, MemorizingTree) {
    std::mt19937_64 rng(75);
    const Matrix x = testing::random_normal(rng, 60, 2);
    const Vector y = testing::random_normal(rng, 60, 1);
    ForestOptions fo;
    fo.trees = 1;
    fo.min_leaf = 1;
    fo.bootstrap = false;
    fo.mtry = 2;
    const RegressionForest f = fit_forest(x, y, fo);
    EXPECT_LE((f.predict(x) - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forest, PredictionIsMeanOfTrees) {
    std::mt19937_64 rng(76);
    const Matrix x = testing::random_normal(rng, 80, 2);
    const Vector y = x.col(0) + testing::random_normal(rng, 80, 1);
    ForestOptions fo;
    fo.trees = 7;
    const RegressionForest f = fit_forest(x, y, fo);
    const Vector row = x.row(3).transpose();
    double s = 0.0;
    for (const auto& t : f.trees) s += t.predict(row);
    EXPECT_NEAR(f.predict(x)(3), s / 7.0, 1e-14);
    EXPECT_THROW(f.predict(Matrix::Zero(1, 3)), ValidationError);
}

TEST(Forest, DeterministicAcrossThreads) {
    std::mt19937_64 rng(77);
    const Matrix x = testing::random_normal(rng, 150, 4);
    const Vector y = x.col(1).array().sin() + x.col(2).array();
    ForestOptions fo;
    fo.trees = 40;
    fo.threads = 1;
    const RegressionForest a = fit_forest(x, y, fo);
    fo.threads = 4;
    const RegressionForest b = fit_forest(x, y, fo);
    EXPECT_EQ(a.predict(x), b.predict(x));
    EXPECT_EQ(a.importance, b.importance);
}

TEST(PredictCosts, ClipsNegatives) {
    CostModelFit fit;
    fit.kind = CostModelKind::linear;
    fit.linear.coefficients = make_vector({1.0, 2.0});
    const CostPrediction p = predict_costs(fit, make_matrix({{1}, {-3}, {0}}));
    EXPECT_EQ(p.cost, make_vector({3, 0, 1}));
    EXPECT_EQ(p.clipped, std::vector<Index>{1});
    EXPECT_EQ(p.total, 4.0);
}

}  // namespace
}  // namespace bnip
