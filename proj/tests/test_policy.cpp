#include <gtest/gtest.h>

#include "bnip/policy.hpp"
#include "support.hpp"

namespace bnip {
namespace {

using testing::make_matrix;
using testing::make_vector;

struct Instance {
    Vector te, cost;
    double budget;
};

Instance random_instance(std::mt19937_64& rng, Index J) {
    std::uniform_real_distribution<double> te(-3.0, 1.0), c(0.1, 5.0), f(0.0, 1.2);
    Instance in;
    in.te.resize(J);
    in.cost.resize(J);
    for (Index j = 0; j < J; ++j) in.te(j) = te(rng), in.cost(j) = c(rng);
    in.budget = f(rng) * in.cost.sum();
    return in;
}

TEST(Unconstrained, Examples) {
    const PolicySolution s = unconstrained_policy(make_vector({-2, 3, 0}), 10);
    EXPECT_EQ(s.pi, make_vector({1, 0, 0}));
    EXPECT_DOUBLE_EQ(s.value_rate, -0.2);
    EXPECT_EQ(unconstrained_policy(make_vector({-1, -2}), 3).pi, Vector::Ones(2));
    const PolicySolution c = unconstrained_policy(make_vector({-2, 3, -1}), 10, make_vector({1, 2, 5}));
    EXPECT_EQ(c.spent, 6.0);
}

TEST(Knapsack, HandExample) {
    const PolicySolution s = knapsack_policy(make_vector({-2, -3}), make_vector({1, 4}), 2.0, 2);
    EXPECT_EQ(s.pi, make_vector({1, 0.25}));
    EXPECT_DOUBLE_EQ(s.spent, 2.0);
    EXPECT_DOUBLE_EQ(s.value_rate, -1.375);
    ASSERT_TRUE(s.fractional_unit);
    EXPECT_EQ(*s.fractional_unit, 1);
    EXPECT_NEAR(testing::enumeration_lp_value(make_vector({-2, -3}), make_vector({1, 4}), 2.0, 2),
                -1.375, 1e-15);
}

TEST(TeRanked, HandExample) {
    const PolicySolution s = te_ranked_policy(make_vector({-2, -3}), make_vector({1, 4}), 2.0, 2);
    EXPECT_EQ(s.pi, make_vector({0, 0.5}));
    EXPECT_DOUBLE_EQ(s.value_rate, -0.75);
}

TEST(Knapsack, SlackBudgetEqualsUnconstrained) {
    const Vector te = make_vector({-1, 2, -3, 0, -0.5});
    const Vector cost = make_vector({3, 1, 2, 4, 1});
    const PolicySolution s = knapsack_policy(te, cost, 100.0, 5);
    EXPECT_EQ(s.pi, unconstrained_policy(te, 5).pi);
    EXPECT_FALSE(s.fractional_unit);
}

TEST(Knapsack, ZeroBudget) {
    const Vector te = make_vector({-1, -2});
    const Vector cost = make_vector({1, 1});
    for (const auto& s : {knapsack_policy(te, cost, 0.0, 2), te_ranked_policy(te, cost, 0.0, 2)}) {
        EXPECT_EQ(s.pi, Vector::Zero(2));
        EXPECT_EQ(s.value_rate, 0.0);
    }
}

TEST(Knapsack, EqualCostsMatchTeRanking) {
    std::mt19937_64 rng(61);
    for (int rep = 0; rep < 50; ++rep) {
        Instance in = random_instance(rng, 15);
        in.cost.setConstant(2.5);
        EXPECT_EQ(knapsack_policy(in.te, in.cost, in.budget, 10).pi,
                  te_ranked_policy(in.te, in.cost, in.budget, 10).pi);
    }
}

TEST(Knapsack, TiesBrokenByCostThenIndex) {
    // units 0 and 1 share the ratio -1; the cheaper one goes first
    const PolicySolution s =
        knapsack_policy(make_vector({-2, -1, -1}), make_vector({2, 1, 1}), 1.5, 3);
    EXPECT_EQ(s.pi, make_vector({0, 1, 0.5}));
}

TEST(Knapsack, MatchesEnumerationOracle) {
    std::mt19937_64 rng(62);
    std::uniform_int_distribution<Index> jd(1, 12);
    for (int rep = 0; rep < 200; ++rep) {
        const Instance in = random_instance(rng, jd(rng));
        const PolicySolution s = knapsack_policy(in.te, in.cost, in.budget, 7);
        const double oracle = testing::enumeration_lp_value(in.te, in.cost, in.budget, 7);
        EXPECT_NEAR(s.value_rate, oracle, 1e-9);
    }
}

TEST(Knapsack, InvariantsOnRandomInstances) {
    std::mt19937_64 rng(63);
    std::uniform_int_distribution<Index> jd(1, 400);
    for (int rep = 0; rep < 200; ++rep) {
        const Instance in = random_instance(rng, jd(rng));
        const PolicySolution bc = knapsack_policy(in.te, in.cost, in.budget, 50);
        const PolicySolution te = te_ranked_policy(in.te, in.cost, in.budget, 50);
        for (const auto* s : {&bc, &te}) {
            EXPECT_LE(s->spent, s->budget + 1e-9 * s->budget);
            Index fractional = 0;
            for (Index j = 0; j < in.te.size(); ++j) {
                EXPECT_GE(s->pi(j), 0.0);
                EXPECT_LE(s->pi(j), 1.0);
                if (s->pi(j) > 0.0 && s->pi(j) < 1.0) ++fractional;
                if (in.te(j) >= 0.0) {
                    EXPECT_EQ(s->pi(j), 0.0);
                }
            }
            EXPECT_LE(fractional, 1);
        }
        EXPECT_LE(bc.value_rate, te.value_rate + 1e-12 * std::max(1.0, std::abs(te.value_rate)));
    }
}

TEST(Knapsack, PowerOfTwoScalingLeavesPolicyUnchanged) {
    std::mt19937_64 rng(64);
    for (int rep = 0; rep < 100; ++rep) {
        const Instance in = random_instance(rng, 30);
        const Vector base = knapsack_policy(in.te, in.cost, in.budget, 5).pi;
        for (double k : {0.25, 8.0, 1024.0})
            EXPECT_EQ(knapsack_policy(in.te, k * in.cost, k * in.budget, 5).pi, base);
    }
}

TEST(Knapsack, Errors) {
    EXPECT_THROW(knapsack_policy(make_vector({-1}), make_vector({0}), 1.0, 1), ValidationError);
    EXPECT_THROW(knapsack_policy(make_vector({-1}), make_vector({1}), -1.0, 1), ValidationError);
    // nonpositive costs are fine on units that are never candidates
    EXPECT_NO_THROW(knapsack_policy(make_vector({1, -1}), make_vector({0, 1}), 1.0, 1));
}

TEST(Integral, DropsFractionalUnit) {
    const Vector te = make_vector({-2, -3});
    const Vector cost = make_vector({1, 4});
    const PolicySolution s = make_integral(knapsack_policy(te, cost, 2.0, 2), te, cost, 2);
    EXPECT_EQ(s.pi, make_vector({1, 0}));
    EXPECT_DOUBLE_EQ(s.residual_budget, 1.0);
    EXPECT_DOUBLE_EQ(s.value_rate, -1.0);
}

TEST(PolicyValue, LinearityAndZero) {
    const Vector te = make_vector({-1.5, 0.5, -2.25});
    const Vector pi = make_vector({1, 0.5, 0.75});
    EXPECT_EQ(policy_value_rate(te, Vector::Zero(3), 4), 0.0);
    EXPECT_EQ(policy_value_rate(te, 0.5 * pi, 4), 0.5 * policy_value_rate(te, pi, 4));
}

TEST(PolicyValue, CountScale) {
    const InterferenceMap h{make_matrix({{1, 2}, {3, 4}})};
    const Vector fa = make_vector({-1, -2});
    const Vector py = make_vector({10000, 20000});
    EXPECT_EQ(policy_value_count(h, fa, Vector::Zero(2), py), 0.0);
    // delta = (0.5, 1.5) * (-1, -2) = (-0.5, -3); sum delta * py / 1e4 = -0.5 - 6
    EXPECT_DOUBLE_EQ(policy_value_count(h, fa, make_vector({1, 0}), py), -6.5);
    EXPECT_THROW(policy_value_count(h, fa, Vector::Zero(3), py), ValidationError);
}

TEST(Sweep, NineFractionsDominanceAndFullBudget) {
    std::mt19937_64 rng(65);
    const Instance in = random_instance(rng, 60);
    std::vector<double> fr;
    for (int k = 1; k <= 9; ++k) fr.push_back(0.1 * k);
    const auto rows = budget_sweep(in.te, in.cost, fr, 100);
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_TRUE(sweep_dominance_holds(rows));
    for (std::size_t k = 1; k < rows.size(); ++k)
        EXPECT_LE(rows[k].bc.value_rate, rows[k - 1].bc.value_rate);

    const auto full = budget_sweep(in.te, in.cost, {1.0}, 100);
    const double v = unconstrained_policy(in.te, 100).value_rate;
    EXPECT_NEAR(full[0].bc.value_rate, v, 1e-12);
    EXPECT_NEAR(full[0].te.value_rate, v, 1e-12);

    EXPECT_THROW(budget_sweep(in.te, in.cost, {0.5, 0.2}, 1), ValidationError);
    EXPECT_THROW(budget_sweep(in.te, in.cost, {1.5}, 1), ValidationError);
}

}  // namespace
}  // namespace bnip
