#pragma once

// Treatment allocation: the unconstrained rule pi_j = 1{TE_j < 0}, the
// budgeted fractional-knapsack allocation ranked by benefit-cost ratio, the
// TE-ranked comparator, policy values and budget sweeps.

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bnip/netdata.hpp"

namespace bnip {

enum class PolicyMethod { bc_greedy, te_greedy, unconstrained };

inline std::string_view to_string(PolicyMethod m) {
    switch (m) {
        case PolicyMethod::bc_greedy: return "bc_greedy";
        case PolicyMethod::te_greedy: return "te_greedy";
        case PolicyMethod::unconstrained: return "unconstrained";
    }
    return "unknown";
}

struct PolicySolution {
    Vector pi;
    double spent = 0.0;
    double budget = 0.0;
    double value_rate = 0.0;  // (1/n) sum_j pi_j TE_j
    std::optional<double> value_count;
    PolicyMethod method = PolicyMethod::unconstrained;
    std::optional<Index> fractional_unit;
    double residual_budget = 0.0;  // budget - spent
};

inline double policy_value_rate(const Vector& te, const Vector& pi, Index n) {
    if (te.size() != pi.size()) throw ValidationError("policy and effect lengths differ");
    if (n < 1) throw ValidationError("policy value needs at least one outcome unit");
    return pi.dot(te) / static_cast<double>(n);
}

/// sum_i delta_i PY_i / 10000 with delta_i = (1/J) sum_j H_ij pi_j fA(x_i).
/// `fa_values` holds fA(x_i; beta) per outcome unit; outcomes are rates per
/// 10,000 person-years.
inline double policy_value_count(const InterferenceMap& h, const Vector& fa_values,
                                 const Vector& pi, const Vector& person_years) {
    if (pi.size() != h.units() || fa_values.size() != h.n() || person_years.size() != h.n())
        throw ValidationError("count-scale policy value inputs have inconsistent dimensions");
    const Vector delta = (h.h * pi / static_cast<double>(h.units())).cwiseProduct(fa_values);
    return delta.dot(person_years) / 10000.0;
}

inline PolicySolution unconstrained_policy(const Vector& te, Index n,
                                           const std::optional<Vector>& cost = std::nullopt) {
    PolicySolution s;
    s.method = PolicyMethod::unconstrained;
    s.pi = (te.array() < 0.0).cast<double>().matrix();
    s.value_rate = policy_value_rate(te, s.pi, n);
    if (cost) {
        if (cost->size() != te.size()) throw ValidationError("cost and effect lengths differ");
        s.spent = s.pi.dot(*cost);
        s.budget = s.spent;
    }
    return s;
}

namespace detail {

inline PolicySolution greedy_allocation(const Vector& te, const Vector& cost, double budget,
                                        Index n, PolicyMethod method) {
    if (te.size() != cost.size()) throw ValidationError("cost and effect lengths differ");
    if (!(budget >= 0.0)) throw ValidationError("budget must be nonnegative");
    std::vector<Index> cand;
    for (Index j = 0; j < te.size(); ++j) {
        if (!(te(j) < 0.0)) continue;
        if (!(cost(j) > 0.0))
            throw ValidationError("candidate unit " + std::to_string(j) +
                                  " has nonpositive cost");
        cand.push_back(j);
    }
    auto key = [&](Index j) {
        return method == PolicyMethod::bc_greedy ? te(j) / cost(j) : te(j);
    };
    std::sort(cand.begin(), cand.end(), [&](Index a, Index b) {
        const double ka = key(a), kb = key(b);
        if (ka != kb) return ka < kb;
        if (cost(a) != cost(b)) return cost(a) < cost(b);
        return a < b;
    });

    PolicySolution s;
    s.method = method;
    s.budget = budget;
    s.pi = Vector::Zero(te.size());
    double spent = 0.0;
    for (Index j : cand) {
        if (spent + cost(j) <= budget) {
            s.pi(j) = 1.0;
            spent += cost(j);
            continue;
        }
        const double frac = (budget - spent) / cost(j);
        if (frac > 0.0) {
            s.pi(j) = frac;
            s.fractional_unit = j;
        }
        break;
    }
    s.spent = s.pi.dot(cost);
    s.residual_budget = budget - s.spent;
    s.value_rate = policy_value_rate(te, s.pi, n);
    return s;
}

}  // namespace detail

/// Fractional knapsack over units with TE_j < 0, ranked by TE_j / c_j
/// (most negative first; ties by lower cost, then lower index). Optimal for
/// the continuous relaxation over [0,1]^J; at most one fractional unit.
inline PolicySolution knapsack_policy(const Vector& te, const Vector& cost, double budget,
                                      Index n) {
    return detail::greedy_allocation(te, cost, budget, n, PolicyMethod::bc_greedy);
}

/// Same greedy mechanics ranked by TE_j alone.
inline PolicySolution te_ranked_policy(const Vector& te, const Vector& cost, double budget,
                                       Index n) {
    return detail::greedy_allocation(te, cost, budget, n, PolicyMethod::te_greedy);
}

/// Drops the fractional unit so every pi_j is 0 or 1; the freed amount is
/// reported as residual budget.
inline PolicySolution make_integral(PolicySolution s, const Vector& te, const Vector& cost,
                                    Index n) {
    if (s.fractional_unit) {
        s.pi(*s.fractional_unit) = 0.0;
        s.fractional_unit.reset();
    }
    s.spent = s.pi.dot(cost);
    s.residual_budget = s.budget - s.spent;
    s.value_rate = policy_value_rate(te, s.pi, n);
    return s;
}

struct SweepRow {
    double fraction = 0.0;
    double budget = 0.0;
    PolicySolution bc;
    PolicySolution te;
};

/// Both greedy policies at budgets f * sum_j c_j for each fraction f.
inline std::vector<SweepRow> budget_sweep(const Vector& te, const Vector& cost,
                                          const std::vector<double>& fractions, Index n) {
    if (!std::is_sorted(fractions.begin(), fractions.end()))
        throw ValidationError("budget fractions must be sorted ascending");
    const double total = cost.sum();
    std::vector<SweepRow> rows;
    rows.reserve(fractions.size());
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0))
            throw ValidationError("budget fraction " + std::to_string(f) + " outside (0,1]");
        SweepRow r;
        r.fraction = f;
        r.budget = f * total;
        r.bc = knapsack_policy(te, cost, r.budget, n);
        r.te = te_ranked_policy(te, cost, r.budget, n);
        rows.push_back(std::move(r));
    }
    return rows;
}

/// value(bc) <= value(te) on every row (lower value = larger reduction).
inline bool sweep_dominance_holds(const std::vector<SweepRow>& rows, double tol = 1e-12) {
    return std::all_of(rows.begin(), rows.end(), [tol](const SweepRow& r) {
        return r.bc.value_rate <= r.te.value_rate + tol * std::max(1.0, std::abs(r.te.value_rate));
    });
}

}  // namespace bnip
