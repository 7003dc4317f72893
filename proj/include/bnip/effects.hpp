#pragma once

// Per-intervention-unit effects: TotalEffect, standard errors, one-sided
// tests of H0: TE_j >= 0, confidence intervals and benefit-cost ratios.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bnip/netdata.hpp"
#include "bnip/stats.hpp"

namespace bnip {

/// w_j = (1/J) sum_i H_ij fA(x_i); rows of the returned J x dim(beta) matrix.
inline Matrix te_weights(const InterferenceMap& h, const Matrix& x_out, const FeatureMap& fa) {
    if (h.n() != x_out.rows())
        throw ValidationError("interference map rows do not match outcome covariate rows");
    return h.h.transpose() * fa.expand_rows(x_out) / static_cast<double>(h.units());
}

struct TotalEffects {
    Vector te;
    std::vector<Index> structurally_absent;  // zero columns of H; TE forced to 0
};

inline TotalEffects total_effects(const InterferenceMap& h, const Matrix& x_out, const Vector& beta,
                                  const FeatureMap& fa) {
    if (fa.dim(x_out.cols()) != beta.size())
        throw ValidationError("beta has " + std::to_string(beta.size()) +
                              " coefficients but the effect basis has " +
                              std::to_string(fa.dim(x_out.cols())));
    TotalEffects out;
    out.te = te_weights(h, x_out, fa) * beta;
    out.structurally_absent = zero_columns(h);
    for (Index j : out.structurally_absent) out.te(j) = 0.0;
    return out;
}

inline TotalEffects total_effects(const InterferenceMap& h, const OutcomeTable& out,
                                  const Vector& beta, const FeatureMap& fa) {
    return total_effects(h, out.x, beta, fa);
}

struct EffectTable {
    Vector total_effect;
    Vector se;
    Vector p_one_sided;  // P(Z <= TE/se), small when strongly protective
    Vector ci_low;
    Vector ci_high;
    std::optional<Vector> benefit_cost;  // NaN where cost <= 0
    double level = 0.95;

    Index units() const { return total_effect.size(); }
};

inline double one_sided_p(double te, double se) {
    if (se > 0.0) return normal_cdf(te / se);
    if (te < 0.0) return 0.0;
    return te > 0.0 ? 1.0 : 0.5;
}

/// Standard errors, CIs and one-sided p-values for TE = W beta with
/// cov_beta on the per-sample scale.
inline EffectTable effect_inference(const Matrix& weights, const Vector& beta,
                                    const Matrix& cov_beta, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("CI level must lie in (0,1)");
    if (weights.cols() != beta.size() || cov_beta.rows() != beta.size() ||
        cov_beta.cols() != beta.size())
        throw ValidationError("effect weights, beta and covariance dimensions disagree");
    EffectTable t;
    t.level = level;
    t.total_effect = weights * beta;
    const Index J = weights.rows();
    t.se.resize(J);
    t.p_one_sided.resize(J);
    t.ci_low.resize(J);
    t.ci_high.resize(J);
    const double z = normal_quantile(0.5 + 0.5 * level);
    const Matrix wc = weights * cov_beta;
    for (Index j = 0; j < J; ++j) {
        double var = wc.row(j).dot(weights.row(j));
        const double magnitude =
            (weights.row(j).cwiseAbs() * cov_beta.cwiseAbs() * weights.row(j).cwiseAbs().transpose())
                .value();
        if (var < 0.0) {
            if (var < -1e-10 * std::max(magnitude, std::numeric_limits<double>::min()))
                throw NumericalError("negative effect variance for unit " + std::to_string(j) +
                                     ": the beta covariance block is not positive semidefinite");
            var = 0.0;
        }
        t.se(j) = std::sqrt(var);
        t.p_one_sided(j) = one_sided_p(t.total_effect(j), t.se(j));
        t.ci_low(j) = t.total_effect(j) - z * t.se(j);
        t.ci_high(j) = t.total_effect(j) + z * t.se(j);
    }
    return t;
}

struct BenefitCost {
    Vector ratio;               // NaN where undefined
    std::vector<Index> undefined;  // units with cost <= 0

    bool defined(Index j) const { return !std::isnan(ratio(j)); }
};

inline BenefitCost benefit_cost(const Vector& te, const Vector& cost) {
    if (te.size() != cost.size()) throw ValidationError("effect and cost lengths differ");
    BenefitCost bc;
    bc.ratio.resize(te.size());
    for (Index j = 0; j < te.size(); ++j) {
        if (cost(j) > 0.0 && std::isfinite(cost(j))) {
            bc.ratio(j) = te(j) / cost(j);
        } else {
            bc.ratio(j) = std::numeric_limits<double>::quiet_NaN();
            bc.undefined.push_back(j);
        }
    }
    return bc;
}

}  // namespace bnip
