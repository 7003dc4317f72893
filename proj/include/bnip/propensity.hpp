#pragma once

// Logistic propensity model for intervention units: IRLS fit, sandwich
// covariance of sqrt(J)(gamma_hat - gamma0), trimming and intercept
// calibration.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bnip/netdata.hpp"
#include "bnip/stats.hpp"

namespace bnip {

struct PropensityFit {
    FeatureMap basis;
    Vector gamma;        // empty when propensities were supplied directly
    Vector fitted;       // length J, in (0,1)
    Matrix cov_gamma;    // covariance of sqrt(J)(gamma_hat - gamma0)
    bool converged = false;
    int iterations = 0;
    bool quasi_separation = false;
    double score_max_norm = 0.0;
    bool known = false;  // propensities supplied, not estimated

    Index units() const { return fitted.size(); }
};

struct PropensityOptions {
    double tolerance = 1e-8;  // max-norm of the averaged score
    int max_iterations = 100;
};

inline Vector propensity_scores(const Matrix& design, const Vector& gamma) {
    Vector eta = design * gamma;
    return eta.unaryExpr([](double v) { return logistic(v); });
}

/// Averaged score (1/J) sum_j z_j (a_j - e_j).
inline Vector propensity_score_equation(const Matrix& design, const Vector& a,
                                        const Vector& gamma) {
    const Vector p = propensity_scores(design, gamma);
    return design.transpose() * (a - p) / static_cast<double>(design.rows());
}

namespace detail {

inline double bernoulli_loglik(const Vector& eta, const Vector& a) {
    double ll = 0.0;
    for (Index j = 0; j < eta.size(); ++j) {
        // log(1 + exp(eta)) computed without overflow
        const double e = eta(j);
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += a(j) * e - softplus;
    }
    return ll;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

/// Sandwich V_d^{-1} V_phi V_d^{-T} at gamma, with V_d the average negative
/// score Jacobian and V_phi the average score outer product.
inline Matrix propensity_sandwich(const Matrix& design, const Vector& a, const Vector& fitted) {
    const double J = static_cast<double>(design.rows());
    const Vector w = fitted.array() * (1.0 - fitted.array());
    const Matrix bread = design.transpose() * w.asDiagonal() * design / J;
    const Vector r2 = (a - fitted).array().square();
    const Matrix meat = design.transpose() * r2.asDiagonal() * design / J;
    Eigen::FullPivLU<Matrix> lu(bread);
    if (!lu.isInvertible()) throw NumericalError("propensity information matrix is singular");
    const Matrix inv = lu.inverse();
    return detail::symmetrize(inv * meat * inv.transpose());
}

inline PropensityFit fit_propensity(const Matrix& x_int, const Vector& a, const FeatureMap& basis,
                                    const PropensityOptions& opt = {}) {
    const Index J = a.size();
    if (x_int.rows() != J)
        throw ValidationError("propensity covariates have " + std::to_string(x_int.rows()) +
                              " rows but there are " + std::to_string(J) + " treatments");
    const Matrix z = basis.expand_rows(x_int);
    const Index k = z.cols();
    if (J <= k)
        throw ValidationError("propensity model needs more units (" + std::to_string(J) +
                              ") than basis terms (" + std::to_string(k) + ")");
    double treated = 0.0;
    for (Index j = 0; j < J; ++j) {
        if (a(j) != 0.0 && a(j) != 1.0)
            throw ValidationError("non-binary treatment at index " + std::to_string(j));
        treated += a(j);
    }
    if (treated == 0.0 || treated == static_cast<double>(J))
        throw ValidationError("propensity model needs both treated and untreated units");

    PropensityFit fit;
    fit.basis = basis;
    fit.gamma = Vector::Zero(k);
    if (basis.include_intercept) fit.gamma(0) = logit(treated / static_cast<double>(J));

    Vector eta = z * fit.gamma;
    double ll = detail::bernoulli_loglik(eta, a);
    for (fit.iterations = 0; fit.iterations < opt.max_iterations; ++fit.iterations) {
        const Vector p = eta.unaryExpr([](double v) { return logistic(v); });
        const Vector resid = a - p;
        const Vector score = z.transpose() * resid;
        fit.score_max_norm = score.cwiseAbs().maxCoeff() / static_cast<double>(J);
        if (fit.score_max_norm <= opt.tolerance) {
            fit.converged = true;
            break;
        }
        const Vector w = p.array() * (1.0 - p.array());
        const Matrix info = z.transpose() * w.asDiagonal() * z;
        Eigen::LDLT<Matrix> ldlt(info);
        Vector step = ldlt.solve(score);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            step = info.completeOrthogonalDecomposition().solve(score);
        }
        // step halving keeps the log-likelihood nondecreasing
        double scale = 1.0;
        Vector trial_gamma;
        Vector trial_eta;
        double trial_ll = ll;
        for (int h = 0; h < 40; ++h) {
            trial_gamma = fit.gamma + scale * step;
            trial_eta = z * trial_gamma;
            trial_ll = detail::bernoulli_loglik(trial_eta, a);
            if (trial_ll >= ll - 1e-12 * std::abs(ll)) break;
            scale *= 0.5;
        }
        fit.gamma = trial_gamma;
        eta = trial_eta;
        ll = trial_ll;
    }
    fit.fitted = eta.unaryExpr([](double v) { return logistic(v); });
    if (!fit.converged) {
        fit.score_max_norm =
            (z.transpose() * (a - fit.fitted)).cwiseAbs().maxCoeff() / static_cast<double>(J);
        fit.converged = fit.score_max_norm <= opt.tolerance;
    }
    fit.quasi_separation = (fit.fitted.array() < 1e-10).any() ||
                           (fit.fitted.array() > 1.0 - 1e-10).any();
    fit.cov_gamma = propensity_sandwich(z, a, fit.fitted);
    return fit;
}

/// Wraps supplied propensities so downstream estimators treat them as fixed
/// (no estimation noise propagates into their covariance).
inline PropensityFit known_propensity(const Vector& e) {
    for (Index j = 0; j < e.size(); ++j) {
        if (!(e(j) > 0.0 && e(j) < 1.0))
            throw ValidationError("supplied propensity at index " + std::to_string(j) +
                                  " is outside (0,1)");
    }
    PropensityFit fit;
    fit.fitted = e;
    fit.cov_gamma = Matrix(0, 0);
    fit.converged = true;
    fit.known = true;
    return fit;
}

// ---------------------------------------------------------------------------

struct TrimReport {
    double threshold = 0.0;
    std::vector<Index> kept;
    std::vector<Index> dropped;
};

/// Drops units whose fitted propensity is strictly below the empirical
/// `quantile` of all fitted values.
inline TrimReport trim_by_propensity(const Vector& fitted, double quantile) {
    if (!(quantile >= 0.0 && quantile < 1.0))
        throw ValidationError("trim quantile must lie in [0,1), got " + std::to_string(quantile));
    TrimReport r;
    r.threshold = quantile_type7(std::vector<double>(fitted.begin(), fitted.end()), quantile);
    for (Index j = 0; j < fitted.size(); ++j) {
        (fitted(j) < r.threshold ? r.dropped : r.kept).push_back(j);
    }
    return r;
}

inline TrimReport trim_by_propensity(const PropensityFit& fit, double quantile) {
    return trim_by_propensity(fit.fitted, quantile);
}

/// Finds the intercept that makes the average propensity hit `target_mean`,
/// holding the non-intercept coefficients fixed. The mean is strictly
/// increasing in the intercept, so bisection on an expanding bracket always
/// succeeds; it runs to machine precision and then checks `tol`.
inline double calibrate_propensity_intercept(const Matrix& x_int, const FeatureMap& basis,
                                             const Vector& slopes, double target_mean,
                                             double tol) {
    if (!(target_mean > 0.0 && target_mean < 1.0))
        throw ValidationError("target mean propensity must lie in (0,1)");
    if (!(tol > 0.0)) throw ValidationError("calibration tolerance must be positive");
    if (!basis.include_intercept) throw ValidationError("calibration needs an intercept term");
    const Matrix z = basis.expand_rows(x_int);
    if (slopes.size() != z.cols() - 1)
        throw ValidationError("expected " + std::to_string(z.cols() - 1) +
                              " slope coefficients, got " + std::to_string(slopes.size()));
    const Vector offset = z.rightCols(z.cols() - 1) * slopes;
    auto mean_at = [&](double b) {
        double s = 0.0;
        for (Index j = 0; j < offset.size(); ++j) s += logistic(b + offset(j));
        return s / static_cast<double>(offset.size());
    };

    double lo = -1.0, hi = 1.0;
    while (mean_at(lo) > target_mean) lo = 2.0 * lo - 1.0;
    while (mean_at(hi) < target_mean) hi = 2.0 * hi + 1.0;
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double m = mean_at(mid);
        if (m == target_mean) {
            lo = hi = mid;
            break;
        }
        (m < target_mean ? lo : hi) = mid;
    }
    const double best =
        std::abs(mean_at(lo) - target_mean) <= std::abs(mean_at(hi) - target_mean) ? lo : hi;
    if (std::abs(mean_at(best) - target_mean) > tol)
        throw NumericalError("propensity intercept calibration missed its tolerance");
    return best;
}

}  // namespace bnip
