#pragma once

// Q-learning: least squares fit of the linear-exposure outcome model
//   mu_i = f0(x_i) . alpha + abar_i * fA(x_i) . beta
// with the M-estimation sandwich covariance.

#include <string>

#include "bnip/netdata.hpp"

namespace bnip {

struct OutcomeModelSpec {
    FeatureMap f0{BasisKind::linear};
    FeatureMap fa{BasisKind::linear};

    Index alpha_dim(Index p) const { return f0.dim(p); }
    Index beta_dim(Index p) const { return fa.dim(p); }
};

/// Rows d_i = (f0(x_i), abar_i * fA(x_i)).
inline Matrix outcome_design(const Matrix& x, const Vector& abar, const OutcomeModelSpec& spec) {
    if (abar.size() != x.rows())
        throw ValidationError("exposure length " + std::to_string(abar.size()) +
                              " does not match " + std::to_string(x.rows()) + " outcome rows");
    const Matrix phi0 = spec.f0.expand_rows(x);
    const Matrix phia = spec.fa.expand_rows(x);
    Matrix d(x.rows(), phi0.cols() + phia.cols());
    d.leftCols(phi0.cols()) = phi0;
    d.rightCols(phia.cols()) = abar.asDiagonal() * phia;
    return d;
}

struct QFit {
    OutcomeModelSpec spec;
    Vector alpha;
    Vector beta;
    Matrix cov_theta;  // covariance of (alpha_hat, beta_hat), already divided by n
    Vector residuals;
    Matrix bread;      // (1/n) sum d_i d_i^T
    Matrix meat;       // (1/n) sum d_i d_i^T r_i^2

    Vector theta() const {
        Vector t(alpha.size() + beta.size());
        t << alpha, beta;
        return t;
    }
    Matrix cov_beta() const {
        return cov_theta.bottomRightCorner(beta.size(), beta.size());
    }
    Vector se_theta() const { return cov_theta.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Averaged estimating function (1/n) sum_i (Y_i - d_i . theta) d_i.
inline Vector q_estimating_function(const Matrix& design, const Vector& y, const Vector& theta) {
    return design.transpose() * (y - design * theta) / static_cast<double>(design.rows());
}

/// Analytic bread (1/n) sum d_i d_i^T, the negative Jacobian of the averaged
/// estimating function.
inline Matrix q_bread(const Matrix& design) {
    return design.transpose() * design / static_cast<double>(design.rows());
}

inline QFit fit_q(const OutcomeTable& out, const Vector& abar, const OutcomeModelSpec& spec) {
    if (out.x.rows() != out.y.size())
        throw ValidationError("outcome covariate rows do not match outcome count");
    const Matrix d = outcome_design(out.x, abar, spec);
    const Index n = d.rows();
    const Index k = d.cols();
    if (n <= k)
        throw ValidationError("Q-learning needs more outcome units (" + std::to_string(n) +
                              ") than parameters (" + std::to_string(k) + ")");

    Eigen::ColPivHouseholderQR<Matrix> qr(d);
    const Matrix r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(r);
    const Vector& sv = svd.singularValues();
    const double tol = 1e-10 * sv(0);
    if (!(sv(0) > 0.0) || sv(k - 1) < tol) {
        Index rank = 0;
        while (rank < k && sv(rank) >= tol && sv(rank) > 0.0) ++rank;
        const Index pivot = qr.colsPermutation().indices()(std::min(rank, k - 1));
        throw NumericalError("rank-deficient outcome design: rank " + std::to_string(rank) +
                             " of " + std::to_string(k) + ", offending pivot column " +
                             std::to_string(pivot));
    }

    QFit fit;
    fit.spec = spec;
    const Vector theta = qr.solve(out.y);
    const Index ka = spec.f0.dim(out.x.cols());
    fit.alpha = theta.head(ka);
    fit.beta = theta.tail(k - ka);
    fit.residuals = out.y - d * theta;

    const double dn = static_cast<double>(n);
    fit.bread = q_bread(d);
    fit.meat = d.transpose() * fit.residuals.array().square().matrix().asDiagonal() * d / dn;

    // (D^T D / n)^{-1} = n P R^{-1} R^{-T} P^T
    const Matrix rinv = r.template triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
    const auto& perm = qr.colsPermutation();
    const Matrix bread_inv = dn * (perm * (rinv * rinv.transpose()) * perm.transpose());
    const Matrix cov = bread_inv * fit.meat * bread_inv.transpose() / dn;
    fit.cov_theta = 0.5 * (cov + cov.transpose());
    return fit;
}

inline Vector q_predict(const QFit& fit, const Matrix& x, const Vector& abar) {
    const Matrix phi0 = fit.spec.f0.expand_rows(x);
    const Matrix phia = fit.spec.fa.expand_rows(x);
    if (phi0.cols() != fit.alpha.size() || phia.cols() != fit.beta.size())
        throw ValidationError("covariate width does not match the fitted Q model");
    if (abar.size() != x.rows()) throw ValidationError("exposure length does not match rows");
    return phi0 * fit.alpha + abar.cwiseProduct(phia * fit.beta);
}

inline Vector q_predict(const QFit& fit, const OutcomeTable& out, const Vector& abar) {
    return q_predict(fit, out.x, abar);
}

}  // namespace bnip
