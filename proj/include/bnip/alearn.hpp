#pragma once

// A-learning: doubly robust joint estimation of (alpha, beta) given a
// propensity model for the intervention units, with the augmented sandwich
// covariance Omega = Omega_phi + Omega_gamma.
//
// Estimating equations (all bases linear in their parameters):
//   alpha block: (1/n) sum_i f0(x_i) r_i = 0
//   beta block:  (1/n) sum_i lambda_i r_i (abar_i - abar_hat_i) = 0
// with r_i = Y_i - f0(x_i).alpha - abar_i fA(x_i).beta,
// lambda_i = c_i fA(x_i), c_i = (1/J) sum_j H_ij and
// abar_hat = (1/J) H e(gamma_hat).

#include <limits>
#include <optional>
#include <string>

#include "bnip/exposure.hpp"
#include "bnip/propensity.hpp"
#include "bnip/qlearn.hpp"

namespace bnip {

/// Data-bound view of the A-learning estimating equations. Exposes the
/// averaged estimating function and its analytic Jacobians so the fit and the
/// covariance share one definition.
class ALearnProblem {
public:
    ALearnProblem(const OutcomeTable& out, const InterventionTable& in, const InterferenceMap& h,
                  const OutcomeModelSpec& spec, const FeatureMap& prop_basis)
        : spec_(spec), prop_basis_(prop_basis), h_(h.h), y_(out.y) {
        if (out.x.rows() != out.y.size())
            throw ValidationError("outcome covariate rows do not match outcome count");
        if (h.n() != out.y.size() || h.units() != in.a.size() || in.x.rows() != in.a.size())
            throw ValidationError("A-learning inputs have inconsistent dimensions");
        phi0_ = spec.f0.expand_rows(out.x);
        phia_ = spec.fa.expand_rows(out.x);
        zgamma_ = prop_basis.expand_rows(in.x);
        abar_ = exposure_map(h, in.a);
        mass_ = exposure_row_mass(h);
        lambda_ = mass_.asDiagonal() * phia_;
        design_.resize(n(), alpha_dim() + beta_dim());
        design_.leftCols(alpha_dim()) = phi0_;
        design_.rightCols(beta_dim()) = abar_.asDiagonal() * phia_;
    }

    Index n() const { return y_.size(); }
    Index units() const { return h_.cols(); }
    Index alpha_dim() const { return phi0_.cols(); }
    Index beta_dim() const { return phia_.cols(); }
    Index gamma_dim() const { return zgamma_.cols(); }

    const Matrix& design() const { return design_; }
    const Vector& outcomes() const { return y_; }
    const Vector& exposure() const { return abar_; }
    const Vector& row_mass() const { return mass_; }
    const Matrix& propensity_design() const { return zgamma_; }

    Vector propensities(const Vector& gamma) const { return propensity_scores(zgamma_, gamma); }

    Vector expected_exposure_at(const Vector& e) const {
        return h_ * e / static_cast<double>(units());
    }

    /// Instruments z_i = (f0(x_i), lambda_i (abar_i - abar_hat_i)).
    Matrix instruments(const Vector& e) const {
        const Vector gap = abar_ - expected_exposure_at(e);
        Matrix z(n(), alpha_dim() + beta_dim());
        z.leftCols(alpha_dim()) = phi0_;
        z.rightCols(beta_dim()) = gap.asDiagonal() * lambda_;
        return z;
    }

    Vector residuals(const Vector& theta) const { return y_ - design_ * theta; }

    /// Averaged augmented estimating function at (theta, e).
    Vector estimating_function(const Vector& theta, const Vector& e) const {
        return instruments(e).transpose() * residuals(theta) / static_cast<double>(n());
    }

    Vector estimating_function_gamma(const Vector& theta, const Vector& gamma) const {
        return estimating_function(theta, propensities(gamma));
    }

    /// (1/n) dPhi/d(alpha, beta); constant in theta for linear bases.
    Matrix jacobian_theta(const Vector& e) const {
        return -instruments(e).transpose() * design_ / static_cast<double>(n());
    }

    /// (1/n) dPhi/dgamma at (theta, gamma). The alpha rows are zero.
    Matrix jacobian_gamma(const Vector& theta, const Vector& gamma) const {
        const Vector e = propensities(gamma);
        const Vector w = e.array() * (1.0 - e.array());
        // d abar_hat_i / d gamma = (1/J) sum_j H_ij e_j (1 - e_j) z_j^T
        const Matrix g = h_ * (w.asDiagonal() * zgamma_) / static_cast<double>(units());
        const Vector r = residuals(theta);
        Matrix jac = Matrix::Zero(alpha_dim() + beta_dim(), gamma_dim());
        jac.bottomRows(beta_dim()) =
            -(r.asDiagonal() * lambda_).transpose() * g / static_cast<double>(n());
        return jac;
    }

    /// Per-unit augmented scores phi_i^aug = z_i r_i, stacked as rows.
    Matrix unit_scores(const Vector& theta, const Vector& e) const {
        return residuals(theta).asDiagonal() * instruments(e);
    }

    const OutcomeModelSpec& spec() const { return spec_; }
    const FeatureMap& propensity_basis() const { return prop_basis_; }

private:
    OutcomeModelSpec spec_;
    FeatureMap prop_basis_;
    Matrix h_;
    Vector y_;
    Matrix phi0_;
    Matrix phia_;
    Matrix zgamma_;
    Vector abar_;
    Vector mass_;
    Matrix lambda_;
    Matrix design_;
};

struct ACovariance {
    Matrix cov;          // (Omega_phi + Omega_gamma) / n
    Matrix omega_phi;
    Matrix omega_gamma;
    Matrix sigma_theta;  // (1/n) dPhi/d(alpha, beta)
    Matrix sigma_gamma;  // (1/n) dPhi/dgamma
    Matrix sigma_phi;    // (1/n) sum phi phi^T
    double ratio_r = 0.0;
};

/// (1/R) (S^{-1} Sigma_gamma) Omega_eps (S^{-1} Sigma_gamma)^T.
inline Matrix omega_gamma_term(const Matrix& sigma_theta_inv, const Matrix& sigma_gamma,
                               const Matrix& cov_gamma, double ratio_r) {
    if (sigma_gamma.cols() == 0 || cov_gamma.size() == 0)
        return Matrix::Zero(sigma_theta_inv.rows(), sigma_theta_inv.rows());
    const Matrix m = sigma_theta_inv * sigma_gamma;
    return m * cov_gamma * m.transpose() / ratio_r;
}

inline ACovariance a_covariance(const ALearnProblem& prob, const Vector& theta,
                                const PropensityFit& prop) {
    ACovariance c;
    const Vector& e = prop.fitted;
    const double dn = static_cast<double>(prob.n());
    c.ratio_r = static_cast<double>(prob.units()) / dn;
    c.sigma_theta = prob.jacobian_theta(e);
    Eigen::FullPivLU<Matrix> lu(c.sigma_theta);
    if (!lu.isInvertible()) throw NumericalError("A-learning bread matrix is singular");
    const Matrix s_inv = lu.inverse();

    const Matrix scores = prob.unit_scores(theta, e);
    c.sigma_phi = scores.transpose() * scores / dn;
    c.omega_phi = s_inv * c.sigma_phi * s_inv.transpose();

    if (prop.known) {
        c.sigma_gamma = Matrix::Zero(theta.size(), 0);
        c.omega_gamma = Matrix::Zero(theta.size(), theta.size());
    } else {
        c.sigma_gamma = prob.jacobian_gamma(theta, prop.gamma);
        c.omega_gamma = omega_gamma_term(s_inv, c.sigma_gamma, prop.cov_gamma, c.ratio_r);
    }
    const Matrix total = (c.omega_phi + c.omega_gamma) / dn;
    c.cov = 0.5 * (total + total.transpose());
    return c;
}

struct ADiagnostics {
    double alpha_block_norm = 0.0;  // max-norm of the alpha estimating block at the root
    double beta_block_norm = 0.0;
    double scale = 1.0;             // max_k (1/n) sum_i |z_ik y_i|
    double condition = 0.0;
    bool ill_conditioned = false;   // condition above the warning threshold
};

struct AFit {
    OutcomeModelSpec spec;
    Vector alpha;
    Vector beta;
    PropensityFit gamma_fit;
    Matrix cov_alphabeta;  // per-sample scale, (Omega_phi + Omega_gamma) / n
    ACovariance blocks;
    double ratio_r = 0.0;
    ADiagnostics diagnostics;
    Vector residuals;
    Vector abar_hat;

    Vector theta() const {
        Vector t(alpha.size() + beta.size());
        t << alpha, beta;
        return t;
    }
    Matrix cov_beta() const {
        return cov_alphabeta.bottomRightCorner(beta.size(), beta.size());
    }
};

struct AFitOptions {
    std::optional<Vector> known_propensity;  // skip the propensity fit
    PropensityOptions propensity;
    double condition_warn = 1e10;
    double condition_fail = 1e14;
};

/// Solves the joint (alpha, beta) system for fixed propensities. Returns theta.
inline Vector solve_a_system(const ALearnProblem& prob, const Vector& e, ADiagnostics& diag,
                             const AFitOptions& opt = {}) {
    const Matrix z = prob.instruments(e);
    const double dn = static_cast<double>(prob.n());
    const Matrix m = z.transpose() * prob.design() / dn;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    diag.condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
    if (!(diag.condition <= opt.condition_fail))
        throw NumericalError("singular A-learning system (condition estimate " +
                             std::to_string(diag.condition) + ")");
    diag.ill_conditioned = diag.condition > opt.condition_warn;

    const Vector& y = prob.outcomes();
    const Vector rhs = z.transpose() * y / dn;
    Vector theta = m.colPivHouseholderQr().solve(rhs);
    // one refinement step on the residual of the square system
    theta += m.colPivHouseholderQr().solve(rhs - m * theta);

    const Vector blocks = z.transpose() * (y - prob.design() * theta) / dn;
    diag.alpha_block_norm = blocks.head(prob.alpha_dim()).cwiseAbs().maxCoeff();
    diag.beta_block_norm = blocks.tail(prob.beta_dim()).cwiseAbs().maxCoeff();
    diag.scale = std::max(1e-300, ((z.cwiseAbs().transpose() * y.cwiseAbs()) / dn).maxCoeff());
    return theta;
}

inline AFit fit_a(const OutcomeTable& out, const InterventionTable& in, const InterferenceMap& h,
                  const OutcomeModelSpec& spec, const FeatureMap& prop_basis,
                  const AFitOptions& opt = {}) {
    const ALearnProblem prob(out, in, h, spec, prop_basis);
    if (prob.n() <= prob.alpha_dim() + prob.beta_dim())
        throw ValidationError("A-learning needs more outcome units than outcome parameters");

    AFit fit;
    fit.spec = spec;
    fit.gamma_fit = opt.known_propensity ? known_propensity(*opt.known_propensity)
                                         : fit_propensity(in.x, in.a, prop_basis, opt.propensity);
    const Vector& e = fit.gamma_fit.fitted;
    if (e.size() != prob.units())
        throw ValidationError("supplied propensities do not match the intervention count");

    const Vector theta = solve_a_system(prob, e, fit.diagnostics, opt);
    fit.alpha = theta.head(prob.alpha_dim());
    fit.beta = theta.tail(prob.beta_dim());
    fit.residuals = prob.residuals(theta);
    fit.abar_hat = prob.expected_exposure_at(e);
    fit.blocks = a_covariance(prob, theta, fit.gamma_fit);
    fit.cov_alphabeta = fit.blocks.cov;
    fit.ratio_r = fit.blocks.ratio_r;
    return fit;
}

}  // namespace bnip
