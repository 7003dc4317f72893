#pragma once

// End-to-end steps over a data bundle: load and validate, fit the chosen
// estimator (optionally after propensity trimming), per-unit effects,
// coefficient reports and policies.

#include <string>
#include <vector>

#include "bnip/alearn.hpp"
#include "bnip/config.hpp"
#include "bnip/effects.hpp"
#include "bnip/io.hpp"
#include "bnip/policy.hpp"
#include "bnip/qlearn.hpp"

namespace bnip {

struct Bundle {
    io::OutcomeFile out;
    io::InterventionFile in;
    InterferenceMap h;
    ValidationReport report;
    bool costs_incomplete = false;

    const Vector& costs() const {
        if (!in.table.cost)
            throw ValidationError(costs_incomplete
                                      ? "some intervention costs are missing; run impute-costs first"
                                      : "intervention file has no cost column");
        return *in.table.cost;
    }
};

inline Bundle load_bundle(const std::string& outcomes, const std::string& interventions,
                          const std::string& interference) {
    Bundle b;
    b.out = io::read_outcomes(outcomes);
    b.in = io::read_interventions(interventions);
    b.h = io::read_interference(interference, b.out.table.n(), b.in.table.units());
    // a partially missing cost column is dropped; costs are then unavailable
    // until imputed
    if (b.in.table.cost && b.in.table.cost->array().isNaN().any()) {
        b.in.table.cost.reset();
        b.costs_incomplete = true;
    }
    b.report = validate_bundle(b.h, b.out.table, b.in.table);
    return b;
}

struct ModelResult {
    ModelConfig config;
    Vector alpha, beta;
    Matrix cov_theta;  // (alpha, beta) block, per-sample scale
    std::optional<PropensityFit> propensity;
    std::optional<TrimReport> trim;
    std::optional<ADiagnostics> diagnostics;
    Matrix x_out;  // covariates on the scale the model was fitted on
    std::vector<std::string> out_covariates, int_covariates;

    Matrix cov_beta() const { return cov_theta.bottomRightCorner(beta.size(), beta.size()); }
};

namespace detail {

inline InterventionTable subset_units(const InterventionTable& in, const std::vector<Index>& keep) {
    InterventionTable t;
    t.x.resize(static_cast<Index>(keep.size()), in.x.cols());
    t.a.resize(static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        t.x.row(static_cast<Index>(k)) = in.x.row(keep[k]);
        t.a(static_cast<Index>(k)) = in.a(keep[k]);
    }
    return t;
}

inline InterferenceMap subset_columns(const InterferenceMap& h, const std::vector<Index>& keep) {
    InterferenceMap m;
    m.h.resize(h.n(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) m.h.col(static_cast<Index>(k)) = h.h.col(keep[k]);
    return m;
}

}  // namespace detail

/// Fits the configured estimator. With trim_quantile > 0 the propensity model
/// is fitted on all units, units below the quantile are dropped (with their
/// H columns) and the remaining analysis, including the propensity fit, runs
/// on the kept units.
inline ModelResult fit_model(const Bundle& b, const ModelConfig& cfg) {
    if (!b.report.usable()) throw ValidationError("invalid bundle:\n" + b.report.summary());
    ModelResult r;
    r.config = cfg;
    r.out_covariates = b.out.covariates;
    r.int_covariates = b.in.covariates;

    OutcomeTable out = b.out.table;
    InterventionTable in = b.in.table;
    if (cfg.standardize) {
        out.x = fit_standardizer(out.x).apply(out.x);
        in.x = fit_standardizer(in.x).apply(in.x);
    }
    InterferenceMap h = b.h;
    if (cfg.trim_quantile > 0.0) {
        const PropensityFit full = fit_propensity(in.x, in.a, cfg.propensity);
        r.trim = trim_by_propensity(full, cfg.trim_quantile);
        in = detail::subset_units(in, r.trim->kept);
        h = detail::subset_columns(h, r.trim->kept);
    }
    r.x_out = out.x;

    if (cfg.estimator == "q") {
        const QFit fit = fit_q(out, exposure_map(h, in.a), cfg.outcome);
        r.alpha = fit.alpha;
        r.beta = fit.beta;
        r.cov_theta = fit.cov_theta;
    } else {
        const AFit fit = fit_a(out, in, h, cfg.outcome, cfg.propensity);
        r.alpha = fit.alpha;
        r.beta = fit.beta;
        r.cov_theta = fit.cov_alphabeta;
        r.propensity = fit.gamma_fit;
        r.diagnostics = fit.diagnostics;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Coefficient report

struct CoefficientRow {
    std::string block;  // f0, fA or e
    std::string term;
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;  // two-sided
    bool degenerate = false;  // se numerically zero; p-value carries no information
};

namespace detail {

inline void append_rows(std::vector<CoefficientRow>& rows, const std::string& block,
                        const std::vector<std::string>& names, const Vector& est,
                        const Matrix& cov, double level) {
    const double z = normal_quantile(0.5 + 0.5 * level);
    for (Index k = 0; k < est.size(); ++k) {
        CoefficientRow row;
        row.block = block;
        row.term = names[static_cast<std::size_t>(k)];
        row.estimate = est(k);
        row.se = std::sqrt(std::max(0.0, cov(k, k)));
        row.ci_low = est(k) - z * row.se;
        row.ci_high = est(k) + z * row.se;
        row.degenerate = !(row.se > 1e-10 * std::max(1.0, std::abs(est(k))));
        if (row.se > 0.0)
            row.p_value = 2.0 * normal_cdf(-std::abs(est(k)) / row.se);
        else
            row.p_value = est(k) == 0.0 ? 1.0 : 0.0;
        rows.push_back(row);
    }
}

}  // namespace detail

inline std::vector<CoefficientRow> coefficient_report(const ModelResult& r) {
    std::vector<CoefficientRow> rows;
    const Index ka = r.alpha.size();
    detail::append_rows(rows, "f0", r.config.outcome.f0.names(r.out_covariates), r.alpha,
                        r.cov_theta.topLeftCorner(ka, ka), r.config.level);
    detail::append_rows(rows, "fA", r.config.outcome.fa.names(r.out_covariates), r.beta,
                        r.cov_beta(), r.config.level);
    if (r.propensity && !r.propensity->known) {
        const double J = static_cast<double>(r.propensity->units());
        detail::append_rows(rows, "e", r.config.propensity.names(r.int_covariates),
                            r.propensity->gamma, r.propensity->cov_gamma / J, r.config.level);
    }
    return rows;
}

inline std::string format_coefficients(const std::vector<CoefficientRow>& rows) {
    std::string s = io::header_line("coefficients");
    s += "block,term,estimate,se,ci_low,ci_high,p_value,degenerate\n";
    for (const auto& r : rows) {
        s += r.block + "," + r.term;
        for (double v : {r.estimate, r.se, r.ci_low, r.ci_high, r.p_value})
            s += "," + io::fmt_machine(v);
        s += r.degenerate ? ",1\n" : ",0\n";
    }
    return s;
}

inline std::string render_coefficients(const std::vector<CoefficientRow>& rows) {
    std::vector<std::vector<std::string>> body;
    for (const auto& r : rows)
        body.push_back({r.block, r.term, io::fmt_human(r.estimate), io::fmt_human(r.se),
                        io::fmt_human(r.ci_low), io::fmt_human(r.ci_high),
                        io::fmt_human(r.p_value), r.degenerate ? "degenerate" : ""});
    return io::render_table({"block", "term", "estimate", "se", "ci_low", "ci_high", "p", "flag"},
                            body);
}

// ---------------------------------------------------------------------------
// Effects

inline constexpr const char* effects_caveat =
    "One-sided p-values use a normal approximation with plug-in standard errors and no "
    "correction for testing many units at once; read individual rejections with caution.";

struct EffectsResult {
    EffectTable table;
    std::vector<Index> structurally_absent;
    std::vector<Index> cost_undefined;
};

/// Effects for every intervention unit in the bundle (trimmed units included),
/// scaled by the full J.
inline EffectsResult unit_effects(const Bundle& b, const ModelResult& r) {
    EffectsResult e;
    const Matrix w = te_weights(b.h, r.x_out, r.config.outcome.fa);
    e.table = effect_inference(w, r.beta, r.cov_beta(), r.config.level);
    e.structurally_absent = zero_columns(b.h);
    for (Index j : e.structurally_absent) e.table.total_effect(j) = 0.0;
    if (b.in.table.cost) {
        const BenefitCost bc = benefit_cost(e.table.total_effect, *b.in.table.cost);
        e.table.benefit_cost = bc.ratio;
        e.cost_undefined = bc.undefined;
    }
    return e;
}

inline std::string render_effects(const EffectsResult& e, const std::vector<std::string>& ids) {
    std::vector<std::vector<std::string>> body;
    const auto& t = e.table;
    for (Index j = 0; j < t.units(); ++j) {
        std::vector<std::string> row{ids.empty() ? std::to_string(j) : ids[static_cast<std::size_t>(j)],
                                     io::fmt_human(t.total_effect(j)), io::fmt_human(t.se(j)),
                                     io::fmt_human(t.ci_low(j)), io::fmt_human(t.ci_high(j)),
                                     io::fmt_human(t.p_one_sided(j))};
        if (t.benefit_cost) row.push_back(io::fmt_human((*t.benefit_cost)(j)));
        body.push_back(std::move(row));
    }
    std::vector<std::string> head{"unit", "total_effect", "se", "ci_low", "ci_high", "p_one_sided"};
    if (t.benefit_cost) head.push_back("benefit_cost");
    std::string s = io::render_table(head, body);
    for (Index j : e.structurally_absent)
        s += "unit " + std::to_string(j) + ": no transport; effect structurally absent\n";
    for (Index j : e.cost_undefined)
        s += "unit " + std::to_string(j) + ": nonpositive cost; benefit-cost undefined\n";
    return s + "\n" + effects_caveat + "\n";
}

// ---------------------------------------------------------------------------
// Policies

inline std::string format_policy(const PolicySolution& s, const std::vector<std::string>& ids) {
    std::string extra = "method=" + std::string(to_string(s.method)) +
                        " budget=" + io::fmt_machine(s.budget) + " spent=" + io::fmt_machine(s.spent) +
                        " residual=" + io::fmt_machine(s.residual_budget) +
                        " value_rate=" + io::fmt_machine(s.value_rate);
    if (s.value_count) extra += " value_count=" + io::fmt_machine(*s.value_count);
    std::string out = io::header_line("policy", extra) + "unit,pi\n";
    for (Index j = 0; j < s.pi.size(); ++j)
        out += (ids.empty() ? std::to_string(j) : ids[static_cast<std::size_t>(j)]) + "," +
               io::fmt_machine(s.pi(j)) + "\n";
    return out;
}

/// fA(x_i; beta) per outcome unit, for count-scale values.
inline Vector fitted_fa(const ModelResult& r) {
    return r.config.outcome.fa.expand_rows(r.x_out) * r.beta;
}

inline void attach_count_value(PolicySolution& s, const Bundle& b, const ModelResult& r) {
    if (b.out.table.person_years)
        s.value_count = policy_value_count(b.h, fitted_fa(r), s.pi, *b.out.table.person_years);
}

}  // namespace bnip
