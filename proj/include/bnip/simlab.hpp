#pragma once

// Seeded synthetic data generation and the Monte Carlo harness: calibrated
// quadratic outcome/propensity truth, SNR-controlled Gaussian noise, six
// estimator cells and Bias / RMSE / coverage summaries.
//
// The design (covariates, interference map, calibrated truth) is drawn once
// per master seed and held fixed; each replication redraws treatments and
// noise from its own derived seed.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bnip/alearn.hpp"
#include "bnip/effects.hpp"
#include "bnip/exposure.hpp"
#include "bnip/propensity.hpp"
#include "bnip/qlearn.hpp"

namespace bnip {

enum class CovariateSource { synthetic_gaussian, user_supplied };
// synthetic_spatial: units on the unit square, H_ij = L_ij exp(-d_ij^2 / (2 l^2))
// with L_ij ~ lognormal(0,1), rescaled so mean(H) equals the lognormal mean.
// synthetic_lognormal: dense i.i.d. lognormal(0,1).
enum class HSource { synthetic_spatial, synthetic_lognormal, user_supplied };

inline std::string_view to_string(HSource s) {
    switch (s) {
        case HSource::synthetic_spatial: return "synthetic_spatial";
        case HSource::synthetic_lognormal: return "synthetic_lognormal";
        case HSource::user_supplied: return "user_supplied";
    }
    return "unknown";
}

inline std::string_view to_string(CovariateSource s) {
    return s == CovariateSource::synthetic_gaussian ? "synthetic_gaussian" : "user_supplied";
}

struct SimConfig {
    Index n = 2000;
    Index units = 100;  // J
    Index p = 3;
    Index q = 3;
    double snr = 3.0;
    Index reps = 1000;
    std::uint64_t master_seed = 20240917;
    // Full quadratic-basis coefficients (intercept, linear, squared). Intercepts
    // are recalibrated; empty means "use defaults".
    std::optional<Vector> alpha0;
    std::optional<Vector> beta0;
    std::optional<Vector> gamma0;
    double target_mean_propensity = 0.19;
    double target_mean_outcome = 0.29;
    double propensity_tolerance = 0.01;
    double outcome_tolerance = 0.001;
    CovariateSource covariate_source = CovariateSource::synthetic_gaussian;
    HSource h_source = HSource::synthetic_spatial;
    double h_bandwidth = 0.1;  // spatial kernel length scale
    std::optional<Matrix> x_out;  // user-supplied covariates (raw, standardized here)
    std::optional<Matrix> x_int;
    std::optional<Matrix> h;
    unsigned threads = 0;  // 0: BNIP_THREADS or hardware concurrency
    bool keep_records = false;
};

inline void validate_config(const SimConfig& c) {
    if (!(c.snr > 0.0) || !std::isfinite(c.snr)) throw ValidationError("snr must be positive");
    if (c.reps < 1) throw ValidationError("reps must be at least 1");
    if (c.n < 2) throw ValidationError("n must be at least 2");
    if (c.units < 2) throw ValidationError("J must be at least 2");
    if (c.p < 1 || c.q < 1) throw ValidationError("covariate widths p and q must be positive");
    if (!(c.propensity_tolerance > 0.0) || !(c.outcome_tolerance > 0.0))
        throw ValidationError("calibration tolerances must be positive");
    if (!(c.target_mean_propensity > 0.0 && c.target_mean_propensity < 1.0))
        throw ValidationError("target_mean_propensity must lie in (0,1)");
    if (!std::isfinite(c.target_mean_outcome))
        throw ValidationError("target_mean_outcome must be finite");
    if (c.covariate_source == CovariateSource::user_supplied && (!c.x_out || !c.x_int))
        throw ValidationError("user-supplied covariates require x_out and x_int");
    if (!(c.h_bandwidth > 0.0) || !std::isfinite(c.h_bandwidth))
        throw ValidationError("h_bandwidth must be positive");
    if (c.h_source == HSource::user_supplied && !c.h)
        throw ValidationError("user-supplied interference map missing");
}

/// Coefficient vectors from the reference simulation, laid out for 13 outcome
/// covariates (alpha, beta: 1 + 13 + 13) and 6 intervention covariates.
namespace reference_parameters {

inline Vector theta() {
    Vector t(54);
    t << -0.000955, 0.0288, 0.0382, -0.000148, -0.00227, 0.0167, -0.0199,  //
        0.0396, 0.0152, 0.0173, -0.0119, 0.0161, 0.0329, 0.0365,           //
        -0.0203, 0.0221, -0.0181, -0.0262, 2.170e-05, 0.0305, -0.0310,     //
        0.0357, -0.0187, 0.00968, 0.0204, 0.0269, 0.00420, -0.000470,      //
        -0.000344, -0.000490, 0.000127, 0.00115, 0.00140, 0.00118, 0.00133,  //
        0.00120, -0.000423, -0.000867, 0.000361, -0.00135, -0.001362, 5.567e-05,  //
        0.000982, -0.000606, 0.000586, -0.00121, -0.000864, -0.000517,     //
        -0.00135, -0.000558, 0.00103, 0.00106, 0.00117, -0.000676;
    return t;
}

/// Printed order is 6 linear slopes, 5 squared slopes, intercept. The sixth
/// squared slope is absent and taken as zero.
inline Vector gamma() {
    Vector printed(12);
    printed << -0.681, 0.131, -0.704, 0.386, 0.334, 0.424, 0.00141, -0.00471, 0.010, -0.0140,
        -0.0107, -1.449;
    Vector g = Vector::Zero(13);
    g(0) = printed(11);
    g.segment(1, 6) = printed.head(6);
    g.segment(7, 5) = printed.segment(6, 5);
    return g;
}

constexpr Index outcome_width = 13;
constexpr Index intervention_width = 6;

}  // namespace reference_parameters

struct SimDesign {
    Matrix x_out;  // standardized, n x p
    Matrix x_int;  // standardized, J x q
    InterferenceMap h;
    Vector alpha0;  // quadratic basis, calibrated intercept
    Vector beta0;
    Vector gamma0;
    Vector propensity;     // true e_j
    Vector fa_true;        // fA(x_i; beta0)
    Vector f0_true;        // f0(x_i; alpha0)
    Vector te_true;        // TotalEffect_j under beta0
    double mean_propensity = 0.0;
    double mean_outcome = 0.0;  // mean of mu under expected exposure
    bool reference_parameters = false;
    double snr = 3.0;

    static FeatureMap truth_basis() { return FeatureMap{BasisKind::quadratic}; }
};

namespace detail {

inline Matrix standard_normal_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = z(rng);
    return m;
}

inline Vector uniform_vector(std::mt19937_64& rng, Index size, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(size);
    for (Index k = 0; k < size; ++k) v(k) = u(rng);
    return v;
}

inline double sample_variance(const Vector& v) {
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline Matrix spatial_map(std::mt19937_64& rng, Index n, Index J, double bandwidth) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::lognormal_distribution<double> ln(0.0, 1.0);
    Matrix out_xy(n, 2), int_xy(J, 2);
    for (Index i = 0; i < n; ++i) out_xy(i, 0) = u(rng), out_xy(i, 1) = u(rng);
    for (Index j = 0; j < J; ++j) int_xy(j, 0) = u(rng), int_xy(j, 1) = u(rng);
    Matrix h(n, J);
    const double denom = 2.0 * bandwidth * bandwidth;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < J; ++j) {
            const double d2 = (out_xy.row(i) - int_xy.row(j)).squaredNorm();
            h(i, j) = ln(rng) * std::exp(-d2 / denom);
        }
    const double m = h.mean();
    if (!(m > 0.0)) throw NumericalError("spatial interference map is identically zero");
    return h * (std::exp(0.5) / m);
}

constexpr std::uint64_t design_stream = 0xffffffffffffffffULL;

}  // namespace detail

inline SimDesign generate_design(const SimConfig& config) {
    validate_config(config);
    std::mt19937_64 rng(derive_seed(config.master_seed, detail::design_stream));
    SimDesign d;
    d.snr = config.snr;

    Matrix x_out, x_int;
    if (config.covariate_source == CovariateSource::user_supplied) {
        x_out = *config.x_out;
        x_int = *config.x_int;
    } else {
        x_out = detail::standard_normal_matrix(rng, config.n, config.p);
        x_int = detail::standard_normal_matrix(rng, config.units, config.q);
    }
    d.x_out = fit_standardizer(x_out).apply(x_out);
    d.x_int = fit_standardizer(x_int).apply(x_int);
    const Index n = d.x_out.rows(), J = d.x_int.rows();
    const Index p = d.x_out.cols(), q = d.x_int.cols();

    if (config.h_source == HSource::user_supplied) {
        d.h.h = *config.h;
    } else if (config.h_source == HSource::synthetic_lognormal) {
        std::lognormal_distribution<double> ln(0.0, 1.0);
        d.h.h.resize(n, J);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < J; ++j) d.h.h(i, j) = ln(rng);
    } else {
        d.h.h = detail::spatial_map(rng, n, J, config.h_bandwidth);
    }
    if (d.h.n() != n || d.h.units() != J)
        throw ValidationError("interference map dimensions do not match the covariates");

    const FeatureMap basis = SimDesign::truth_basis();
    const Index ka = basis.dim(p), kg = basis.dim(q);
    const bool ref_out = p == reference_parameters::outcome_width;
    const bool ref_int = q == reference_parameters::intervention_width;
    d.reference_parameters = ref_out && ref_int && !config.alpha0 && !config.beta0 &&
                             !config.gamma0;
    if (config.alpha0) {
        d.alpha0 = *config.alpha0;
    } else {
        d.alpha0 = ref_out ? Vector(reference_parameters::theta().head(ka))
                           : detail::uniform_vector(rng, ka, -0.05, 0.05);
    }
    if (config.beta0) {
        d.beta0 = *config.beta0;
    } else {
        d.beta0 = ref_out ? Vector(reference_parameters::theta().tail(ka))
                          : detail::uniform_vector(rng, ka, -0.05, 0.05);
    }
    if (config.gamma0) {
        d.gamma0 = *config.gamma0;
    } else {
        d.gamma0 = ref_int ? reference_parameters::gamma()
                           : detail::uniform_vector(rng, kg, -0.05, 0.05);
    }
    if (d.alpha0.size() != ka || d.beta0.size() != ka || d.gamma0.size() != kg)
        throw ValidationError("truth coefficients must match the quadratic basis widths");

    d.gamma0(0) = calibrate_propensity_intercept(d.x_int, basis, d.gamma0.tail(kg - 1),
                                                 config.target_mean_propensity,
                                                 config.propensity_tolerance);
    d.propensity = propensity_scores(basis.expand_rows(d.x_int), d.gamma0);
    d.mean_propensity = d.propensity.mean();

    const Matrix phi = basis.expand_rows(d.x_out);
    const Vector abar_hat = expected_exposure(d.h, d.propensity);
    d.fa_true = phi * d.beta0;
    // mean outcome is affine in the alpha intercept with unit slope
    const double before = (phi * d.alpha0 + abar_hat.cwiseProduct(d.fa_true)).mean();
    d.alpha0(0) += config.target_mean_outcome - before;
    d.f0_true = phi * d.alpha0;
    d.mean_outcome = (d.f0_true + abar_hat.cwiseProduct(d.fa_true)).mean();

    if (std::abs(d.mean_propensity - config.target_mean_propensity) > config.propensity_tolerance)
        throw NumericalError("mean propensity calibration failed");
    if (std::abs(d.mean_outcome - config.target_mean_outcome) > config.outcome_tolerance)
        throw NumericalError("mean outcome calibration failed");

    d.te_true = d.h.h.transpose() * d.fa_true / static_cast<double>(J);
    return d;
}

struct SimData {
    OutcomeTable out;
    InterventionTable in;
    Vector abar;
    Vector mu;
    double noise_sd = 0.0;
};

/// One replication: A_j ~ Bernoulli(e_j), exposures, and Y = mu + eps with
/// Var(eps) = Var_emp(mu) / snr^2.
inline SimData generate_dgp(const SimDesign& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SimData s;
    const Index n = d.x_out.rows(), J = d.x_int.rows();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s.in.x = d.x_int;
    s.in.a.resize(J);
    for (Index j = 0; j < J; ++j) s.in.a(j) = u(rng) < d.propensity(j) ? 1.0 : 0.0;
    s.abar = exposure_map(d.h, s.in.a);
    s.mu = d.f0_true + s.abar.cwiseProduct(d.fa_true);
    const double var_mu = detail::sample_variance(s.mu);
    if (!(var_mu > 0.0)) throw NumericalError("mean outcome is constant; noise level undefined");
    s.noise_sd = std::sqrt(var_mu) / d.snr;
    std::normal_distribution<double> eps(0.0, s.noise_sd);
    s.out.x = d.x_out;
    s.out.y.resize(n);
    for (Index i = 0; i < n; ++i) s.out.y(i) = s.mu(i) + eps(rng);
    return s;
}

inline SimData generate_dgp(const SimConfig& config, std::uint64_t seed) {
    return generate_dgp(generate_design(config), seed);
}

// ---------------------------------------------------------------------------
// Estimator cells

enum class Estimator { q_learning, a_learning };

struct CellSpec {
    std::string name;
    Estimator estimator = Estimator::q_learning;
    OutcomeModelSpec outcome;
    FeatureMap propensity{BasisKind::quadratic};
    bool true_propensity = false;  // A-learning with e supplied from the truth
    bool baseline_correct = true;
    std::optional<bool> propensity_correct;  // empty for Q-learning
};

/// The six configurations: Q-learning with f0 correct / misspecified, and
/// A-learning over {f0 correct, misspecified} x {e correct, misspecified}.
/// Misspecification fits linear instead of quadratic terms; fA is always
/// correctly specified.
inline std::vector<CellSpec> standard_cells() {
    const FeatureMap quad{BasisKind::quadratic}, lin{BasisKind::linear};
    std::vector<CellSpec> cells;
    cells.push_back({"q_correct", Estimator::q_learning, {quad, quad}, quad, false, true, {}});
    cells.push_back({"q_misspec", Estimator::q_learning, {lin, quad}, quad, false, false, {}});
    cells.push_back({"a_cc", Estimator::a_learning, {quad, quad}, quad, false, true, true});
    cells.push_back({"a_c_misP", Estimator::a_learning, {quad, quad}, lin, false, true, false});
    cells.push_back({"a_misB_c", Estimator::a_learning, {lin, quad}, quad, false, false, true});
    cells.push_back({"a_mis_mis", Estimator::a_learning, {lin, quad}, lin, false, false, false});
    return cells;
}

/// Number of leading coordinates two bases share. Polynomial bases are
/// prefixes of one another; otherwise only (1, x) is shared.
inline Index shared_coordinates(const FeatureMap& a, const FeatureMap& b, Index p) {
    if (a.kind == b.kind) return a.dim(p);
    const bool poly_a = a.kind != BasisKind::trig, poly_b = b.kind != BasisKind::trig;
    if (poly_a && poly_b) return std::min(a.dim(p), b.dim(p));
    return 1 + p;
}

struct CellOutcome {
    bool ok = false;
    std::string error;
    double bias = 0.0;      // ||beta_hat - beta0||_2 on shared coordinates
    double rmse = 0.0;      // RMSE of TE_hat against the true TE over units
    double coverage = 0.0;  // fraction of shared beta coordinates covered by 95% CIs
    Vector beta_hat;
    Vector se_beta;
};

inline CellOutcome run_cell(const SimDesign& d, const SimData& data, const CellSpec& cell,
                            double level = 0.95) {
    CellOutcome o;
    try {
        Matrix cov_beta;
        if (cell.estimator == Estimator::q_learning) {
            const QFit fit = fit_q(data.out, data.abar, cell.outcome);
            o.beta_hat = fit.beta;
            cov_beta = fit.cov_beta();
        } else {
            AFitOptions opt;
            if (cell.true_propensity) opt.known_propensity = d.propensity;
            const AFit fit = fit_a(data.out, data.in, d.h, cell.outcome, cell.propensity, opt);
            o.beta_hat = fit.beta;
            cov_beta = fit.cov_beta();
        }
        o.se_beta = cov_beta.diagonal().cwiseMax(0.0).cwiseSqrt();
        const Index shared =
            shared_coordinates(cell.outcome.fa, SimDesign::truth_basis(), d.x_out.cols());
        const Vector diff = o.beta_hat.head(shared) - d.beta0.head(shared);
        o.bias = diff.norm();

        const Vector te_hat =
            te_weights(d.h, d.x_out, cell.outcome.fa) * o.beta_hat;
        o.rmse = std::sqrt((te_hat - d.te_true).squaredNorm() / static_cast<double>(te_hat.size()));

        const double z = normal_quantile(0.5 + 0.5 * level);
        Index covered = 0;
        for (Index k = 0; k < shared; ++k) {
            // slack absorbs roundoff when an interval degenerates to a point
            const double slack = 1e-12 * (1.0 + std::abs(d.beta0(k)));
            if (std::abs(diff(k)) <= z * o.se_beta(k) + slack) ++covered;
        }
        o.coverage = static_cast<double>(covered) / static_cast<double>(shared);
        o.ok = std::isfinite(o.bias) && std::isfinite(o.rmse);
        if (!o.ok) o.error = "non-finite metrics";
    } catch (const std::exception& e) {
        o.ok = false;
        o.error = e.what();
    }
    return o;
}

struct CellSummary {
    std::string name;
    std::string estimator;  // "Q-Learning" / "A-Learning"
    bool baseline_correct = true;
    std::optional<bool> propensity_correct;
    double bias = 0.0;
    double rmse = 0.0;
    double coverage_pct = 0.0;
    Index successes = 0;
    Index failures = 0;
};

struct RepRecord {
    std::uint64_t seed = 0;
    std::vector<CellOutcome> cells;
};

struct SimReport {
    SimConfig config;
    Vector alpha0, beta0, gamma0;
    bool reference_parameters = false;
    double mean_propensity = 0.0;
    double mean_outcome = 0.0;
    std::vector<CellSummary> cells;
    std::vector<RepRecord> records;  // filled when config.keep_records
};

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("BNIP_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs reps in parallel; rep r uses derive_seed(master_seed, r) and results
/// are reduced in rep order, so the report does not depend on thread count.
inline SimReport run_monte_carlo(const SimConfig& config,
                                 const std::vector<CellSpec>& cells = standard_cells()) {
    const SimDesign design = generate_design(config);
    const Index reps = config.reps;
    std::vector<RepRecord> records(static_cast<std::size_t>(reps));

    auto run_rep = [&](Index r) {
        RepRecord& rec = records[static_cast<std::size_t>(r)];
        rec.seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(r));
        try {
            const SimData data = generate_dgp(design, rec.seed);
            for (const auto& c : cells) rec.cells.push_back(run_cell(design, data, c));
        } catch (const std::exception& e) {
            rec.cells.assign(cells.size(), CellOutcome{});
            for (auto& c : rec.cells) c.error = e.what();
        }
    };

    const unsigned threads =
        std::min<unsigned>(resolve_threads(config.threads), static_cast<unsigned>(reps));
    if (threads <= 1) {
        for (Index r = 0; r < reps; ++r) run_rep(r);
    } else {
        std::atomic<Index> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (Index r = next++; r < reps; r = next++) run_rep(r);
            });
        }
        for (auto& th : pool) th.join();
    }

    SimReport report;
    report.config = config;
    report.alpha0 = design.alpha0;
    report.beta0 = design.beta0;
    report.gamma0 = design.gamma0;
    report.reference_parameters = design.reference_parameters;
    report.mean_propensity = design.mean_propensity;
    report.mean_outcome = design.mean_outcome;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        CellSummary s;
        s.name = cells[c].name;
        s.estimator = cells[c].estimator == Estimator::q_learning ? "Q-Learning" : "A-Learning";
        s.baseline_correct = cells[c].baseline_correct;
        s.propensity_correct = cells[c].propensity_correct;
        double bias = 0.0, rmse = 0.0, cov = 0.0;
        for (const auto& rec : records) {
            const CellOutcome& o = rec.cells[c];
            if (!o.ok) {
                ++s.failures;
                continue;
            }
            ++s.successes;
            bias += o.bias;
            rmse += o.rmse;
            cov += o.coverage;
        }
        if (s.successes > 0) {
            const double m = static_cast<double>(s.successes);
            s.bias = bias / m;
            s.rmse = rmse / m;
            s.coverage_pct = 100.0 * cov / m;
        }
        report.cells.push_back(s);
    }
    if (config.keep_records) report.records = std::move(records);
    return report;
}

inline const CellSummary& find_cell(const SimReport& r, const std::string& name) {
    for (const auto& c : r.cells)
        if (c.name == name) return c;
    throw ValidationError("no simulation cell named " + name);
}

}  // namespace bnip
