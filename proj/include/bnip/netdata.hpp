#pragma once

// Core data model: interference map, outcome/intervention tables, basis
// expansions and covariate standardization.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnip/error.hpp"

namespace bnip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense n x J transport weights: rows are outcome units, columns intervention units.
struct InterferenceMap {
    Matrix h;

    Index n() const { return h.rows(); }
    Index units() const { return h.cols(); }
};

struct OutcomeTable {
    Matrix x;                             // n x p covariates
    Vector y;                             // observed outcomes
    std::optional<Vector> person_years;   // strictly positive when present

    Index n() const { return y.size(); }
};

struct InterventionTable {
    Matrix x;                    // J x q covariates
    Vector a;                    // treatments, exactly 0 or 1
    std::optional<Vector> cost;  // nonnegative, known costs

    Index units() const { return a.size(); }
};

enum class BasisKind { linear, quadratic, cubic, trig };

inline std::string_view to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::linear: return "linear";
        case BasisKind::quadratic: return "quadratic";
        case BasisKind::cubic: return "cubic";
        case BasisKind::trig: return "trig";
    }
    return "unknown";
}

inline BasisKind parse_basis_kind(std::string_view name) {
    if (name == "linear") return BasisKind::linear;
    if (name == "quadratic") return BasisKind::quadratic;
    if (name == "cubic") return BasisKind::cubic;
    if (name == "trig") return BasisKind::trig;
    throw ValidationError("unknown basis kind '" + std::string(name) +
                          "' (expected linear, quadratic, cubic or trig)");
}

/// Deterministic per-coordinate basis expansion with a leading intercept.
///
/// Layout is blockwise so lower-order polynomial bases are prefixes of the
/// higher-order ones:
///   linear    (1, x)
///   quadratic (1, x, x^2)
///   cubic     (1, x, x^2, x^3)
///   trig      (1, x, sin x, cos x)
/// No cross terms are generated.
struct FeatureMap {
    BasisKind kind = BasisKind::linear;
    bool include_intercept = true;

    static int blocks(BasisKind kind) {
        switch (kind) {
            case BasisKind::linear: return 1;
            case BasisKind::quadratic: return 2;
            case BasisKind::cubic: return 3;
            case BasisKind::trig: return 3;
        }
        return 1;
    }

    Index dim(Index p) const { return (include_intercept ? 1 : 0) + blocks(kind) * p; }

    template <typename Row>
    Vector expand(const Eigen::MatrixBase<Row>& x) const {
        const Index p = x.size();
        Vector out(dim(p));
        Index k = 0;
        if (include_intercept) out(k++) = 1.0;
        for (int b = 0; b < blocks(kind); ++b) {
            for (Index c = 0; c < p; ++c) out(k++) = term(x(c), b);
        }
        return out;
    }

    Matrix expand_rows(const Matrix& x) const {
        const Index p = x.cols();
        Matrix out(x.rows(), dim(p));
        Index k = 0;
        if (include_intercept) out.col(k++).setOnes();
        for (int b = 0; b < blocks(kind); ++b) {
            for (Index c = 0; c < p; ++c, ++k) {
                out.col(k) = x.col(c).unaryExpr([this, b](double v) { return term(v, b); });
            }
        }
        return out;
    }

    /// Human-readable names matching expand()'s layout.
    std::vector<std::string> names(const std::vector<std::string>& covariates) const {
        std::vector<std::string> out;
        if (include_intercept) out.emplace_back("(intercept)");
        for (int b = 0; b < blocks(kind); ++b) {
            for (const auto& c : covariates) out.push_back(decorate(c, b));
        }
        return out;
    }

private:
    double term(double v, int block) const {
        if (kind == BasisKind::trig) {
            if (block == 0) return v;
            return block == 1 ? std::sin(v) : std::cos(v);
        }
        switch (block) {
            case 0: return v;
            case 1: return v * v;
            default: return v * v * v;
        }
    }

    std::string decorate(const std::string& c, int block) const {
        if (block == 0) return c;
        if (kind == BasisKind::trig) return (block == 1 ? "sin(" : "cos(") + c + ")";
        return c + "^" + std::to_string(block + 1);
    }
};

/// Column centering and scaling with the n-1 divisor.
struct Standardizer {
    Vector means;
    Vector sds;
    std::vector<Index> constant_columns;  // assigned sd = 1

    bool has_constant_columns() const { return !constant_columns.empty(); }

    Matrix apply(const Matrix& x) const {
        if (x.cols() != means.size()) {
            throw ValidationError("standardizer width " + std::to_string(means.size()) +
                                  " does not match input width " + std::to_string(x.cols()));
        }
        return (x.rowwise() - means.transpose()).array().rowwise() / sds.transpose().array();
    }

    Matrix invert(const Matrix& z) const {
        if (z.cols() != means.size()) {
            throw ValidationError("standardizer width mismatch on inverse transform");
        }
        return (z.array().rowwise() * sds.transpose().array()).matrix().rowwise() +
               means.transpose();
    }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Standardizer fit_standardizer(const Matrix& x) {
    if (!x.allFinite()) throw ValidationError("standardizer input contains non-finite entries");
    const Index n = x.rows();
    Standardizer s;
    s.means = n > 0 ? Vector(x.colwise().mean().transpose()) : Vector::Zero(x.cols());
    s.sds = Vector::Ones(x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
        double sd = 0.0;
        if (n > 1) {
            const double ss = (x.col(c).array() - s.means(c)).square().sum();
            sd = std::sqrt(ss / static_cast<double>(n - 1));
        }
        if (!(sd > 1e-12 * std::max(1.0, std::abs(s.means(c))))) {
            s.constant_columns.push_back(c);
            sd = 1.0;
        }
        s.sds(c) = sd;
    }
    return s;
}

inline Matrix apply_standardizer(const Standardizer& s, const Matrix& x) {
    if (!x.allFinite()) throw ValidationError("standardizer input contains non-finite entries");
    return s.apply(x);
}

// ---------------------------------------------------------------------------
// Bundle validation

enum class Severity { warning, error };

struct ValidationIssue {
    Severity severity;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool empty() const { return issues.empty(); }
    /// No blocking errors; warnings (zero columns of H) may remain.
    bool usable() const {
        for (const auto& i : issues)
            if (i.severity == Severity::error) return false;
        return true;
    }
    std::string summary() const {
        std::string out;
        for (const auto& i : issues) {
            out += (i.severity == Severity::error ? "error: " : "warning: ") + i.message + "\n";
        }
        return out;
    }
    bool operator==(const ValidationReport& o) const {
        if (issues.size() != o.issues.size()) return false;
        for (std::size_t k = 0; k < issues.size(); ++k) {
            if (issues[k].severity != o.issues[k].severity ||
                issues[k].message != o.issues[k].message)
                return false;
        }
        return true;
    }
};

inline std::vector<Index> zero_columns(const InterferenceMap& h) {
    std::vector<Index> out;
    for (Index j = 0; j < h.h.cols(); ++j) {
        if ((h.h.col(j).array() == 0.0).all()) out.push_back(j);
    }
    return out;
}

inline ValidationReport validate_bundle(const InterferenceMap& h, const OutcomeTable& out,
                                        const InterventionTable& in) {
    ValidationReport r;
    auto err = [&](std::string m) { r.issues.push_back({Severity::error, std::move(m)}); };
    auto warn = [&](std::string m) { r.issues.push_back({Severity::warning, std::move(m)}); };

    if (h.h.rows() < 1 || h.h.cols() < 1) err("interference map is empty");
    if (!h.h.allFinite()) err("interference map has non-finite entries");
    if ((h.h.array() < 0.0).any()) err("interference map has negative entries");
    for (Index j : zero_columns(h)) warn("column " + std::to_string(j) + " has no transport");

    if (out.y.size() != out.x.rows())
        err("outcome table has " + std::to_string(out.y.size()) + " outcomes but " +
            std::to_string(out.x.rows()) + " covariate rows");
    if (h.h.rows() != out.y.size())
        err("interference map has " + std::to_string(h.h.rows()) + " rows but there are " +
            std::to_string(out.y.size()) + " outcome units");
    if (!out.x.allFinite()) err("outcome covariates have non-finite entries");
    if (!out.y.allFinite()) err("outcomes have non-finite entries");
    if (out.person_years) {
        if (out.person_years->size() != out.y.size())
            err("person_years length does not match outcome count");
        for (Index i = 0; i < out.person_years->size(); ++i) {
            const double v = (*out.person_years)(i);
            if (!std::isfinite(v) || v <= 0.0)
                err("person_years at index " + std::to_string(i) + " is not strictly positive");
        }
    }

    if (in.a.size() != in.x.rows())
        err("intervention table has " + std::to_string(in.a.size()) + " treatments but " +
            std::to_string(in.x.rows()) + " covariate rows");
    if (h.h.cols() != in.a.size())
        err("interference map has " + std::to_string(h.h.cols()) + " columns but there are " +
            std::to_string(in.a.size()) + " intervention units");
    if (!in.x.allFinite()) err("intervention covariates have non-finite entries");
    for (Index j = 0; j < in.a.size(); ++j) {
        const double v = in.a(j);
        if (v != 0.0 && v != 1.0) err("non-binary treatment at index " + std::to_string(j));
    }
    if (in.cost) {
        if (in.cost->size() != in.a.size()) err("cost length does not match intervention count");
        for (Index j = 0; j < in.cost->size(); ++j) {
            const double v = (*in.cost)(j);
            if (!std::isfinite(v) || v < 0.0)
                err("cost at index " + std::to_string(j) + " is not a finite nonnegative value");
        }
    }
    return r;
}

inline void require_usable(const InterferenceMap& h, const OutcomeTable& out,
                           const InterventionTable& in) {
    const auto r = validate_bundle(h, out, in);
    if (!r.usable()) throw ValidationError("invalid bundle:\n" + r.summary());
}

}  // namespace bnip
