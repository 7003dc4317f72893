#pragma once

// Shared fixtures and independent oracles for the test suites. Everything
// here is written as plain loops so it does not share code paths with the
// library under test.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bnip/netdata.hpp"

namespace bnip::testing {

inline Matrix random_normal(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = z(rng);
    return m;
}

inline Matrix random_uniform(std::mt19937_64& rng, Index rows, Index cols, double lo = 0.0,
                             double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
}

inline Vector random_binary(std::mt19937_64& rng, Index size, double p = 0.5) {
    std::bernoulli_distribution b(p);
    Vector v(size);
    for (Index k = 0; k < size; ++k) v(k) = b(rng) ? 1.0 : 0.0;
    return v;
}

/// Binary vector guaranteed to contain both classes.
inline Vector random_binary_mixed(std::mt19937_64& rng, Index size, double p = 0.5) {
    Vector v = random_binary(rng, size, p);
    v(0) = 1.0;
    v(size - 1) = 0.0;
    return v;
}

inline Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
    Index r = 0;
    for (const auto& row : rows) {
        Index c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

inline Vector make_vector(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

// ---------------------------------------------------------------------------
// Oracles

/// abar_i = (1/J) sum_j H_ij a_j by explicit loops.
inline Vector naive_exposure(const Matrix& h, const Vector& a) {
    Vector out(h.rows());
    for (Index i = 0; i < h.rows(); ++i) {
        double s = 0.0;
        for (Index j = 0; j < h.cols(); ++j) s += h(i, j) * a(j);
        out(i) = s / static_cast<double>(h.cols());
    }
    return out;
}

/// TE_j = (1/J) sum_i H_ij v_i by explicit loops.
inline Vector naive_total_effect(const Matrix& h, const Vector& v) {
    Vector out(h.cols());
    for (Index j = 0; j < h.cols(); ++j) {
        double s = 0.0;
        for (Index i = 0; i < h.rows(); ++i) s += h(i, j) * v(i);
        out(j) = s / static_cast<double>(h.cols());
    }
    return out;
}

/// Central finite-difference Jacobian of f at x with per-coordinate step
/// rel * max(1, |x_k|).
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double rel = 1e-5) {
    const Vector f0 = f(x);
    Matrix jac(f0.size(), x.size());
    for (Index k = 0; k < x.size(); ++k) {
        const double h = rel * std::max(1.0, std::abs(x(k)));
        Vector xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        jac.col(k) = (f(xp) - f(xm)) / (xp(k) - xm(k));
    }
    return jac;
}

/// max |A - B| / max(max |A|, tiny).
inline double relative_gap(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Optimum of max sum_j -te_j pi_j subject to sum_j c_j pi_j <= budget over
/// pi in [0,1]^J, by enumerating every binary set that fits and completing it
/// with the best single fractional unit. Returns the minimal (1/n) pi.te.
inline double enumeration_lp_value(const Vector& te, const Vector& cost, double budget, Index n) {
    const Index J = te.size();
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << J); ++mask) {
        double spent = 0.0, value = 0.0;
        for (Index j = 0; j < J; ++j)
            if (mask >> j & 1) spent += cost(j), value += te(j);
        if (spent > budget) continue;
        double completed = value;
        for (Index j = 0; j < J; ++j) {
            if (mask >> j & 1) continue;
            const double frac = std::min(1.0, (budget - spent) / cost(j));
            completed = std::min(completed, value + frac * te(j));
        }
        best = std::min(best, completed);
    }
    return best / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Files

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("bnip_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

}  // namespace bnip::testing
