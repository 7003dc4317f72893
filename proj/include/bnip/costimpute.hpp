#pragma once

// Cost imputation for intervention units: seeded train/validation split,
// linear least squares and a regression forest, NMAE-based selection and
// node-purity importance.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bnip/netdata.hpp"
#include "bnip/stats.hpp"

namespace bnip {

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 20240917;
};

struct Split {
    std::vector<Index> train;
    std::vector<Index> validation;
};

/// Shuffles 0..m-1 with the split seed; the first ceil(fraction * m) go to
/// training. The 1e-9 guard keeps 0.8 * 135 at 108 despite roundoff.
inline Split split_train_val(Index m, const SplitSpec& spec) {
    if (m < 5) throw ValidationError("cost imputation needs at least 5 labeled rows, got " +
                                     std::to_string(m));
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ValidationError("train_fraction must lie in (0,1)");
    std::vector<Index> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(spec.seed);
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle
    for (std::size_t k = idx.size() - 1; k > 0; --k) {
        const std::size_t pick = static_cast<std::size_t>(rng() % (k + 1));
        std::swap(idx[k], idx[pick]);
    }
    const auto ntrain = static_cast<std::size_t>(
        std::ceil(spec.train_fraction * static_cast<double>(m) - 1e-9));
    if (ntrain == 0 || ntrain >= idx.size())
        throw ValidationError("split leaves an empty training or validation set");
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ntrain));
    s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(ntrain), idx.end());
    return s;
}

/// mean_j |C_j - Chat_j| / |Chat_j|; the prediction is the denominator.
inline double nmae(const Vector& actual, const Vector& predicted) {
    if (actual.size() != predicted.size()) throw ValidationError("nmae inputs differ in length");
    if (actual.size() == 0) throw ValidationError("nmae of an empty sample");
    double total = 0.0;
    for (Index j = 0; j < actual.size(); ++j) {
        if (std::abs(predicted(j)) < 1e-12)
            throw NumericalError("zero prediction at row " + std::to_string(j) +
                                 " makes NMAE undefined");
        total += std::abs(actual(j) - predicted(j)) / std::abs(predicted(j));
    }
    return total / static_cast<double>(actual.size());
}

// ---------------------------------------------------------------------------
// Linear model

struct LinearCostModel {
    Vector coefficients;  // intercept first

    Vector predict(const Matrix& x) const {
        if (x.cols() + 1 != coefficients.size())
            throw ValidationError("feature width " + std::to_string(x.cols()) +
                                  " does not match the linear cost model");
        return (x * coefficients.tail(x.cols())).array() + coefficients(0);
    }
};

inline LinearCostModel fit_linear_cost(const Matrix& x, const Vector& c) {
    const Index k = x.cols() + 1;
    if (x.rows() < k)
        throw ValidationError("linear cost model needs at least " + std::to_string(k) +
                              " rows, got " + std::to_string(x.rows()));
    Matrix d(x.rows(), k);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    Eigen::ColPivHouseholderQR<Matrix> qr(d);
    qr.setThreshold(1e-12);
    if (qr.rank() < k)
        throw NumericalError("linear cost design is rank deficient (rank " +
                             std::to_string(qr.rank()) + " of " + std::to_string(k) + ")");
    return LinearCostModel{qr.solve(c)};
}

// ---------------------------------------------------------------------------
// Regression forest

struct TreeNode {
    Index feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // go left when x <= threshold
    Index left = -1;
    Index right = -1;
    double value = 0.0;  // mean target of the node's samples
    Index samples = 0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(const Eigen::Ref<const Vector>& row) const {
        Index k = 0;
        while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
            const TreeNode& n = nodes[static_cast<std::size_t>(k)];
            k = row(n.feature) <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(k)].value;
    }
};

struct ForestOptions {
    Index trees = 500;
    Index mtry = 0;  // 0: ceil(q/3)
    Index min_leaf = 5;
    bool bootstrap = true;
    std::uint64_t seed = 20240917;
    unsigned threads = 1;
};

struct RegressionForest {
    std::vector<RegressionTree> trees;
    Index features = 0;
    Vector importance;  // summed RSS decrease per feature

    Vector predict(const Matrix& x) const {
        if (x.cols() != features)
            throw ValidationError("feature width " + std::to_string(x.cols()) +
                                  " does not match the forest (" + std::to_string(features) + ")");
        if (trees.empty()) throw ValidationError("forest has no trees");
        Vector out = Vector::Zero(x.rows());
        for (Index i = 0; i < x.rows(); ++i) {
            const Vector row = x.row(i).transpose();
            double s = 0.0;
            for (const auto& t : trees) s += t.predict(row);
            out(i) = s / static_cast<double>(trees.size());
        }
        return out;
    }
};

namespace detail {

struct BestSplit {
    Index feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    std::size_t left_count = 0;
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, const Vector& y, const ForestOptions& opt, Index mtry,
                std::uint64_t seed)
        : x_(x), y_(y), opt_(opt), mtry_(mtry), rng_(seed), importance_(Vector::Zero(x.cols())) {}

    RegressionTree build(std::vector<Index> rows) {
        tree_.nodes.clear();
        grow(rows);
        return std::move(tree_);
    }

    const Vector& importance() const { return importance_; }

private:
    static double sse(const std::vector<double>& v) {
        double m = 0.0;
        for (double t : v) m += t;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double t : v) s += (t - m) * (t - m);
        return s;
    }

    BestSplit best_on_feature(const std::vector<Index>& rows, Index f) const {
        std::vector<std::pair<double, double>> xs;
        xs.reserve(rows.size());
        for (Index r : rows) xs.emplace_back(x_(r, f), y_(r));
        std::sort(xs.begin(), xs.end());
        double total = 0.0, total_sq = 0.0;
        for (const auto& [xv, yv] : xs) total += yv, total_sq += yv * yv;
        const double m = static_cast<double>(xs.size());
        const double parent = total_sq - total * total / m;

        BestSplit best;
        double left = 0.0, left_sq = 0.0;
        const auto min_leaf = static_cast<std::size_t>(opt_.min_leaf);
        for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
            left += xs[k].second;
            left_sq += xs[k].second * xs[k].second;
            const std::size_t nl = k + 1, nr = xs.size() - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            if (!(xs[k].first < xs[k + 1].first)) continue;
            const double right = total - left, right_sq = total_sq - left_sq;
            const double child = (left_sq - left * left / static_cast<double>(nl)) +
                                 (right_sq - right * right / static_cast<double>(nr));
            const double gain = parent - child;
            if (gain > best.gain) {
                best.gain = gain;
                best.feature = f;
                double mid = 0.5 * (xs[k].first + xs[k + 1].first);
                if (!(mid < xs[k + 1].first)) mid = xs[k].first;
                best.threshold = mid;
                best.left_count = nl;
            }
        }
        return best;
    }

    Index grow(std::vector<Index>& rows) {
        const Index id = static_cast<Index>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::vector<double> ys;
        ys.reserve(rows.size());
        for (Index r : rows) ys.push_back(y_(r));
        double mean = 0.0;
        for (double v : ys) mean += v;
        mean /= static_cast<double>(ys.size());
        tree_.nodes[static_cast<std::size_t>(id)].value = mean;
        tree_.nodes[static_cast<std::size_t>(id)].samples = static_cast<Index>(rows.size());
        if (rows.size() < 2 * static_cast<std::size_t>(opt_.min_leaf) || sse(ys) <= 0.0)
            return id;

        // candidate features in random order; the first mtry are the draw,
        // the rest are only visited when none of the draw admits a split
        std::vector<Index> feats(static_cast<std::size_t>(x_.cols()));
        std::iota(feats.begin(), feats.end(), Index{0});
        for (std::size_t k = feats.size() - 1; k > 0; --k)
            std::swap(feats[k], feats[static_cast<std::size_t>(rng_() % (k + 1))]);
        BestSplit best;
        for (std::size_t k = 0; k < feats.size(); ++k) {
            if (static_cast<Index>(k) >= mtry_ && best.feature >= 0) break;
            const BestSplit s = best_on_feature(rows, feats[k]);
            if (s.feature >= 0 && (best.feature < 0 || s.gain > best.gain)) best = s;
        }
        if (best.feature < 0) return id;

        std::vector<Index> left, right;
        for (Index r : rows) (x_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        importance_(best.feature) += best.gain;
        rows.clear();
        rows.shrink_to_fit();
        const Index l = grow(left);
        const Index r = grow(right);
        TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    const Matrix& x_;
    const Vector& y_;
    const ForestOptions& opt_;
    Index mtry_;
    std::mt19937_64 rng_;
    Vector importance_;
    RegressionTree tree_;
};

}  // namespace detail

inline Index resolved_mtry(const ForestOptions& opt, Index q) {
    if (opt.mtry > 0) return std::min(opt.mtry, q);
    return std::max<Index>(1, (q + 2) / 3);
}

/// Each tree t draws its bootstrap and feature subsets from
/// derive_seed(opt.seed, t), so the fit does not depend on thread count.
inline RegressionForest fit_forest(const Matrix& x, const Vector& y, const ForestOptions& opt = {}) {
    if (x.rows() != y.size()) throw ValidationError("forest features and targets differ in rows");
    if (x.rows() < 1 || x.cols() < 1) throw ValidationError("forest needs data");
    if (opt.trees < 1) throw ValidationError("forest needs at least one tree");
    if (opt.min_leaf < 1) throw ValidationError("min_leaf must be at least 1");
    const Index m = x.rows();
    const Index mtry = resolved_mtry(opt, x.cols());

    RegressionForest forest;
    forest.features = x.cols();
    forest.trees.resize(static_cast<std::size_t>(opt.trees));
    std::vector<Vector> imp(static_cast<std::size_t>(opt.trees));

    auto build = [&](Index t) {
        const std::uint64_t seed = derive_seed(opt.seed, static_cast<std::uint64_t>(t));
        std::mt19937_64 boot(seed);
        std::vector<Index> rows(static_cast<std::size_t>(m));
        if (opt.bootstrap) {
            for (auto& r : rows) r = static_cast<Index>(boot() % static_cast<std::uint64_t>(m));
            std::sort(rows.begin(), rows.end());
        } else {
            std::iota(rows.begin(), rows.end(), Index{0});
        }
        detail::TreeBuilder b(x, y, opt, mtry, splitmix64(seed));
        forest.trees[static_cast<std::size_t>(t)] = b.build(std::move(rows));
        imp[static_cast<std::size_t>(t)] = b.importance();
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads,
                                                             static_cast<unsigned>(opt.trees)));
    if (threads == 1) {
        for (Index t = 0; t < opt.trees; ++t) build(t);
    } else {
        std::atomic<Index> next{0};
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k)
            pool.emplace_back([&] {
                for (Index t = next++; t < opt.trees; t = next++) build(t);
            });
        for (auto& th : pool) th.join();
    }
    forest.importance = Vector::Zero(x.cols());
    for (const auto& v : imp) forest.importance += v;  // fixed order
    return forest;
}

// ---------------------------------------------------------------------------
// Selection

enum class CostModelKind { forest, linear };

inline std::string_view to_string(CostModelKind k) {
    return k == CostModelKind::forest ? "forest" : "linear";
}

struct LeaderboardEntry {
    CostModelKind kind = CostModelKind::linear;
    double nmae = 0.0;  // +inf when the validation NMAE is undefined
    std::string note;
};

struct CostModelFit {
    CostModelKind kind = CostModelKind::linear;
    LinearCostModel linear;
    RegressionForest forest;
    double nmae_validation = 0.0;
    Vector importance;  // forest only; empty for linear
    std::vector<LeaderboardEntry> leaderboard;
    Split split;

    Vector predict_raw(const Matrix& x) const {
        return kind == CostModelKind::linear ? linear.predict(x) : forest.predict(x);
    }
};

namespace detail {

inline Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
    return out;
}

inline Vector take(const Vector& v, const std::vector<Index>& rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
    return out;
}

inline LeaderboardEntry score(CostModelKind kind, const Vector& actual, const Vector& predicted) {
    LeaderboardEntry e;
    e.kind = kind;
    try {
        e.nmae = nmae(actual, predicted);
    } catch (const NumericalError& err) {
        e.nmae = std::numeric_limits<double>::infinity();
        e.note = err.what();
    }
    return e;
}

}  // namespace detail

/// Fits both models on the training rows, ranks them by validation NMAE
/// (ties broken by model name) and refits the winner on every labeled row.
inline CostModelFit fit_cost_models(const Matrix& x, const Vector& c, const SplitSpec& split = {},
                                    const ForestOptions& forest_opt = {}) {
    if (x.rows() != c.size()) throw ValidationError("cost features and targets differ in rows");
    if (!x.allFinite() || !c.allFinite()) throw ValidationError("cost data contain non-finite values");
    if (c.size() > 0 && (c.array() == c(0)).all())
        throw ValidationError("cost target is constant; nothing to model");
    if (x.rows() < x.cols() + 1)
        throw ValidationError("fewer labeled rows than linear cost parameters");

    CostModelFit fit;
    fit.split = split_train_val(x.rows(), split);
    const Matrix xt = detail::take_rows(x, fit.split.train);
    const Vector ct = detail::take(c, fit.split.train);
    const Matrix xv = detail::take_rows(x, fit.split.validation);
    const Vector cv = detail::take(c, fit.split.validation);

    const LinearCostModel lin = fit_linear_cost(xt, ct);
    const RegressionForest rf = fit_forest(xt, ct, forest_opt);
    fit.leaderboard.push_back(detail::score(CostModelKind::linear, cv, lin.predict(xv)));
    fit.leaderboard.push_back(detail::score(CostModelKind::forest, cv, rf.predict(xv)));
    std::sort(fit.leaderboard.begin(), fit.leaderboard.end(),
              [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                  if (a.nmae != b.nmae) return a.nmae < b.nmae;
                  return to_string(a.kind) < to_string(b.kind);
              });
    const LeaderboardEntry& win = fit.leaderboard.front();
    if (!std::isfinite(win.nmae))
        throw NumericalError("no cost model has a defined validation NMAE: " + win.note);

    fit.kind = win.kind;
    fit.nmae_validation = win.nmae;
    if (fit.kind == CostModelKind::linear) {
        fit.linear = fit_linear_cost(x, c);
    } else {
        fit.forest = fit_forest(x, c, forest_opt);
        fit.importance = fit.forest.importance;
    }
    return fit;
}

struct CostPrediction {
    Vector cost;
    std::vector<Index> clipped;  // rows whose raw prediction was negative
    double total = 0.0;
};

inline CostPrediction predict_costs(const CostModelFit& fit, const Matrix& x) {
    CostPrediction p;
    p.cost = fit.predict_raw(x);
    for (Index j = 0; j < p.cost.size(); ++j) {
        if (p.cost(j) < 0.0) {
            p.cost(j) = 0.0;
            p.clipped.push_back(j);
        }
    }
    p.total = p.cost.sum();
    return p;
}

}  // namespace bnip
