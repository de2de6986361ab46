#pragma once
// Per-item factors from a finished simulation and DirectLiNGAM causal
// ordering with least-squares edge weights.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "agentrec/dataset.hpp"
#include "agentrec/record.hpp"

namespace agentrec {

struct FactorMatrix {
    std::vector<std::string> items;
    std::vector<std::string> columns;
    Eigen::MatrixXd raw;  // items x columns
    Eigen::MatrixXd z;    // column-wise z-scores (population deviation)
};

inline Eigen::MatrixXd zscore(const Eigen::MatrixXd& x, const std::vector<std::string>& names = {}) {
    Eigen::MatrixXd z = x;
    const double n = static_cast<double>(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        const double sd = std::sqrt((x.col(c).array() - mean).square().sum() / n);
        if (!(sd > 0.0))
            throw UndefinedResultError("column " +
                                       (c < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(c)]
                                                                                    : std::to_string(c)) +
                                       " has zero variance");
        z.col(c) = (x.col(c).array() - mean) / sd;
    }
    return z;
}

// Columns: quality, popularity, exposure rate, view count, simulated rating.
inline FactorMatrix collect_factors(const std::vector<SimRecord>& records, const ItemStatsMap& stats,
                                    int min_exposures = 5, std::size_t min_items = 10) {
    std::map<std::string, int> exposed, views;
    std::map<std::string, double> rating_sum;
    std::size_t agents = 0;
    for (const auto& r : records) {
        if (!r.valid) continue;
        ++agents;
        for (const auto& i : r.exposed_items()) ++exposed[i];
        for (const auto& [i, rating] : r.viewed()) {
            ++views[i];
            rating_sum[i] += rating;
        }
    }
    FactorMatrix f;
    f.columns = {"quality", "popularity", "exposure", "views", "rating"};
    std::vector<std::array<double, 5>> rows;
    for (const auto& [item, n] : exposed) {
        if (n < min_exposures) continue;
        const int v = views.count(item) ? views.at(item) : 0;
        if (v == 0) continue;
        auto s = stats.find(item);
        if (s == stats.end()) throw ArgumentError("no statistics for exposed item " + item);
        f.items.push_back(item);
        rows.push_back({s->second.quality, static_cast<double>(s->second.popularity),
                        static_cast<double>(n) / static_cast<double>(agents), static_cast<double>(v),
                        rating_sum.at(item) / v});
    }
    if (rows.size() < min_items)
        throw UndefinedResultError("only " + std::to_string(rows.size()) + " items survive the exposure filter (need " +
                                   std::to_string(min_items) + ")");
    f.raw.resize(static_cast<Eigen::Index>(rows.size()), 5);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < 5; ++c) f.raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    f.z = zscore(f.raw, f.columns);
    return f;
}

struct CausalGraph {
    std::vector<std::size_t> order;  // causal order, exogenous first
    Eigen::MatrixXd b;               // b(i, j): weight of j -> i
    std::vector<std::string> names;
};

namespace lingam {

inline double mean(const Eigen::VectorXd& v) { return v.mean(); }

inline double pstd(const Eigen::VectorXd& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size()));
}

inline Eigen::VectorXd standardize(const Eigen::VectorXd& v) {
    const double sd = pstd(v);
    if (!(sd > 0.0)) throw UndefinedResultError("zero-variance variable");
    return (v.array() - v.mean()) / sd;
}

// xi minus its least-squares projection on xj.
inline Eigen::VectorXd residual(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj) {
    const Eigen::VectorXd ci = xi.array() - xi.mean();
    const Eigen::VectorXd cj = xj.array() - xj.mean();
    const double var = cj.squaredNorm();
    if (!(var > 0.0)) throw UndefinedResultError("zero-variance regressor");
    return xi - (ci.dot(cj) / var) * xj;
}

// Maximum-entropy approximation of differential entropy for a unit-variance sample.
inline double entropy(const Eigen::VectorXd& u) {
    constexpr double k1 = 79.047, k2 = 7.4129, gamma = 0.37457;
    const double n = static_cast<double>(u.size());
    double logcosh = 0.0, gauss = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double x = u[i];
        const double ax = std::abs(x);
        logcosh += ax + std::log1p(std::exp(-2.0 * ax)) - std::numbers::ln2;
        gauss += x * std::exp(-x * x / 2.0);
    }
    logcosh /= n;
    gauss /= n;
    return (1.0 + std::log(2.0 * std::numbers::pi)) / 2.0 - k1 * (logcosh - gamma) * (logcosh - gamma) -
           k2 * gauss * gauss;
}

// Positive when xi -> xj is the likelier direction.
inline double diff_mutual_info(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj, const Eigen::VectorXd& ri_j,
                               const Eigen::VectorXd& rj_i) {
    return (entropy(xj) + entropy(ri_j / pstd(ri_j))) - (entropy(xi) + entropy(rj_i / pstd(rj_i)));
}

}  // namespace lingam

inline CausalGraph direct_lingam(const Eigen::MatrixXd& x, std::vector<std::string> names = {}) {
    const auto p = static_cast<std::size_t>(x.cols());
    const auto n = static_cast<std::size_t>(x.rows());
    if (p < 2) throw ArgumentError("causal discovery needs at least two variables");
    if (n < 10 * p) throw ArgumentError("causal discovery needs at least 10 rows per variable");
    if (names.empty())
        for (std::size_t i = 0; i < p; ++i) names.push_back("x" + std::to_string(i));
    auto label = [&](std::size_t i) { return names[i]; };

    Eigen::MatrixXd work = x;
    std::vector<std::size_t> remaining(p);
    for (std::size_t i = 0; i < p; ++i) remaining[i] = i;
    CausalGraph g;
    g.names = names;

    while (!remaining.empty()) {
        std::size_t chosen = remaining.front();
        if (remaining.size() > 1) {
            std::vector<Eigen::VectorXd> std_cols(p);
            for (auto i : remaining) {
                try {
                    std_cols[i] = lingam::standardize(work.col(static_cast<Eigen::Index>(i)));
                } catch (const UndefinedResultError&) {
                    throw UndefinedResultError("variable " + label(i) + " has zero residual variance");
                }
            }
            double best = -std::numeric_limits<double>::infinity();
            for (auto i : remaining) {
                double m = 0.0;
                for (auto j : remaining) {
                    if (i == j) continue;
                    const auto& xi = std_cols[i];
                    const auto& xj = std_cols[j];
                    Eigen::VectorXd ri_j, rj_i;
                    try {
                        ri_j = lingam::residual(xi, xj);
                        rj_i = lingam::residual(xj, xi);
                        if (!(lingam::pstd(ri_j) > 1e-12) || !(lingam::pstd(rj_i) > 1e-12))
                            throw UndefinedResultError("singular");
                    } catch (const UndefinedResultError&) {
                        throw UndefinedResultError("singular regression between " + label(i) + " and " + label(j));
                    }
                    const double d = std::min(0.0, lingam::diff_mutual_info(xi, xj, ri_j, rj_i));
                    m += d * d;
                }
                if (-m > best) {
                    best = -m;
                    chosen = i;
                }
            }
            for (auto i : remaining)
                if (i != chosen)
                    work.col(static_cast<Eigen::Index>(i)) =
                        lingam::residual(work.col(static_cast<Eigen::Index>(i)), work.col(static_cast<Eigen::Index>(chosen)));
        }
        g.order.push_back(chosen);
        remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
    }

    // Least squares of each variable on its predecessors (centred data).
    Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    g.b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t k = 1; k < p; ++k) {
        const auto target = g.order[k];
        Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < k; ++j) a.col(static_cast<Eigen::Index>(j)) = c.col(static_cast<Eigen::Index>(g.order[j]));
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        if (qr.rank() < static_cast<Eigen::Index>(k))
            throw UndefinedResultError("singular regression of " + label(target) + " on its predecessors");
        const Eigen::VectorXd coef = qr.solve(Eigen::VectorXd(c.col(static_cast<Eigen::Index>(target))));
        for (std::size_t j = 0; j < k; ++j)
            g.b(static_cast<Eigen::Index>(target), static_cast<Eigen::Index>(g.order[j])) = coef[static_cast<Eigen::Index>(j)];
    }
    return g;
}

struct CausalEdge {
    std::string from;
    std::string to;
    double weight = 0.0;
};

inline std::vector<CausalEdge> edge_report(const CausalGraph& g, double threshold = 0.05) {
    std::vector<CausalEdge> out;
    for (Eigen::Index i = 0; i < g.b.rows(); ++i)
        for (Eigen::Index j = 0; j < g.b.cols(); ++j)
            if (std::abs(g.b(i, j)) >= threshold && g.b(i, j) != 0.0)
                out.push_back({g.names[static_cast<std::size_t>(j)], g.names[static_cast<std::size_t>(i)], g.b(i, j)});
    std::stable_sort(out.begin(), out.end(),
                     [](const CausalEdge& a, const CausalEdge& b) { return std::abs(a.weight) > std::abs(b.weight); });
    return out;
}

inline json to_json(const CausalGraph& g) {
    json order = json::array();
    for (auto i : g.order) order.push_back(g.names[i]);
    json b = json::array();
    for (Eigen::Index i = 0; i < g.b.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < g.b.cols(); ++j) row.push_back(g.b(i, j));
        b.push_back(row);
    }
    return {{"variables", g.names}, {"order", order}, {"B", b}};
}

inline void write_edges_csv(std::ostream& out, const std::vector<CausalEdge>& edges) {
    out << "from,to,weight\n";
    for (const auto& e : edges) out << e.from << ',' << e.to << ',' << format_fixed(e.weight, 6) << '\n';
}

inline void write_factors_csv(std::ostream& out, const FactorMatrix& f) {
    out << "item";
    for (const auto& c : f.columns) out << ',' << c << ',' << c << "_z";
    out << '\n';
    for (Eigen::Index r = 0; r < f.raw.rows(); ++r) {
        out << f.items[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < f.raw.cols(); ++c)
            out << ',' << format_fixed(f.raw(r, c), 9) << ',' << format_fixed(f.z(r, c), 9);
        out << '\n';
    }
}

}  // namespace agentrec
