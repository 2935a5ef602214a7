// Test-only oracles, independent of the library's solution paths:
// nested-grid maximization for growth rates, exhaustive subset formulas
// for ranks, randomized viable trees, and small hand-built fixtures.
#pragma once

#include <random>
#include <vector>

#include "pwm/tree.hpp"

namespace pwm::testing {

// Derivative-free maximization of f over a box by iterated grid
// refinement; f must be concave. Returns the maximizer.
template <typename F>
inline Vec grid_maximize(const F& f, std::size_t dim, double lo, double hi,
                         double target_spacing) {
    const int points = dim <= 3 ? 11 : 7;
    Vec center = Vec::Constant(static_cast<Eigen::Index>(dim), 0.5 * (lo + hi));
    double half = 0.5 * (hi - lo);
    Vec best = center;
    while (true) {
        const double spacing = 2.0 * half / (points - 1);
        std::vector<int> idx(dim, 0);
        double best_val = -std::numeric_limits<double>::infinity();
        Vec probe(static_cast<Eigen::Index>(dim));
        while (true) {
            for (std::size_t d = 0; d < dim; ++d) {
                probe(static_cast<Eigen::Index>(d)) =
                    center(static_cast<Eigen::Index>(d)) - half + spacing * idx[d];
            }
            const double val = f(probe);
            if (val > best_val) {
                best_val = val;
                best = probe;
            }
            std::size_t d = 0;
            while (d < dim && ++idx[d] == points) {
                idx[d] = 0;
                ++d;
            }
            if (d == dim) break;
        }
        if (spacing <= target_spacing) return best;
        center = best;
        half = 1.5 * spacing;
    }
}

// Quadratic growth objective alpha'p - p'cp/2.
inline double growth_objective(const Vec& alpha, const Mat& c, const Vec& p) {
    return alpha.dot(p) - 0.5 * p.dot(c * p);
}

// k-th ranked component via the max-min-over-subsets formula, exhaustive.
inline double ranked_value_subset_formula(const std::vector<double>& v, std::size_t k) {
    const std::size_t n = v.size();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t mask = 0; mask < (1ull << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcountll(mask)) != k) continue;
        double mn = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1ull << i)) mn = std::min(mn, v[i]);
        }
        best = std::max(best, mn);
    }
    return best;
}

// Randomized viable tree: per node, child price increments are centered
// under a strictly positive pricing vector, so a deflator exists by
// construction. Physical probabilities are drawn separately.
inline EventTree random_viable_tree(std::mt19937_64& rng, int depth, int max_children,
                                    int assets) {
    std::uniform_int_distribution<int> child_count(2, max_children);
    std::uniform_real_distribution<double> ud(0.1, 1.0);
    std::normal_distribution<double> nd(0.0, 0.3);

    EventTree tree;
    TreeNode root;
    root.id = 0;
    root.parent = -1;
    root.prob = 1.0;
    root.prices.assign(static_cast<std::size_t>(assets), 1.0);
    tree.nodes.push_back(root);

    std::vector<int> frontier{0};
    for (int d = 0; d < depth; ++d) {
        std::vector<int> next;
        for (int nid : frontier) {
            const int m = child_count(rng);
            const std::size_t n = tree.nodes[static_cast<std::size_t>(nid)].trade_dim();
            // pricing weights z > 0 and raw increments; recenter so sum z dS = 0
            std::vector<double> z(static_cast<std::size_t>(m));
            double zs = 0.0;
            for (double& v : z) {
                v = ud(rng);
                zs += v;
            }
            for (double& v : z) v /= zs;
            std::vector<double> probs(static_cast<std::size_t>(m));
            double ps = 0.0;
            for (double& v : probs) {
                v = ud(rng);
                ps += v;
            }
            for (double& v : probs) v /= ps;

            Mat ds(static_cast<Eigen::Index>(n), m);
            for (Eigen::Index c = 0; c < m; ++c) {
                for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
                    ds(i, c) = nd(rng);
                }
            }
            Vec mean = Vec::Zero(static_cast<Eigen::Index>(n));
            for (Eigen::Index c = 0; c < m; ++c) {
                mean += z[static_cast<std::size_t>(c)] * ds.col(c);
            }
            for (Eigen::Index c = 0; c < m; ++c) ds.col(c) -= mean;

            for (int c = 0; c < m; ++c) {
                TreeNode ch;
                ch.id = static_cast<int>(tree.nodes.size());
                ch.parent = nid;
                ch.prob = probs[static_cast<std::size_t>(c)];
                const auto& base = tree.nodes[static_cast<std::size_t>(nid)].trade_prices();
                ch.prices.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    ch.prices[i] = base[i] + ds(static_cast<Eigen::Index>(i), c);
                }
                tree.nodes.push_back(ch);
                next.push_back(ch.id);
            }
        }
        frontier = std::move(next);
    }
    tree.finalize();
    return tree;
}

// Binomial fixture: one asset, price 1 -> {2, 0.5}, p = 1/2 each,
// extendable to `levels` periods.
inline EventTree binomial_tree(int levels = 1) {
    EventTree tree;
    TreeNode root;
    root.id = 0;
    root.parent = -1;
    root.prices = {1.0};
    tree.nodes.push_back(root);
    std::vector<int> frontier{0};
    for (int d = 0; d < levels; ++d) {
        std::vector<int> next;
        for (int nid : frontier) {
            for (double factor : {2.0, 0.5}) {
                TreeNode ch;
                ch.id = static_cast<int>(tree.nodes.size());
                ch.parent = nid;
                ch.prob = 0.5;
                ch.prices = {tree.nodes[static_cast<std::size_t>(nid)].prices[0] * factor};
                tree.nodes.push_back(ch);
                next.push_back(ch.id);
            }
        }
        frontier = std::move(next);
    }
    tree.finalize();
    return tree;
}

// Trinomial fixture: one asset, 1 -> {2, 1, 0.5}, p = 1/3 each.
inline EventTree trinomial_tree() {
    EventTree tree;
    TreeNode root;
    root.id = 0;
    root.parent = -1;
    root.prices = {1.0};
    tree.nodes.push_back(root);
    int id = 1;
    for (double s : {2.0, 1.0, 0.5}) {
        TreeNode ch;
        ch.id = id++;
        ch.parent = 0;
        ch.prob = 1.0 / 3.0;
        ch.prices = {s};
        tree.nodes.push_back(ch);
    }
    tree.finalize();
    return tree;
}

// Trinomial with two spanning assets: the 3x3 moment system is
// nonsingular, so the deflator is unique.
inline EventTree trinomial_two_asset_tree() {
    EventTree tree;
    TreeNode root;
    root.id = 0;
    root.parent = -1;
    root.prices = {1.0, 1.0};
    tree.nodes.push_back(root);
    const double s1[3] = {2.0, 1.0, 0.5};
    const double s2[3] = {1.2, 0.7, 1.3};
    // pick probabilities so that a positive pricing vector exists
    const double z[3] = {0.3, 0.4, 0.3};
    double m1 = 0.0;
    double m2 = 0.0;
    for (int c = 0; c < 3; ++c) {
        m1 += z[c] * (s1[c] - 1.0);
        m2 += z[c] * (s2[c] - 1.0);
    }
    for (int c = 0; c < 3; ++c) {
        TreeNode ch;
        ch.id = c + 1;
        ch.parent = 0;
        ch.prob = z[c];
        ch.prices = {s1[c] - m1, s2[c] - m2};
        tree.nodes.push_back(ch);
    }
    tree.finalize();
    return tree;
}

// Two-epoch fixture with a dimension change: one asset for one period,
// then an entry (dim 2) and an incomplete second period.
inline EventTree two_epoch_tree() {
    EventTree tree;
    TreeNode root;
    root.id = 0;
    root.parent = -1;
    root.prices = {1.0};
    tree.nodes.push_back(root);
    int id = 1;
    std::vector<int> mid;
    for (double s : {2.0, 0.5}) {
        TreeNode ch;
        ch.id = id++;
        ch.parent = 0;
        ch.prob = 0.5;
        ch.prices = {s};
        ch.reset = true;
        ch.post_prices = {s, 1.0};  // entry at price 1
        tree.nodes.push_back(ch);
        mid.push_back(ch.id);
    }
    for (int nid : mid) {
        // four branches spanned by two assets: a one-parameter deflator family
        const auto& base = tree.nodes[static_cast<std::size_t>(nid)].post_prices;
        const double d1[4] = {0.5, 0.0, -0.25, 0.15};
        const double d2[4] = {0.3, -0.1, -0.2, -0.35};
        const double z[4] = {0.25, 0.3, 0.25, 0.2};
        double m1 = 0.0;
        double m2 = 0.0;
        for (int c = 0; c < 4; ++c) {
            m1 += z[c] * d1[c];
            m2 += z[c] * d2[c];
        }
        for (int c = 0; c < 4; ++c) {
            TreeNode ch;
            ch.id = id++;
            ch.parent = nid;
            ch.prob = z[c];
            ch.prices = {base[0] + d1[c] - m1, base[1] + d2[c] - m2};
            tree.nodes.push_back(ch);
        }
    }
    tree.finalize();
    return tree;
}

}  // namespace pwm::testing
