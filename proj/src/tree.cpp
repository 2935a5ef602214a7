#include "pwm/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pwm/common.hpp"

namespace pwm {

void EventTree::finalize() {
    if (nodes.empty()) throw StructureError("tree has no nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id != static_cast<int>(i)) throw StructureError("node ids must be 0..N-1");
        nodes[i].children.clear();
    }
    if (nodes[0].parent != -1) throw StructureError("node 0 must be the root");
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const int p = nodes[i].parent;
        if (p < 0 || p >= static_cast<int>(i)) {
            throw StructureError("parents must precede children");
        }
        nodes[static_cast<std::size_t>(p)].children.push_back(static_cast<int>(i));
    }
    epoch.assign(nodes.size(), 1);
    max_depth = 0;
    nodes[0].depth = 0;
    if (nodes[0].reset && nodes[0].post_prices.empty()) {
        throw StructureError("reset node needs post_prices");
    }
    epoch[0] = nodes[0].reset ? 2 : 1;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        TreeNode& nd = nodes[i];
        const TreeNode& par = nodes[static_cast<std::size_t>(nd.parent)];
        nd.depth = par.depth + 1;
        max_depth = std::max(max_depth, nd.depth);
        if (nd.prices.size() != par.trade_dim()) {
            throw StructureError("dimension break along edge into node " + std::to_string(i));
        }
        if (nd.reset && nd.post_prices.empty()) {
            throw StructureError("reset node needs post_prices");
        }
        if (!(nd.prob > 0.0)) throw StructureError("one-step probabilities must be positive");
        epoch[i] = epoch[static_cast<std::size_t>(nd.parent)] + (nd.reset ? 1 : 0);
    }
    for (const TreeNode& nd : nodes) {
        if (nd.children.empty()) continue;
        double total = 0.0;
        for (int c : nd.children) total += node(c).prob;
        if (std::abs(total - 1.0) > 1e-10) {
            throw StructureError("child probabilities of node " + std::to_string(nd.id) +
                                 " sum to " + std::to_string(total));
        }
    }
}

std::vector<int> EventTree::leaves() const {
    std::vector<int> out;
    for (const TreeNode& nd : nodes) {
        if (nd.children.empty()) out.push_back(nd.id);
    }
    return out;
}

Vec EventTree::edge_delta(int child) const {
    const TreeNode& ch = node(child);
    const TreeNode& par = node(ch.parent);
    const auto& base = par.trade_prices();
    Vec d(static_cast<Eigen::Index>(base.size()));
    for (std::size_t i = 0; i < base.size(); ++i) {
        d(static_cast<Eigen::Index>(i)) = ch.prices[i] - base[i];
    }
    return d;
}

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kDedupTol = 1e-9;

// Columns of the constraint matrix A = [1'; dS] and right-hand side e_1
// for the one-step system in z-space.
Mat one_step_matrix(const EventTree& tree, const TreeNode& nd) {
    const std::size_t m = nd.children.size();
    const std::size_t n = nd.trade_dim();
    Mat a(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < m; ++c) {
        a(0, static_cast<Eigen::Index>(c)) = 1.0;
        const Vec d = tree.edge_delta(nd.children[c]);
        a.block(1, static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n), 1) = d;
    }
    return a;
}

void enumerate_vertices(const Mat& a, const Vec& b, std::vector<Vec>& out) {
    const auto m = static_cast<std::size_t>(a.cols());
    Eigen::ColPivHouseholderQR<Mat> full_qr(a);
    full_qr.setThreshold(1e-10);
    const auto rank = static_cast<std::size_t>(full_qr.rank());
    if (rank == 0) return;
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());

    auto try_subset = [&](const std::vector<std::size_t>& cols) {
        Mat sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) {
            sub.col(static_cast<Eigen::Index>(i)) = a.col(static_cast<Eigen::Index>(cols[i]));
        }
        Eigen::ColPivHouseholderQR<Mat> qr(sub);
        qr.setThreshold(1e-10);
        if (static_cast<std::size_t>(qr.rank()) != cols.size()) return;
        Vec zb = qr.solve(b);
        if ((sub * zb - b).cwiseAbs().maxCoeff() > kFeasTol * scale) return;
        for (Eigen::Index i = 0; i < zb.size(); ++i) {
            if (zb(i) < -kFeasTol) return;
            if (zb(i) < 0.0) zb(i) = 0.0;
        }
        Vec z = Vec::Zero(static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < cols.size(); ++i) {
            z(static_cast<Eigen::Index>(cols[i])) = zb(static_cast<Eigen::Index>(i));
        }
        for (const Vec& v : out) {
            if ((v - z).cwiseAbs().maxCoeff() < kDedupTol) return;
        }
        out.push_back(std::move(z));
    };

    // Simple iterative combination generator.
    std::vector<std::size_t> cols(rank);
    for (std::size_t i = 0; i < rank; ++i) cols[i] = i;
    if (rank > m) return;
    while (true) {
        try_subset(cols);
        // next combination
        std::size_t i = rank;
        while (i > 0) {
            --i;
            if (cols[i] + (rank - i) <= m - 1) {
                ++cols[i];
                for (std::size_t j = i + 1; j < rank; ++j) cols[j] = cols[j - 1] + 1;
                break;
            }
            if (i == 0) return;
        }
        if (rank == 0) return;
    }
}

// Certificate of a one-step arbitrage: theta with theta' dS_c >= 0 for
// every child and positive total. Box-bounded LP keeps the vertex
// enumeration finite.
Vec arbitrage_certificate(const Mat& a) {
    const auto m = a.cols();
    const auto n = a.rows() - 1;
    if (n == 0) return Vec();
    Mat ds = a.bottomRows(n);
    Mat g(m + 2 * n, n);
    Vec h = Vec::Zero(m + 2 * n);
    for (Eigen::Index c = 0; c < m; ++c) g.row(c) = -ds.col(c).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        g.row(m + 2 * i).setZero();
        g(m + 2 * i, i) = 1.0;
        h(m + 2 * i) = 1.0;
        g.row(m + 2 * i + 1).setZero();
        g(m + 2 * i + 1, i) = -1.0;
        h(m + 2 * i + 1) = 1.0;
    }
    Vec obj = Vec::Zero(n);
    for (Eigen::Index c = 0; c < m; ++c) obj += ds.col(c);
    LpResult lp = tiny_lp_max(obj, g, h);
    if (lp.feasible && lp.value > 1e-9) return lp.x;
    return Vec();
}

}  // namespace

LpResult tiny_lp_max(const Vec& c, const Mat& g, const Vec& h) {
    const auto d = c.size();
    const auto rows = g.rows();
    LpResult best;
    if (d == 0 || rows < d) return best;
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) cols[static_cast<std::size_t>(i)] = i;
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());

    auto try_basis = [&](const std::vector<Eigen::Index>& rows_sel) {
        Mat sub(d, d);
        Vec rhs(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            sub.row(i) = g.row(rows_sel[static_cast<std::size_t>(i)]);
            rhs(i) = h(rows_sel[static_cast<std::size_t>(i)]);
        }
        Eigen::ColPivHouseholderQR<Mat> qr(sub);
        qr.setThreshold(1e-11);
        if (qr.rank() != d) return;
        Vec x = qr.solve(rhs);
        if (((g * x) - h).maxCoeff() > kFeasTol * scale) return;
        const double val = c.dot(x);
        if (!best.feasible || val > best.value + 1e-14) {
            best.feasible = true;
            best.value = val;
            best.x = x;
        }
    };

    std::vector<Eigen::Index> sel(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) sel[static_cast<std::size_t>(i)] = i;
    while (true) {
        try_basis(sel);
        std::size_t i = static_cast<std::size_t>(d);
        bool advanced = false;
        while (i > 0) {
            --i;
            if (sel[i] + (d - static_cast<Eigen::Index>(i)) <= rows - 1) {
                ++sel[i];
                for (std::size_t j = i + 1; j < static_cast<std::size_t>(d); ++j) {
                    sel[j] = sel[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if (!advanced) break;
    }
    return best;
}

OneStepSet one_step_deflator_set(const EventTree& tree, int node_id) {
    const TreeNode& nd = tree.node(node_id);
    OneStepSet out;
    if (nd.children.empty()) return out;

    const Mat a = one_step_matrix(tree, nd);
    const auto m = a.cols();
    Vec b = Vec::Zero(a.rows());
    b(0) = 1.0;

    Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
    cod.setThreshold(1e-10);
    out.particular = cod.solve(b);
    Eigen::FullPivLU<Mat> lu(a);
    lu.setThreshold(1e-10);
    out.nullspace = lu.dimensionOfKernel() > 0 ? Mat(lu.kernel()) : Mat(m, 0);
    if ((a * out.particular - b).cwiseAbs().maxCoeff() > kFeasTol) {
        // Affine system itself is infeasible.
        out.kind = OneStepSet::Kind::empty;
        out.certificate = arbitrage_certificate(a);
        return out;
    }

    std::vector<Vec> verts;
    enumerate_vertices(a, b, verts);
    if (verts.empty()) {
        out.kind = OneStepSet::Kind::empty;
        out.certificate = arbitrage_certificate(a);
        return out;
    }
    out.vertices.resize(m, static_cast<Eigen::Index>(verts.size()));
    Vec centroid = Vec::Zero(m);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        out.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
        centroid += verts[i];
    }
    centroid /= static_cast<double>(verts.size());
    out.interior = centroid;

    if (centroid.minCoeff() <= 1e-12) {
        out.kind = OneStepSet::Kind::boundary;
        out.certificate = arbitrage_certificate(a);
        return out;
    }
    // Strictly positive solutions exist. Singleton iff the affine solution
    // space is zero-dimensional (so the polytope is that single point).
    out.kind = (verts.size() == 1 && out.nullspace.cols() == 0) ? OneStepSet::Kind::singleton
                                                                : OneStepSet::Kind::multi;
    return out;
}

TreeAnalysis analyze_tree(const EventTree& tree) {
    TreeAnalysis an;
    an.sets.resize(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        an.sets[i] = one_step_deflator_set(tree, static_cast<int>(i));
        if (!tree.node(static_cast<int>(i)).children.empty() && !an.sets[i].viable() &&
            an.viable) {
            an.viable = false;
            an.first_bad_node = static_cast<int>(i);
        }
    }
    return an;
}

std::vector<TreeDeflator> sample_deflators(const EventTree& tree, const TreeAnalysis& an,
                                           std::size_t count, std::uint64_t seed) {
    if (!an.viable) throw NonViableTreeError(an.first_bad_node);
    std::vector<TreeDeflator> out;
    std::mt19937_64 rng(splitmix64(seed));
    std::exponential_distribution<double> ed(1.0);
    for (std::size_t s = 0; s < count; ++s) {
        TreeDeflator defl;
        defl.y.assign(tree.size(), 1.0);
        for (std::size_t i = 0; i < tree.size(); ++i) {
            const TreeNode& nd = tree.node(static_cast<int>(i));
            if (nd.children.empty()) continue;
            const OneStepSet& set = an.sets[i];
            const auto nv = set.vertices.cols();
            Vec z;
            if (s == 0 || nv == 1) {
                z = set.interior;
            } else {
                Vec w(nv);
                for (Eigen::Index v = 0; v < nv; ++v) w(v) = ed(rng) + 1e-3;
                w /= w.sum();
                z = set.vertices * w;
            }
            for (std::size_t c = 0; c < nd.children.size(); ++c) {
                const TreeNode& ch = tree.node(nd.children[c]);
                const double y_ratio = z(static_cast<Eigen::Index>(c)) / ch.prob;
                defl.y[static_cast<std::size_t>(ch.id)] =
                    defl.y[i] * y_ratio;
            }
        }
        bool dup = false;
        for (const TreeDeflator& prev : out) {
            double gap = 0.0;
            for (std::size_t i = 0; i < tree.size(); ++i) {
                gap = std::max(gap, std::abs(prev.y[i] - defl.y[i]));
            }
            if (gap < 1e-12) {
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(std::move(defl));
    }
    return out;
}

namespace {

MartingaleCheck conditional_check(const EventTree& tree, const NodeValues& z, double tol,
                                  bool require_equality) {
    if (z.size() != tree.size()) throw InputError("node value count mismatch");
    MartingaleCheck out;
    for (const TreeNode& nd : tree.nodes) {
        if (nd.children.empty()) continue;
        double expect = 0.0;
        for (int c : nd.children) expect += tree.node(c).prob * z[static_cast<std::size_t>(c)];
        const double resid = expect - z[static_cast<std::size_t>(nd.id)];
        const double scale = std::max(1.0, std::abs(z[static_cast<std::size_t>(nd.id)]));
        const double bad = require_equality ? std::abs(resid) : resid;
        if (bad > out.worst) {
            out.worst = bad;
            out.worst_node = nd.id;
        }
        if (bad > tol * scale) out.ok = false;
    }
    return out;
}

}  // namespace

MartingaleCheck is_supermartingale(const EventTree& tree, const NodeValues& z, double tol) {
    return conditional_check(tree, z, tol, false);
}

MartingaleCheck is_martingale(const EventTree& tree, const NodeValues& z, double tol) {
    return conditional_check(tree, z, tol, true);
}

namespace {

// One-step superhedge: min v s.t. v + theta' dS_c >= target_c, solved in
// the span of the price increments.
struct StepHedge {
    double v = 0.0;
    Vec theta;
};

StepHedge superhedge_step(const EventTree& tree, const TreeNode& nd,
                          const std::vector<double>& targets) {
    const std::size_t m = nd.children.size();
    const std::size_t n = nd.trade_dim();
    Mat ds(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < m; ++c) {
        ds.col(static_cast<Eigen::Index>(c)) = tree.edge_delta(nd.children[c]);
    }
    StepHedge out;
    out.theta = Vec::Zero(static_cast<Eigen::Index>(n));

    // Reduce to the span of the increments.
    Eigen::ColPivHouseholderQR<Mat> qr(ds);
    qr.setThreshold(1e-11);
    const auto r = qr.rank();
    if (r == 0) {
        out.v = *std::max_element(targets.begin(), targets.end());
        return out;
    }
    Mat q = qr.householderQ() * Mat::Identity(static_cast<Eigen::Index>(n), r);
    Mat dsr = q.transpose() * ds;  // r x m

    // Variables x = (v, w): maximize -v s.t. -v - w' dsr_c <= -target_c.
    Mat g(static_cast<Eigen::Index>(m), r + 1);
    Vec h(static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < m; ++c) {
        g(static_cast<Eigen::Index>(c), 0) = -1.0;
        g.block(static_cast<Eigen::Index>(c), 1, 1, r) =
            -dsr.col(static_cast<Eigen::Index>(c)).transpose();
        h(static_cast<Eigen::Index>(c)) = -targets[c];
    }
    Vec obj = Vec::Zero(r + 1);
    obj(0) = -1.0;
    LpResult lp = tiny_lp_max(obj, g, h);
    if (!lp.feasible) {
        throw StructureError("one-step superhedge has no vertex solution (non-viable node " +
                             std::to_string(nd.id) + ")");
    }
    out.v = lp.x(0);
    out.theta = q * lp.x.tail(r);
    return out;
}

void require_viable(const TreeAnalysis& an) {
    if (!an.viable) throw NonViableTreeError(an.first_bad_node);
}

double polytope_max(const OneStepSet& set, const Vec& objective, Eigen::Index* arg = nullptr) {
    double best = -std::numeric_limits<double>::infinity();
    Eigen::Index best_col = -1;
    for (Eigen::Index v = 0; v < set.vertices.cols(); ++v) {
        const double val = objective.dot(set.vertices.col(v));
        if (val > best) {
            best = val;
            best_col = v;
        }
    }
    if (arg) *arg = best_col;
    return best;
}

}  // namespace

Decomposition optional_decompose(const EventTree& tree, const TreeAnalysis& an,
                                 const NodeValues& x, double tol) {
    require_viable(an);
    if (x.size() != tree.size()) throw InputError("node value count mismatch");
    Decomposition out;
    out.x0 = x[0];
    out.theta.resize(tree.size());
    out.k.dK.assign(tree.size(), 0.0);

    // Node-wise supermartingale precondition against every one-step
    // deflator: X(node) >= max over the polytope of sum z_c X(child).
    for (const TreeNode& nd : tree.nodes) {
        if (nd.children.empty()) continue;
        const OneStepSet& set = an.sets[static_cast<std::size_t>(nd.id)];
        Vec child_x(static_cast<Eigen::Index>(nd.children.size()));
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            child_x(static_cast<Eigen::Index>(c)) = x[static_cast<std::size_t>(nd.children[c])];
        }
        Eigen::Index arg = -1;
        const double sup = polytope_max(set, child_x, &arg);
        const double scale = std::max(1.0, std::abs(x[static_cast<std::size_t>(nd.id)]));
        if (sup > x[static_cast<std::size_t>(nd.id)] + tol * scale) {
            out.accepted = false;
            out.bad_node = nd.id;
            // Move the witness off the boundary while keeping the violation.
            Vec vtx = set.vertices.col(arg);
            Vec witness = vtx;
            const double overshoot = sup - x[static_cast<std::size_t>(nd.id)];
            for (double eps = 1e-3; eps >= 1e-13; eps *= 0.5) {
                Vec mix = (1.0 - eps) * vtx + eps * set.interior;
                if (child_x.dot(mix) > x[static_cast<std::size_t>(nd.id)] + 0.5 * overshoot &&
                    mix.minCoeff() > 0.0) {
                    witness = mix;
                    break;
                }
            }
            out.bad_direction = witness;
            out.violation = child_x.dot(witness) - x[static_cast<std::size_t>(nd.id)];
            return out;
        }
    }

    out.accepted = true;
    for (const TreeNode& nd : tree.nodes) {
        if (nd.children.empty()) continue;
        std::vector<double> targets;
        targets.reserve(nd.children.size());
        for (int c : nd.children) targets.push_back(x[static_cast<std::size_t>(c)]);
        StepHedge hedge = superhedge_step(tree, nd, targets);
        out.theta[static_cast<std::size_t>(nd.id)] = hedge.theta;
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            const int ch = nd.children[c];
            const double gain = hedge.theta.dot(tree.edge_delta(ch));
            double dk = x[static_cast<std::size_t>(nd.id)] + gain - x[static_cast<std::size_t>(ch)];
            if (dk < -1e-8 * std::max(1.0, std::abs(x[static_cast<std::size_t>(ch)]))) {
                throw StructureError("negative withdrawal in accepted decomposition");
            }
            out.k.dK[static_cast<std::size_t>(ch)] = std::max(dk, 0.0);
        }
    }

    // Reconstruction check along every path.
    NodeValues rebuilt(tree.size(), 0.0);
    rebuilt[0] = out.x0;
    for (const TreeNode& nd : tree.nodes) {
        if (nd.id == 0) continue;
        const TreeNode& par = tree.node(nd.parent);
        const double gain = out.theta[static_cast<std::size_t>(par.id)].dot(tree.edge_delta(nd.id));
        rebuilt[static_cast<std::size_t>(nd.id)] = rebuilt[static_cast<std::size_t>(par.id)] +
                                                   gain - out.k.dK[static_cast<std::size_t>(nd.id)];
        out.max_reconstruction_error =
            std::max(out.max_reconstruction_error,
                     std::abs(rebuilt[static_cast<std::size_t>(nd.id)] -
                              x[static_cast<std::size_t>(nd.id)]));
    }
    return out;
}

Superhedge superhedge(const EventTree& tree, const TreeAnalysis& an, const WithdrawalStream& k) {
    require_viable(an);
    if (k.dK.size() != tree.size()) throw InputError("stream size mismatch");
    for (double v : k.dK) {
        if (v < 0.0) throw InputError("withdrawals must be nonnegative");
    }
    Superhedge out;
    out.value.assign(tree.size(), 0.0);
    out.theta.resize(tree.size());

    // Backward induction in reverse id order (parents precede children).
    for (std::size_t i = tree.size(); i-- > 0;) {
        const TreeNode& nd = tree.node(static_cast<int>(i));
        if (nd.children.empty()) {
            out.value[i] = k.dK[i];
            continue;
        }
        std::vector<double> targets;
        targets.reserve(nd.children.size());
        for (int c : nd.children) targets.push_back(out.value[static_cast<std::size_t>(c)]);
        StepHedge hedge = superhedge_step(tree, nd, targets);
        out.theta[i] = hedge.theta;
        out.value[i] = k.dK[i] + hedge.v;
    }
    out.x0 = out.value[0];

    // Pathwise domination of the cumulative stream by the produced wealth.
    NodeValues wealth(tree.size(), 0.0);
    NodeValues cum(tree.size(), 0.0);
    wealth[0] = out.x0;
    cum[0] = k.dK[0];
    out.worst_domination = wealth[0] - cum[0];
    for (const TreeNode& nd : tree.nodes) {
        if (nd.id == 0) continue;
        const std::size_t p = static_cast<std::size_t>(nd.parent);
        wealth[static_cast<std::size_t>(nd.id)] =
            wealth[p] + out.theta[p].dot(tree.edge_delta(nd.id));
        cum[static_cast<std::size_t>(nd.id)] = cum[p] + k.dK[static_cast<std::size_t>(nd.id)];
        out.worst_domination =
            std::min(out.worst_domination, wealth[static_cast<std::size_t>(nd.id)] -
                                               cum[static_cast<std::size_t>(nd.id)]);
    }
    return out;
}

DualValue dual_value(const EventTree& tree, const TreeAnalysis& an, const WithdrawalStream& k) {
    require_viable(an);
    if (k.dK.size() != tree.size()) throw InputError("stream size mismatch");
    DualValue out;
    out.d.assign(tree.size(), 0.0);
    for (std::size_t i = tree.size(); i-- > 0;) {
        const TreeNode& nd = tree.node(static_cast<int>(i));
        if (nd.children.empty()) {
            out.d[i] = k.dK[i];
            continue;
        }
        const OneStepSet& set = an.sets[i];
        Vec child_d(static_cast<Eigen::Index>(nd.children.size()));
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            child_d(static_cast<Eigen::Index>(c)) = out.d[static_cast<std::size_t>(nd.children[c])];
        }
        const double sup = polytope_max(set, child_d);
        out.d[i] = k.dK[i] + sup;

        // Attainment: the optimal face must contain a strictly positive z.
        Vec face_centroid = Vec::Zero(set.vertices.rows());
        int face_count = 0;
        const double scale = std::max(1.0, std::abs(sup));
        for (Eigen::Index v = 0; v < set.vertices.cols(); ++v) {
            if (child_d.dot(set.vertices.col(v)) >= sup - 1e-10 * scale) {
                face_centroid += set.vertices.col(v);
                ++face_count;
            }
        }
        face_centroid /= static_cast<double>(std::max(face_count, 1));
        if (face_centroid.minCoeff() <= 1e-12) out.attained = false;
    }
    out.value = out.d[0];
    return out;
}

NodeValues minimal_financing(const EventTree& tree, const TreeAnalysis& an,
                             const WithdrawalStream& k) {
    require_viable(an);
    NodeValues future(tree.size(), 0.0);
    for (std::size_t i = tree.size(); i-- > 0;) {
        const TreeNode& nd = tree.node(static_cast<int>(i));
        if (nd.children.empty()) continue;
        const OneStepSet& set = an.sets[i];
        Vec child(static_cast<Eigen::Index>(nd.children.size()));
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            const std::size_t ch = static_cast<std::size_t>(nd.children[c]);
            child(static_cast<Eigen::Index>(c)) = k.dK[ch] + future[ch];
        }
        future[i] = polytope_max(set, child);
    }
    NodeValues cum(tree.size(), 0.0);
    cum[0] = k.dK[0];
    for (const TreeNode& nd : tree.nodes) {
        if (nd.id == 0) continue;
        cum[static_cast<std::size_t>(nd.id)] =
            cum[static_cast<std::size_t>(nd.parent)] + k.dK[static_cast<std::size_t>(nd.id)];
    }
    NodeValues out(tree.size(), 0.0);
    for (std::size_t i = 0; i < tree.size(); ++i) out[i] = cum[i] + future[i];
    return out;
}

Replicability replicable(const EventTree& tree, const TreeAnalysis& an, const Claim& claim) {
    require_viable(an);
    if (claim.payoff.size() != tree.size()) throw InputError("claim payoff size mismatch");
    WithdrawalStream k;
    k.dK.assign(tree.size(), 0.0);
    for (const TreeNode& nd : tree.nodes) {
        const double pay = claim.payoff[static_cast<std::size_t>(nd.id)];
        if (pay != 0.0) {
            if (nd.depth != claim.maturity) {
                throw InputError("claim payoff off the maturity level");
            }
            if (pay < 0.0) throw InputError("claim payoff must be nonnegative");
            k.dK[static_cast<std::size_t>(nd.id)] = pay;
        }
    }
    NodeValues minimal = minimal_financing(tree, an, k);
    Decomposition dec = optional_decompose(tree, an, minimal, 1e-9);
    Replicability out;
    if (!dec.accepted) {
        throw StructureError("minimal financing process failed its own decomposition");
    }
    out.residual = dec.k;
    for (double v : dec.k.dK) out.max_dk = std::max(out.max_dk, v);
    out.replicable = out.max_dk <= 1e-10;
    return out;
}

bool is_complete(const EventTree& tree, const TreeAnalysis& an) {
    require_viable(an);
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (tree.node(static_cast<int>(i)).children.empty()) continue;
        if (an.sets[i].kind != OneStepSet::Kind::singleton) return false;
    }
    return true;
}

Vec log_optimal_weights(const Mat& d, const Vec& p) {
    const auto n = d.rows();
    const auto m = d.cols();
    Eigen::ColPivHouseholderQR<Mat> qr(d);
    qr.setThreshold(1e-12);
    const auto r = qr.rank();
    if (r == 0) return Vec::Zero(n);
    Mat q = qr.householderQ() * Mat::Identity(n, r);
    Mat dr = q.transpose() * d;  // r x m

    Vec w = Vec::Zero(r);
    auto value = [&](const Vec& wv, bool* feasible) {
        double f = 0.0;
        *feasible = true;
        for (Eigen::Index c = 0; c < m; ++c) {
            const double factor = 1.0 + wv.dot(dr.col(c));
            if (factor <= 1e-12) {
                *feasible = false;
                return 0.0;
            }
            f += p(c) * std::log(factor);
        }
        return f;
    };

    bool ok = true;
    double f = value(w, &ok);
    for (int iter = 0; iter < 200; ++iter) {
        Vec grad = Vec::Zero(r);
        Mat hess = Mat::Zero(r, r);
        for (Eigen::Index c = 0; c < m; ++c) {
            const double factor = 1.0 + w.dot(dr.col(c));
            grad += p(c) * dr.col(c) / factor;
            hess -= p(c) * (dr.col(c) * dr.col(c).transpose()) / (factor * factor);
        }
        if (grad.cwiseAbs().maxCoeff() < 1e-14) break;
        Vec step = hess.ldlt().solve(-grad);
        double t = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt) {
            Vec cand = w + t * step;
            bool feas = true;
            const double fc = value(cand, &feas);
            if (feas && fc >= f - 1e-15) {
                w = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break;
    }
    return q * w;
}

NumeraireTree supermartingale_numeraire_tree(const EventTree& tree, const TreeAnalysis& an) {
    require_viable(an);
    NumeraireTree out;
    out.x_star.assign(tree.size(), 1.0);
    out.epoch_factor.assign(tree.size(), 1.0);
    out.theta_star.resize(tree.size());
    out.one_step_weight.resize(tree.size());

    for (const TreeNode& nd : tree.nodes) {
        if (nd.children.empty()) continue;
        const std::size_t m = nd.children.size();
        const std::size_t n = nd.trade_dim();
        Mat d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        Vec p(static_cast<Eigen::Index>(m));
        for (std::size_t c = 0; c < m; ++c) {
            d.col(static_cast<Eigen::Index>(c)) = tree.edge_delta(nd.children[c]);
            p(static_cast<Eigen::Index>(c)) = tree.node(nd.children[c]).prob;
        }
        const Vec w = log_optimal_weights(d, p);  // per unit of wealth
        const std::size_t i = static_cast<std::size_t>(nd.id);
        out.one_step_weight[i] = w;
        out.theta_star[i] = out.x_star[i] * w;
        for (std::size_t c = 0; c < m; ++c) {
            const TreeNode& ch = tree.node(nd.children[c]);
            const double factor = 1.0 + w.dot(d.col(static_cast<Eigen::Index>(c)));
            const std::size_t ci = static_cast<std::size_t>(ch.id);
            out.x_star[ci] = out.x_star[i] * factor;
            out.epoch_factor[ci] =
                ch.reset ? 1.0 : (nd.reset ? factor : out.epoch_factor[i] * factor);
        }
    }
    return out;
}

Na1Report na1_probe(const EventTree& /*tree*/, const TreeAnalysis& an) {
    Na1Report out;
    out.viable = an.viable;
    if (!an.viable) {
        out.node = an.first_bad_node;
        out.certificate = an.sets[static_cast<std::size_t>(an.first_bad_node)].certificate;
    }
    return out;
}

}  // namespace pwm
