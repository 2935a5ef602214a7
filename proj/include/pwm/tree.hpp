#pragma once

#include <cstdint>

#include "pwm/linalg.hpp"
#include "pwm/ustate.hpp"

namespace pwm {

// A node of a finite event tree. Prices at arrival; a reset node switches
// to post_prices (the new dimension) before its children branch off.
struct TreeNode {
    int id = 0;
    int parent = -1;
    int depth = 0;
    double prob = 1.0;  // one-step probability from the parent
    std::vector<double> prices;
    bool reset = false;
    std::vector<double> post_prices;
    std::vector<int> children;

    const std::vector<double>& trade_prices() const { return reset ? post_prices : prices; }
    std::size_t trade_dim() const { return trade_prices().size(); }
};

class EventTree {
public:
    std::vector<TreeNode> nodes;  // nodes[id].id == id, root at 0

    // Computes children/depth/epoch and validates probabilities and
    // dimension consistency along edges.
    void finalize();

    std::size_t size() const { return nodes.size(); }
    const TreeNode& node(int id) const { return nodes[static_cast<std::size_t>(id)]; }
    int max_depth = 0;
    // 1-based epoch of each node (1 + number of resets on the root path,
    // counting the node's own reset).
    std::vector<std::size_t> epoch;
    std::vector<int> leaves() const;
    // Price increment along the edge into `child`.
    Vec edge_delta(int child) const;
};

// The one-step deflator set of a node, in z-coordinates z_c = p_c y_c:
//   { z >= 0 : sum z = 1, sum z_c dS_c = 0 },
// with strict positivity required of actual deflators.
struct OneStepSet {
    enum class Kind {
        no_children,  // leaf
        empty,        // no nonnegative solution at all
        boundary,     // nonnegative solutions exist, none strictly positive
        singleton,    // exactly one solution, strictly positive
        multi         // a strictly positive family
    };
    Kind kind = Kind::no_children;
    Mat vertices;     // columns: vertices of the polytope
    Vec interior;     // centroid of the vertices
    Vec particular;   // min-norm solution of the affine system (may be infeasible)
    Mat nullspace;    // basis of the homogeneous solutions
    Vec certificate;  // theta with theta' dS_c >= 0 (> 0 somewhere) when not viable

    bool viable() const { return kind == Kind::singleton || kind == Kind::multi; }
};

OneStepSet one_step_deflator_set(const EventTree& tree, int node);

struct TreeAnalysis {
    std::vector<OneStepSet> sets;  // per node id
    bool viable = true;
    int first_bad_node = -1;
};
TreeAnalysis analyze_tree(const EventTree& tree);

using NodeValues = std::vector<double>;  // indexed by node id

class NonViableTreeError : public Error {
public:
    explicit NonViableTreeError(int node)
        : Error("tree is not viable; first failing node " + std::to_string(node)), node(node) {}
    int node;
};

struct TreeDeflator {
    NodeValues y;  // Y(root) = 1, Y > 0
};

// Strictly positive deflators assembled from per-node samples of the
// one-step polytope (the centroid plus random interior mixtures of
// vertices). Deterministic per seed; duplicates are collapsed, so a
// complete tree yields exactly one deflator.
std::vector<TreeDeflator> sample_deflators(const EventTree& tree, const TreeAnalysis& an,
                                           std::size_t count, std::uint64_t seed);

struct MartingaleCheck {
    bool ok = true;
    double worst = 0.0;
    int worst_node = -1;
};
MartingaleCheck is_supermartingale(const EventTree& tree, const NodeValues& z, double tol = 1e-10);
MartingaleCheck is_martingale(const EventTree& tree, const NodeValues& z, double tol = 1e-10);

struct WithdrawalStream {
    NodeValues dK;  // withdrawal paid at each node, >= 0
};

struct Claim {
    int maturity = 0;
    NodeValues payoff;  // nonzero only at depth == maturity
};

// Optional decomposition X = x + theta . S - K. The withdrawal increment
// at a non-root node m with parent p is
//   dK(m) = X(p) + theta(p)' dS_m - X(m),
// which makes the reconstruction identity exact along every path;
// nonnegativity of dK is the property under test.
struct Decomposition {
    bool accepted = false;
    double x0 = 0.0;
    std::vector<Vec> theta;  // per node; empty at leaves
    WithdrawalStream k;
    double max_reconstruction_error = 0.0;
    // On rejection: a strictly positive one-step direction under which X
    // fails the supermartingale inequality at bad_node.
    int bad_node = -1;
    Vec bad_direction;
    double violation = 0.0;
};
Decomposition optional_decompose(const EventTree& tree, const TreeAnalysis& an,
                                 const NodeValues& x, double tol = 1e-9);

// Backward-induction superhedge of a withdrawal stream:
//   V(node) = dK(node) + min { v : exists theta, v + theta' dS >= V(child) }.
struct Superhedge {
    double x0 = 0.0;
    std::vector<Vec> theta;
    NodeValues value;
    double worst_domination = 0.0;  // min over nodes of (wealth - cumulative K)
};
Superhedge superhedge(const EventTree& tree, const TreeAnalysis& an, const WithdrawalStream& k);

// Dual route: D(node) = dK(node) + sup over the one-step polytope of
// sum z_c D(child); reports whether the sup is attained by a strictly
// positive deflator or only approached at the boundary.
struct DualValue {
    double value = 0.0;
    bool attained = true;
    NodeValues d;
};
DualValue dual_value(const EventTree& tree, const TreeAnalysis& an, const WithdrawalStream& k);

// Minimal financing of K: X~ = K + esssup of deflated future withdrawals.
NodeValues minimal_financing(const EventTree& tree, const TreeAnalysis& an,
                             const WithdrawalStream& k);

struct Replicability {
    bool replicable = false;
    WithdrawalStream residual;
    double max_dk = 0.0;
};
Replicability replicable(const EventTree& tree, const TreeAnalysis& an, const Claim& claim);

// Second-FTAP test: every one-step deflator set is a singleton.
bool is_complete(const EventTree& tree, const TreeAnalysis& an);

// The supermartingale-numeraire recipe: per-node exact log-optimal
// one-step solves glued multiplicatively across epochs.
struct NumeraireTree {
    NodeValues x_star;
    std::vector<Vec> theta_star;   // holdings per node (not per unit wealth)
    NodeValues epoch_factor;       // within-epoch factor at each node
    std::vector<Vec> one_step_weight;  // per-unit-wealth holdings
};
NumeraireTree supermartingale_numeraire_tree(const EventTree& tree, const TreeAnalysis& an);

struct Na1Report {
    bool viable = true;
    int node = -1;
    Vec certificate;  // one-step strategy with payoff >= 0, > 0 somewhere
};
Na1Report na1_probe(const EventTree& tree, const TreeAnalysis& an);

// Exact one-step log-optimal solve: maximize sum p_c log(1 + w' d_c).
// Exposed for tests; d columns must admit no arbitrage.
Vec log_optimal_weights(const Mat& d, const Vec& p);

// Tiny dense LP by basis enumeration: maximize c'x subject to Gx <= h.
// The feasible set must have a vertex; used by the node solvers.
struct LpResult {
    bool feasible = false;
    double value = 0.0;
    Vec x;
};
LpResult tiny_lp_max(const Vec& c, const Mat& g, const Vec& h);

}  // namespace pwm
