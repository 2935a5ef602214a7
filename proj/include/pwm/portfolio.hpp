#pragma once

#include <functional>
#include <optional>

#include "pwm/market.hpp"

namespace pwm {

// Predictable weight process: value(0) = 0^(N0) (the class-L0 record),
// post slots carry the weights in force on the first step of each epoch,
// plain values those inside epochs.
struct Portfolio {
    UPath weights;
};

// Share-count process with the same storage convention, plus initial capital.
struct Strategy {
    UPath shares;
    double initial_capital = 1.0;
};

enum class WealthVariant { multiplicative, exponential };

struct WealthPath {
    std::vector<double> x;
    std::optional<std::size_t> first_nonpos;  // first grid index with x <= 0

    bool admissible() const;          // x >= 0 everywhere
    bool strictly_admissible() const { return !first_nonpos.has_value(); }
    double terminal() const { return x.back(); }
};

// Weight rule evaluated at the left endpoint of each step; receives the
// step index, its time, the epoch dimension, and the prices in force.
using WeightFn = std::function<std::vector<double>(std::size_t step, double t, std::size_t n,
                                                   std::span<const double> s)>;

Portfolio make_portfolio(const UPath& s, const ResetSequence& resets, const WeightFn& fn);

// Canned weight rules.
WeightFn money_market_rule();
WeightFn constant_rule(std::vector<double> weights);  // leading n entries per epoch
WeightFn equal_weight_rule(double scale);
WeightFn single_asset_rule(std::size_t asset);  // money market when asset >= n

// Discrete stochastic exponential of the portfolio return:
// multiplicative X(t_{j+1}) = X(t_j)(1 + dR_pi), or the continuous-model
// variant exp(dR_pi - dR_pi^2/2). A factor <= 0 is flagged, not clipped.
WealthPath wealth_of_portfolio(const Portfolio& pi, const UPath& r, const ResetSequence& resets,
                               WealthVariant variant = WealthVariant::multiplicative);

// X = x + theta . S through the piecewise integral.
WealthPath wealth_of_strategy(double x, const Strategy& theta, const UPath& s,
                              const ResetSequence& resets);

// theta_i = X_pi pi_i / S_i on active sets; wealth round-trips exactly.
Strategy strategy_from_portfolio(const Portfolio& pi, const UPath& s, const UPath& r,
                                 const ResetSequence& resets);

// pi_i = S_i theta_i / X; requires strictly positive wealth.
Portfolio portfolio_from_strategy(double x, const Strategy& theta, const UPath& s,
                                  const ResetSequence& resets);

// X_pi / X_rho together with the stochastic-exponential representation of
// the relative return; the gap between the two is a discretization
// diagnostic, expected O(dt).
struct RelativeWealth {
    std::vector<double> ratio;
    std::vector<double> exponential_form;
    double discrepancy = 0.0;
};
RelativeWealth relative_wealth(const Portfolio& pi, const Portfolio& rho, const UPath& r,
                               const ResetSequence& resets);

// Integrand eta of the deflated-wealth representation
//   X/X_rho = x + sum int eta' dM
// and the sup-norm residual of that identity on the grid. rho must satisfy
// the structural condition of the supplied rates.
struct DeflatedRatio {
    std::vector<Vec> eta;  // per step
    std::vector<double> lhs;
    std::vector<double> rhs;
    double residual = 0.0;
};
DeflatedRatio deflated_ratio_representation(double x, const Strategy& theta, const Portfolio& rho,
                                            const UPath& s, const UPath& r,
                                            const ResetSequence& resets,
                                            const ReturnDecomposition& decomp,
                                            const RatesPath& rates,
                                            WealthVariant variant = WealthVariant::multiplicative,
                                            double structural_tol = 1e-8);

}  // namespace pwm
