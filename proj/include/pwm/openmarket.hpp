#pragma once

#include "pwm/numeraire.hpp"

namespace pwm {

// k-th largest component (k is 1-based); ties go lexicographically to the
// smaller index. Returned index is 0-based.
struct RankedValue {
    double value = 0.0;
    std::size_t index = 0;
};
RankedValue ranked_value(std::span<const double> v, std::size_t k);

// u[i] = 1-based rank of component i under the same tie rule.
std::vector<std::size_t> rank_of(std::span<const double> v);

// Predictable rank path: ranks[j] applies to step (t_j, t_{j+1}] and is
// computed from the prices in force at t_j.
using RankPath = std::vector<std::vector<std::size_t>>;
RankPath rank_process(const UPath& s, const ResetSequence& resets);

// Number of steps at which the rank permutation changes.
std::size_t rank_turnover(const RankPath& ranks);

// Censored return process: d~R_i = 1{u_i <= m} dR_i per dissection.
UPath censor_returns(const UPath& r, const RankPath& ranks, std::size_t m);

// Censored local rates: ~alpha = D alpha, ~c = D c D with
// D = diag(1{u_i <= m}).
RatesPath censored_rates(const RatesPath& rates, const RankPath& ranks, std::size_t m);

// Growth-optimal weights of the top-m open market at one step:
// rho = (~c)^dagger ~alpha. Support is automatically inside the top-m set.
NumeraireStep top_m_numeraire(const Vec& alpha_censored, const Mat& c_censored);

// Whether pi never touches an asset ranked below m; reports the first
// violating (step, asset) otherwise.
struct TopMCheck {
    bool ok = true;
    std::size_t step = 0;
    std::size_t asset = 0;
};
TopMCheck is_top_m_portfolio(const Portfolio& pi, const RankPath& ranks, std::size_t m);

// Portfolio assigning rank_weights[r-1] to the asset of rank r (r <= m);
// assets ranked below m get weight zero.
Portfolio make_rank_portfolio(const UPath& s, const ResetSequence& resets,
                              std::vector<double> rank_weights, std::size_t m);

// Glues the censored one-step solutions into the top-m numeraire portfolio.
Portfolio assemble_top_m_numeraire(const UPath& s, const ResetSequence& resets,
                                   const RatesPath& rates, std::size_t m);

// E[X_pi(T)/X_rho(T)] <= 1 + z SE over top-m candidates, with rho the
// top-m numeraire. Candidates are rank-weight vectors.
BatteryReport top_m_supermartingale_battery(const Ensemble& ens, std::size_t m,
                                            const std::vector<std::pair<std::string, std::vector<double>>>& candidates,
                                            const std::vector<double>& checkpoints, double z = 3.0);

}  // namespace pwm
