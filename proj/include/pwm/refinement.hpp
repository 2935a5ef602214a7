#pragma once

#include "pwm/mcstats.hpp"
#include "pwm/numeraire.hpp"

namespace pwm {

// dt-halving study on a continuous-model scenario. All grid levels share
// one set of Brownian increments (coarse noise is aggregated fine noise),
// so the reported decay is the discretization error alone.
struct RefinementSpec {
    MarketModel model;
    double horizon = 1.0;
    std::vector<std::size_t> step_counts;  // halving sequence, coarse to fine
    std::size_t n_paths = 64;
    std::uint64_t seed = 1;
};

struct RefinementReport {
    std::vector<RefinementDiagnostic> diagnostics;
    bool pass = true;
};

// Diagnostics: the relative-wealth exponential representation gap, the
// deflated-ratio representation residual (money-market and equal-weight
// strategies), and the multiplicative-vs-exponential wealth gap.
RefinementReport refinement_study(const RefinementSpec& spec);

// One coupled path at a given level; exposed for the convergence tests.
SimulatedPath simulate_coupled_path(const MarketModel& model, double horizon,
                                    std::size_t steps, std::size_t finest_steps,
                                    const std::vector<double>& xi_finest, std::size_t max_dim);

}  // namespace pwm
