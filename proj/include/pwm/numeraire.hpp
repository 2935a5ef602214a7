#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pwm/portfolio.hpp"

namespace pwm {

// Growth accounting keeps infinity as a tag, never a floating overflow.
struct GrowthValue {
    double value = 0.0;
    bool infinite = false;
};

// One-step numeraire solve: rho = c^dagger alpha, the range test, the
// maximal growth rate, and the arbitrage direction when alpha leaves
// range(c) (normalized so that c phi = 0 and phi' alpha = 1).
struct NumeraireStep {
    Vec rho;
    bool in_range = true;
    double range_residual = 0.0;
    GrowthValue g;
    Vec phi;  // set only when !in_range
};
NumeraireStep numeraire_dissection(const Vec& alpha, const Mat& c);

class NonViableError : public Error {
public:
    NonViableError(DissectionKey key, std::size_t step, Vec phi)
        : Error("market non-viable at epoch " + std::to_string(key.k) + " (dim " +
                std::to_string(key.n) + "), step " + std::to_string(step)),
          key(key),
          step(step),
          phi(std::move(phi)) {}
    DissectionKey key;
    std::size_t step;
    Vec phi;
};

// Glues c^dagger alpha stepwise into a portfolio; throws NonViableError
// with the (k, n, step) witness and phi direction on any out-of-range step.
Portfolio assemble_numeraire(const UPath& s, const ResetSequence& resets, const RatesPath& rates);

struct StructuralReport {
    struct StepEntry {
        std::size_t step = 0;
        DissectionKey key;
        double residual = 0.0;
        bool in_range = true;
        GrowthValue g;
    };
    std::vector<StepEntry> steps;
    std::map<DissectionKey, double> integrated_residual;  // sup_t max_i |A_i - C_{i rho}|
    double max_step_residual = 0.0;
    GrowthValue total_growth;  // G at the horizon
    bool viable = true;
    bool numeraire_candidate = false;
};

// Residuals of the structural condition c rho = alpha, stepwise and in
// integrated form; verdict "numeraire candidate" iff all residuals <= tol.
StructuralReport structural_residual(const RatesPath& rates, const Portfolio& rho,
                                     const ResetSequence& resets, double tol = 1e-8);

// Local growth rate gamma of a portfolio and the maximal rate g, per step.
std::vector<double> growth_rate_path(const Portfolio& pi, const RatesPath& rates);
std::vector<GrowthValue> max_growth_path(const RatesPath& rates);
GrowthValue cumulative_growth(const RatesPath& rates, const TimeGrid& grid, double horizon);

// A positive deflator path: 1/X_rho, or E(L)/X_rho for an orthogonal
// driver L generated from noise independent of the market marks.
struct DeflatorPath {
    std::vector<double> y;
    std::string tag;
};
struct OrthogonalDriverSpec {
    double vol = 0.5;
    std::uint64_t seed = 7;
};
DeflatorPath deflator(const WealthPath& x_rho, const TimeGrid& grid,
                      const std::optional<OrthogonalDriverSpec>& driver,
                      std::uint64_t path_id = 0);

// Monte Carlo batteries over a simulated ensemble. Candidates are named
// weight rules; the numeraire is assembled per path from the model rates.
struct BatteryRow {
    std::string candidate;
    double t = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double bound = 0.0;  // pass iff estimate <= bound
    bool pass = true;
};
struct BatteryReport {
    std::vector<BatteryRow> rows;
    bool pass = true;
};

// Candidates are built per path: weight rules for ordinary portfolios,
// or the assembled numeraire itself.
using PortfolioBuilder = std::function<Portfolio(const SimulatedPath&)>;
using NamedRule = std::pair<std::string, PortfolioBuilder>;

PortfolioBuilder rule_builder(WeightFn fn);
PortfolioBuilder numeraire_builder();

// E[X_pi(T)/X_rho(T)] <= 1 + z SE for each candidate and checkpoint.
BatteryReport supermartingale_ratio_battery(const Ensemble& ens,
                                            const std::vector<NamedRule>& candidates,
                                            const std::vector<double>& checkpoints,
                                            double z = 3.0);

// E[log X_pi(T)/X_rho(T)] <= z SE for each candidate and checkpoint.
BatteryReport log_optimality_battery(const Ensemble& ens, const std::vector<NamedRule>& candidates,
                                     const std::vector<double>& checkpoints, double z = 3.0);

// E[Y(T) X_pi(T)] within z SE of 1 for deflators built from an orthogonal
// driver; |estimate - 1| <= z SE.
BatteryReport deflator_martingale_battery(const Ensemble& ens,
                                          const std::vector<NamedRule>& candidates,
                                          const std::vector<double>& checkpoints,
                                          const OrthogonalDriverSpec& driver, double z = 3.0);

// Sup-norm gap between the numeraire weights computed under the calendar
// and the activity ("paper") operational clocks, over the ensemble.
double clock_invariance_gap(const Ensemble& ens);

}  // namespace pwm
