#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pwm/linalg.hpp"
#include "pwm/ustate.hpp"

namespace pwm {

enum class ClockMode { calendar, paper };
enum class Scheme { log_euler, euler };
enum class Exec { serial, parallel };

// Drift/covariance rate generators for the continuous-model epochs. The
// model carries parameters up to max_dim assets; an epoch of dimension n
// uses the leading n (and the leading n x n covariance block).
struct EpochDynamics {
    enum class Kind { constant, gbm, mean_revert };
    Kind kind = Kind::gbm;
    std::vector<double> drift;  // per-asset return drift rate
    Mat cov;                    // max_dim x max_dim covariance rate, PSD
    std::vector<double> kappa;  // mean_revert: a_i = kappa_i (theta_i - log s_i)
    std::vector<double> theta;

    std::size_t max_dim() const { return drift.size(); }
    void validate() const;
    // Local return rate a and covariance rate v for the leading n assets.
    void rates_at(double t, std::span<const double> s, std::size_t n, Vec& a, Mat& v) const;
};

// Law of dimensional events. Random events are drawn per grid step (at
// most one per step); scheduled events fire at fixed grid times.
struct DimensionalEventGenerator {
    enum class Kind { none, entry, exit, split, merge };
    struct Scheduled {
        double time = 0.0;
        Kind kind = Kind::entry;
    };

    double p_entry = 0.0;
    double p_exit = 0.0;
    double p_split = 0.0;
    double p_merge = 0.0;
    std::vector<Scheduled> scheduled;
    std::size_t max_dim = 0;   // 0: no cap beyond dynamics.max_dim()
    double ipo_price = 1.0;    // post-entry price law: lognormal around ipo_price
    double ipo_sigma = 0.0;    //   with log-std ipo_sigma (0 = deterministic)

    bool any_random() const { return p_entry + p_exit + p_split + p_merge > 0.0; }
};

struct MarketModel {
    std::vector<double> initial_prices;
    EpochDynamics dynamics;
    DimensionalEventGenerator events;
    Scheme scheme = Scheme::log_euler;
    ClockMode clock = ClockMode::calendar;

    void validate() const;
};

// Local rates per grid step: alpha (dim n_j), c (n_j x n_j) and the
// operational-clock increment dO. Steps outside an epoch's active set
// simply belong to another key; the per-key view is zero there.
struct StepRates {
    Vec alpha;
    Mat c;
    double dO = 0.0;

    bool operator==(const StepRates& o) const {
        return dO == o.dO && alpha.size() == o.alpha.size() && alpha == o.alpha && c == o.c;
    }
};

// Step rates with consecutive runs of identical entries stored once
// (constant-rate epochs and censored rates collapse to a handful of
// distinct entries).
class RatesPath {
public:
    void push(StepRates r) {
        if (pool_.empty() || !(pool_.back() == r)) pool_.push_back(std::move(r));
        idx_.push_back(static_cast<std::uint32_t>(pool_.size() - 1));
    }
    // Repeats the previous step's entry without constructing it again.
    void push_repeat() { idx_.push_back(idx_.back()); }
    const StepRates& at(std::size_t j) const { return pool_[idx_[j]]; }
    std::size_t steps() const { return idx_.size(); }

private:
    std::vector<StepRates> pool_;
    std::vector<std::uint32_t> idx_;
};

struct SimulatedPath {
    UPath prices;
    ResetSequence resets;
    RatesPath rates;  // model rates along the path, under the model's clock
};

struct Ensemble {
    TimeGrid grid;
    std::vector<SimulatedPath> paths;
    std::uint64_t seed = 0;
};

// Simulates n_paths independent price paths. Each path derives its own
// generator from (seed, path_id), so serial and parallel execution
// produce identical ensembles.
Ensemble simulate_paths(const MarketModel& model, const TimeGrid& grid, std::size_t n_paths,
                        std::uint64_t seed, Exec exec = Exec::parallel);
SimulatedPath simulate_one_path(const MarketModel& model, const TimeGrid& grid,
                                std::uint64_t seed, std::uint64_t path_id);

// Cumulative return process: dR^{k,n}_i = dS^{k,n}_i / S_i(left), zero-based
// at each reset. Requires strictly positive prices on active sets.
UPath return_process(const UPath& s, const ResetSequence& resets);

// Per-step decomposition dR = dA + dM with the covariation increments dC,
// either from model rates (model mode) or realized products (realized mode).
struct ReturnDecomposition {
    enum class CovMode { model, realized };
    CovMode cov_mode = CovMode::model;
    std::vector<Vec> dA;
    std::vector<Vec> dM;
    std::vector<Mat> dC;
    std::vector<double> dt;

    // Cumulative A/M paths of one dissection, zero-based, frozen after tau_k.
    FixedDimPath cumulative(const std::vector<Vec>& inc, const ResetSequence& resets,
                            std::size_t k) const;
};

ReturnDecomposition decompose_returns(const UPath& r, const ResetSequence& resets,
                                      const RatesPath& rates,
                                      ReturnDecomposition::CovMode mode);

// Realized covariation path sum_j dP dQ of two scalar grid paths.
std::vector<double> covariation(std::span<const double> p, std::span<const double> q);

// Local rates from a decomposition under the chosen operational clock.
// calendar: dO = dt; activity ("paper") clock: dO = sum_i |dA_i| + dC_ii, 0/0 := 0.
RatesPath local_rates(const ReturnDecomposition& decomp, ClockMode clock);

// Integral of |nu' alpha| + nu' c nu against dO up to horizon T, per
// dissection. Finite on any finite grid; the flag reports NaN/inf rates.
struct IntegrabilityReport {
    std::map<DissectionKey, double> value;
    bool finite = true;
};
IntegrabilityReport integrability_report(const Vec& nu, const RatesPath& rates,
                                         const ResetSequence& resets, const TimeGrid& grid,
                                         double horizon);

}  // namespace pwm
