#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "pwm/common.hpp"

namespace pwm {

// Shared discrete time grid t_0 = 0 < t_1 < ... < t_J. Step j is the
// interval (t_j, t_{j+1}].
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> times);
    static TimeGrid uniform(double horizon, std::size_t steps);

    std::size_t points() const { return t_.size(); }
    std::size_t steps() const { return t_.empty() ? 0 : t_.size() - 1; }
    double time(std::size_t j) const { return t_[j]; }
    double dt(std::size_t j) const { return t_[j + 1] - t_[j]; }
    double horizon() const { return t_.back(); }
    const std::vector<double>& times() const { return t_; }
    // Largest grid index j with t_j <= time (plus slack for roundoff).
    std::size_t index_at(double time) const;

private:
    std::vector<double> t_;
};

// A point of the union-of-R^n state space: either the additive identity
// element or a finite real vector.
class UValue {
public:
    UValue() = default;  // identity
    static UValue identity() { return UValue(); }
    static UValue vec(std::vector<double> v);
    static UValue zeros(std::size_t n);

    bool is_identity() const { return !vec_.has_value(); }
    std::size_t dim() const;
    const std::vector<double>& values() const;
    double operator[](std::size_t i) const { return values()[i]; }

    // identity + x = x; two vectors must have equal dimension.
    UValue operator+(const UValue& other) const;
    // identity * s = identity.
    UValue scaled(double s) const;
    bool operator==(const UValue& other) const;

private:
    std::optional<std::vector<double>> vec_;
};

// Reset times as grid indices: tau_0 = 0 <= tau_1 <= ...; only the finite
// ones are stored, any further resets are at +infinity. Epoch k (1-based)
// is the interval (tau_{k-1}, tau_k].
struct ResetSequence {
    std::vector<std::size_t> idx;  // idx[0] == 0 always

    std::size_t epochs() const { return idx.size(); }
    bool tau_finite(std::size_t k) const { return k < idx.size(); }
    // First/last step index of epoch k; empty epochs give first >= last.
    std::size_t first_step(std::size_t k) const { return idx[k - 1]; }
    std::size_t last_step(std::size_t k, std::size_t grid_steps) const {
        return tau_finite(k) ? idx[k] : grid_steps;
    }
    // 1-based epoch owning step j (the interval (t_j, t_{j+1}]).
    std::size_t epoch_of_step(std::size_t j) const;

    void validate() const;
};

// Dissection label: epoch index k >= 1 together with the epoch dimension n.
struct DissectionKey {
    std::size_t k = 0;
    std::size_t n = 0;
    auto operator<=>(const DissectionKey&) const = default;
};

// A path in the union-of-R^n space on a grid. Every grid point stores the
// arrival value X(t_j); reset points additionally store the post-reset
// value X(t_j+), whose dimension rules the following epoch. Index 0 always
// carries a post slot (tau_0 = 0).
class UPath {
public:
    UPath() = default;
    UPath(TimeGrid grid, std::vector<UValue> values);

    const TimeGrid& grid() const { return grid_; }
    std::size_t points() const { return value_.size(); }
    const UValue& at(std::size_t j) const { return value_[j]; }
    // X(t_j+): the post slot if present, otherwise X(t_j).
    const UValue& post(std::size_t j) const;
    bool has_post(std::size_t j) const;
    void set_value(std::size_t j, UValue v) { value_[j] = std::move(v); }
    void set_post(std::size_t j, UValue v);

    std::size_t dim_at(std::size_t j) const { return value_[j].dim(); }
    std::size_t dim_post(std::size_t j) const { return post(j).dim(); }

private:
    TimeGrid grid_;
    std::vector<UValue> value_;
    // post slots exist only at resets; kept sparse and sorted by index
    std::vector<std::pair<std::size_t, UValue>> post_;
};

// A fixed-dimension R^n path on the grid, flat outside its active window.
class FixedDimPath {
public:
    FixedDimPath() = default;
    FixedDimPath(std::size_t dim, std::size_t points);

    std::size_t dim() const { return dim_; }
    std::size_t points() const { return points_; }
    double at(std::size_t j, std::size_t i) const { return data_[j * dim_ + i]; }
    double& at(std::size_t j, std::size_t i) { return data_[j * dim_ + i]; }
    std::span<const double> row(std::size_t j) const {
        return {data_.data() + j * dim_, dim_};
    }
    void set_row(std::size_t j, std::span<const double> v);

private:
    std::size_t dim_ = 0;
    std::size_t points_ = 0;
    std::vector<double> data_;
};

// Fewest-resets sequence of a stored path: grid indices where the post
// slot differs from the arrival value (a dimension change, or a flagged
// same-dimension discontinuity), preceded by tau_0 = 0.
ResetSequence minimal_reset_sequence(const UPath& x);

// Post-reset dimensions N(tau_{k-1}+) per stored reset.
std::vector<std::size_t> post_reset_dims(const UPath& x, const ResetSequence& resets);

// Membership of the path in Omega^{k,n}: tau_{k-1} finite and
// N(tau_{k-1}+) = n.
bool omega_membership(const ResetSequence& resets, const std::vector<std::size_t>& post_dims,
                      std::size_t k, std::size_t n);
bool omega_membership(const UPath& x, const ResetSequence& resets, std::size_t k, std::size_t n);

// Integrator dissection X^{k,n}: starts at 0^(n), accumulates the
// increments of X on (tau_{k-1}, tau_k] measured from X(tau_{k-1}+), flat
// elsewhere. One entry per epoch the path visits.
std::map<DissectionKey, FixedDimPath> dissect_integrator(const UPath& x,
                                                         const ResetSequence& resets);

// Integrand dissection H^{(k,n)}, stored left-sampled: the row at grid
// index j is the value in force on step (t_j, t_{j+1}] when that step lies
// in epoch (k,n), and zero otherwise. At a reset the post slot supplies
// the first value of the new epoch.
std::map<DissectionKey, FixedDimPath> dissect_integrand(const UPath& h,
                                                        const ResetSequence& resets);

// The piecewise stochastic integral (H . X)(t_j) on the grid:
//   H_0' X_0 + sum over epochs of sum_j H^{(k,n)}(t_j)' dX^{k,n}(t_{j+1}).
// Within a step the increment never crosses a reset: it runs from
// X(t_j+) to the arrival value X(t_{j+1}).
std::vector<double> piecewise_integral(const UPath& h, const UPath& x,
                                       const ResetSequence& resets);

// Same integral assembled from explicit dissections; a second route kept
// for cross-checking the direct evaluation.
std::vector<double> piecewise_integral_dissected(const UPath& h, const UPath& x,
                                                 const ResetSequence& resets);

}  // namespace pwm
