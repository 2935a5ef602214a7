#include "pwm/ustate.hpp"

#include <algorithm>
#include <cmath>

namespace pwm {

TimeGrid::TimeGrid(std::vector<double> times) : t_(std::move(times)) {
    if (t_.empty()) throw InputError("time grid is empty");
    if (t_.front() != 0.0) throw InputError("time grid must start at 0");
    for (std::size_t j = 1; j < t_.size(); ++j) {
        if (!(t_[j] > t_[j - 1])) throw InputError("time grid must be strictly increasing");
    }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
    if (!(horizon > 0.0) || steps == 0) throw InputError("bad uniform grid spec");
    std::vector<double> t(steps + 1);
    for (std::size_t j = 0; j <= steps; ++j) t[j] = horizon * static_cast<double>(j) / steps;
    t[steps] = horizon;
    return TimeGrid(std::move(t));
}

std::size_t TimeGrid::index_at(double time) const {
    const double eps = 1e-12 * std::max(1.0, horizon());
    std::size_t j = 0;
    while (j + 1 < t_.size() && t_[j + 1] <= time + eps) ++j;
    return j;
}

UValue UValue::vec(std::vector<double> v) {
    if (v.empty()) throw InputError("UValue vector must have dimension >= 1");
    UValue u;
    u.vec_ = std::move(v);
    return u;
}

UValue UValue::zeros(std::size_t n) { return vec(std::vector<double>(n, 0.0)); }

std::size_t UValue::dim() const {
    if (is_identity()) throw InputError("dim() is undefined on the identity element");
    return vec_->size();
}

const std::vector<double>& UValue::values() const {
    if (is_identity()) throw InputError("identity element has no components");
    return *vec_;
}

UValue UValue::operator+(const UValue& other) const {
    if (is_identity()) return other;
    if (other.is_identity()) return *this;
    if (dim() != other.dim()) throw InputError("UValue addition requires equal dimensions");
    std::vector<double> out(*vec_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*other.vec_)[i];
    return vec(std::move(out));
}

UValue UValue::scaled(double s) const {
    if (is_identity()) return identity();
    std::vector<double> out(*vec_);
    for (double& v : out) v *= s;
    return vec(std::move(out));
}

bool UValue::operator==(const UValue& other) const {
    if (is_identity() || other.is_identity()) return is_identity() == other.is_identity();
    return *vec_ == *other.vec_;
}

std::size_t ResetSequence::epoch_of_step(std::size_t j) const {
    // Last reset index <= j starts the owning epoch.
    auto it = std::upper_bound(idx.begin(), idx.end(), j);
    return static_cast<std::size_t>(it - idx.begin());
}

void ResetSequence::validate() const {
    if (idx.empty() || idx.front() != 0) throw StructureError("reset sequence must start at 0");
    for (std::size_t k = 1; k < idx.size(); ++k) {
        if (idx[k] < idx[k - 1]) throw StructureError("reset sequence must be nondecreasing");
    }
}

UPath::UPath(TimeGrid grid, std::vector<UValue> values)
    : grid_(std::move(grid)), value_(std::move(values)) {
    if (value_.size() != grid_.points()) throw StructureError("path/grid size mismatch");
    if (value_.empty() || value_.front().is_identity()) {
        throw StructureError("path must start with a concrete value");
    }
}

const UValue& UPath::post(std::size_t j) const {
    for (const auto& [idx, v] : post_) {
        if (idx == j) return v;
    }
    return value_[j];
}

bool UPath::has_post(std::size_t j) const {
    if (j == 0) return true;  // tau_0 = 0 always carries its slot
    for (const auto& [idx, v] : post_) {
        if (idx == j) return true;
    }
    return false;
}

void UPath::set_post(std::size_t j, UValue v) {
    for (auto& [idx, slot] : post_) {
        if (idx == j) {
            slot = std::move(v);
            return;
        }
    }
    post_.emplace_back(j, std::move(v));
    std::sort(post_.begin(), post_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
}

ResetSequence minimal_reset_sequence(const UPath& x) {
    ResetSequence r;
    r.idx.push_back(0);
    for (std::size_t j = 1; j < x.points(); ++j) {
        if (x.has_post(j) && !(x.post(j) == x.at(j))) r.idx.push_back(j);
    }
    return r;
}

std::vector<std::size_t> post_reset_dims(const UPath& x, const ResetSequence& resets) {
    std::vector<std::size_t> dims;
    dims.reserve(resets.idx.size());
    for (std::size_t j : resets.idx) dims.push_back(x.dim_post(j));
    return dims;
}

bool omega_membership(const ResetSequence& resets, const std::vector<std::size_t>& post_dims,
                      std::size_t k, std::size_t n) {
    if (k == 0 || n == 0) throw InputError("dissection key requires k >= 1, n >= 1");
    if (!resets.tau_finite(k - 1)) return false;
    return post_dims[k - 1] == n;
}

bool omega_membership(const UPath& x, const ResetSequence& resets, std::size_t k, std::size_t n) {
    return omega_membership(resets, post_reset_dims(x, resets), k, n);
}

namespace {

// Checks that the stored values over epoch k match the post-reset
// dimension n; the price of the dual-slot convention.
void check_epoch_dims(const UPath& x, const ResetSequence& resets, std::size_t k, std::size_t n,
                      std::size_t grid_steps) {
    const std::size_t lo = resets.first_step(k);
    const std::size_t hi = resets.last_step(k, grid_steps);
    if (x.dim_post(lo) != n) throw StructureError("post-reset vector dimension mismatch");
    for (std::size_t j = lo + 1; j <= hi; ++j) {
        if (x.dim_at(j) != n) {
            throw StructureError("dimension changed inside epoch " + std::to_string(k) +
                                 " at grid index " + std::to_string(j));
        }
    }
}

}  // namespace

std::map<DissectionKey, FixedDimPath> dissect_integrator(const UPath& x,
                                                         const ResetSequence& resets) {
    resets.validate();
    const std::size_t pts = x.points();
    const std::size_t steps = pts - 1;
    std::map<DissectionKey, FixedDimPath> out;
    for (std::size_t k = 1; k <= resets.epochs(); ++k) {
        const std::size_t lo = resets.first_step(k);
        const std::size_t hi = resets.last_step(k, steps);
        const std::size_t n = x.dim_post(lo);
        if (hi > lo) check_epoch_dims(x, resets, k, n, steps);
        FixedDimPath piece(n, pts);
        const std::vector<double>& base = x.post(lo).values();
        std::vector<double> row(n, 0.0);
        for (std::size_t j = lo + 1; j <= hi; ++j) {
            const std::vector<double>& v = x.at(j).values();
            for (std::size_t i = 0; i < n; ++i) row[i] = v[i] - base[i];
            piece.set_row(j, row);
        }
        // Frozen at the epoch-final value after tau_k.
        for (std::size_t j = hi + 1; j < pts; ++j) piece.set_row(j, piece.row(hi));
        out.emplace(DissectionKey{k, n}, std::move(piece));
    }
    return out;
}

std::map<DissectionKey, FixedDimPath> dissect_integrand(const UPath& h,
                                                        const ResetSequence& resets) {
    resets.validate();
    const std::size_t pts = h.points();
    const std::size_t steps = pts - 1;
    std::map<DissectionKey, FixedDimPath> out;
    for (std::size_t k = 1; k <= resets.epochs(); ++k) {
        const std::size_t lo = resets.first_step(k);
        const std::size_t hi = resets.last_step(k, steps);
        const std::size_t n = h.dim_post(lo);
        if (hi > lo) check_epoch_dims(h, resets, k, n, steps);
        FixedDimPath piece(n, pts);
        for (std::size_t j = lo; j < hi; ++j) {
            // Value in force on step (t_j, t_{j+1}]: post slot at the reset,
            // plain value inside the epoch.
            piece.set_row(j, (j == lo ? h.post(lo) : h.at(j)).values());
        }
        out.emplace(DissectionKey{k, n}, std::move(piece));
    }
    return out;
}

namespace {

void check_integrand_dims(const UPath& h, const UPath& x, const ResetSequence& resets) {
    if (h.points() != x.points()) throw StructureError("integrand/integrator grid mismatch");
    const std::size_t steps = x.points() - 1;
    for (std::size_t k = 1; k <= resets.epochs(); ++k) {
        const std::size_t lo = resets.first_step(k);
        if (h.dim_post(lo) != x.dim_post(lo)) {
            throw StructureError("dim H != dim X at epoch " + std::to_string(k));
        }
        (void)steps;
    }
}

}  // namespace

std::vector<double> piecewise_integral(const UPath& h, const UPath& x,
                                       const ResetSequence& resets) {
    resets.validate();
    check_integrand_dims(h, x, resets);
    const std::size_t pts = x.points();
    std::vector<double> out(pts, 0.0);

    // Atom at t = 0: H_0' X_0 (zero for class-L0 integrands).
    double acc = 0.0;
    const UValue& h0 = h.at(0);
    if (!h0.is_identity() && !x.at(0).is_identity()) {
        if (h0.dim() != x.at(0).dim()) throw StructureError("H_0 / X_0 dimension mismatch");
        for (std::size_t i = 0; i < h0.dim(); ++i) acc += h0[i] * x.at(0)[i];
    }
    out[0] = acc;

    const std::size_t steps = pts - 1;
    for (std::size_t j = 0; j < steps; ++j) {
        const UValue& hv = h.post(j);  // value in force on (t_j, t_{j+1}]
        const UValue& lo = x.post(j);
        const UValue& hi = x.at(j + 1);
        if (hv.dim() != lo.dim() || lo.dim() != hi.dim()) {
            throw StructureError("dimension mismatch on step " + std::to_string(j));
        }
        for (std::size_t i = 0; i < hv.dim(); ++i) acc += hv[i] * (hi[i] - lo[i]);
        out[j + 1] = acc;
    }
    return out;
}

std::vector<double> piecewise_integral_dissected(const UPath& h, const UPath& x,
                                                 const ResetSequence& resets) {
    check_integrand_dims(h, x, resets);
    auto hd = dissect_integrand(h, resets);
    auto xd = dissect_integrator(x, resets);
    const std::size_t pts = x.points();
    double init = 0.0;
    if (!h.at(0).is_identity()) {
        for (std::size_t i = 0; i < h.at(0).dim(); ++i) init += h.at(0)[i] * x.at(0)[i];
    }
    std::vector<double> out(pts, init);
    for (const auto& [key, hp] : hd) {
        const FixedDimPath& xp = xd.at(key);
        double acc = 0.0;
        for (std::size_t j = 0; j + 1 < pts; ++j) {
            for (std::size_t i = 0; i < key.n; ++i) {
                acc += hp.at(j, i) * (xp.at(j + 1, i) - xp.at(j, i));
            }
            out[j + 1] += acc;
        }
    }
    return out;
}

FixedDimPath::FixedDimPath(std::size_t dim, std::size_t points)
    : dim_(dim), points_(points), data_(dim * points, 0.0) {}

void FixedDimPath::set_row(std::size_t j, std::span<const double> v) {
    if (v.size() != dim_) throw StructureError("row dimension mismatch");
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(j * dim_));
}

}  // namespace pwm
