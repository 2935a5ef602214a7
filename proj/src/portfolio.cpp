#include "pwm/portfolio.hpp"

#include <algorithm>
#include <cmath>

namespace pwm {

bool WealthPath::admissible() const {
    for (double v : x) {
        if (v < 0.0) return false;
    }
    return true;
}

namespace {

// Weight vector in force on step (t_j, t_{j+1}].
const UValue& step_value(const UPath& p, std::size_t j) { return p.post(j); }

std::vector<bool> reset_mask(const ResetSequence& resets, std::size_t pts) {
    std::vector<bool> mask(pts, false);
    for (std::size_t j : resets.idx) mask[j] = true;
    return mask;
}

}  // namespace

Portfolio make_portfolio(const UPath& s, const ResetSequence& resets, const WeightFn& fn) {
    resets.validate();
    const std::size_t pts = s.points();
    std::vector<UValue> values(pts);
    values[0] = UValue::zeros(s.dim_at(0));
    UPath w(s.grid(), std::move(values));
    const auto mask = reset_mask(resets, pts);
    for (std::size_t j = 0; j + 1 < pts; ++j) {
        const UValue& sv = s.post(j);
        std::vector<double> wj = fn(j, s.grid().time(j), sv.dim(), sv.values());
        if (wj.size() != sv.dim()) throw StructureError("weight rule dimension mismatch");
        if (j == 0 || mask[j]) {
            w.set_post(j, UValue::vec(std::move(wj)));
            if (j > 0) w.set_value(j, UValue::vec(fn(j, s.grid().time(j), s.dim_at(j), s.at(j).values())));
        } else {
            w.set_value(j, UValue::vec(std::move(wj)));
        }
    }
    // Final grid point: keep a record with the arrival dimension.
    if (pts > 1) {
        w.set_value(pts - 1, UValue::vec(fn(pts - 1, s.grid().time(pts - 1), s.dim_at(pts - 1),
                                            s.at(pts - 1).values())));
    }
    return Portfolio{std::move(w)};
}

WeightFn money_market_rule() {
    return [](std::size_t, double, std::size_t n, std::span<const double>) {
        return std::vector<double>(n, 0.0);
    };
}

WeightFn constant_rule(std::vector<double> weights) {
    return [w = std::move(weights)](std::size_t, double, std::size_t n, std::span<const double>) {
        if (w.size() < n) throw InputError("constant weights shorter than epoch dimension");
        return std::vector<double>(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
    };
}

WeightFn equal_weight_rule(double scale) {
    return [scale](std::size_t, double, std::size_t n, std::span<const double>) {
        return std::vector<double>(n, scale / static_cast<double>(n));
    };
}

WeightFn single_asset_rule(std::size_t asset) {
    return [asset](std::size_t, double, std::size_t n, std::span<const double>) {
        std::vector<double> w(n, 0.0);
        if (asset < n) w[asset] = 1.0;
        return w;
    };
}

WealthPath wealth_of_portfolio(const Portfolio& pi, const UPath& r, const ResetSequence& resets,
                               WealthVariant variant) {
    resets.validate();
    const std::size_t pts = r.points();
    WealthPath out;
    out.x.assign(pts, 1.0);
    double x = 1.0;
    for (std::size_t j = 0; j + 1 < pts; ++j) {
        const UValue& w = step_value(pi.weights, j);
        const UValue& lo = r.post(j);
        const UValue& hi = r.at(j + 1);
        const std::size_t n = lo.dim();
        if (w.dim() != n) throw StructureError("portfolio/return dimension mismatch");
        double dr = 0.0;
        for (std::size_t i = 0; i < n; ++i) dr += w[i] * (hi[i] - lo[i]);
        if (variant == WealthVariant::multiplicative) {
            const double factor = 1.0 + dr;
            if (factor <= 0.0 && !out.first_nonpos.has_value()) out.first_nonpos = j + 1;
            x *= factor;
        } else {
            x *= std::exp(dr - 0.5 * dr * dr);
        }
        out.x[j + 1] = x;
    }
    return out;
}

WealthPath wealth_of_strategy(double x, const Strategy& theta, const UPath& s,
                              const ResetSequence& resets) {
    std::vector<double> integral = piecewise_integral(theta.shares, s, resets);
    WealthPath out;
    out.x.resize(integral.size());
    for (std::size_t j = 0; j < integral.size(); ++j) {
        out.x[j] = x + integral[j];
        if (out.x[j] <= 0.0 && !out.first_nonpos.has_value()) out.first_nonpos = j;
    }
    return out;
}

Strategy strategy_from_portfolio(const Portfolio& pi, const UPath& s, const UPath& r,
                                 const ResetSequence& resets) {
    WealthPath xw = wealth_of_portfolio(pi, r, resets);
    const std::size_t pts = s.points();
    std::vector<UValue> values(pts);
    values[0] = UValue::zeros(s.dim_at(0));
    UPath th(s.grid(), std::move(values));
    const auto mask = reset_mask(resets, pts);

    auto convert = [&](const UValue& w, const UValue& sv, double wealth) {
        const std::size_t n = sv.dim();
        if (w.dim() != n) throw StructureError("portfolio/price dimension mismatch");
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (sv[i] == 0.0) throw InputError("zero price on active set");
            out[i] = wealth * w[i] / sv[i];
        }
        return UValue::vec(std::move(out));
    };

    for (std::size_t j = 0; j < pts; ++j) {
        if (j + 1 < pts) {
            if (j == 0 || mask[j]) {
                th.set_post(j, convert(pi.weights.post(j), s.post(j), xw.x[j]));
                if (j > 0) th.set_value(j, convert(pi.weights.at(j), s.at(j), xw.x[j]));
            } else {
                th.set_value(j, convert(pi.weights.at(j), s.at(j), xw.x[j]));
            }
        } else {
            th.set_value(j, convert(pi.weights.at(j), s.at(j), xw.x[j]));
        }
    }
    return Strategy{std::move(th), 1.0};
}

Portfolio portfolio_from_strategy(double x, const Strategy& theta, const UPath& s,
                                  const ResetSequence& resets) {
    WealthPath xw = wealth_of_strategy(x, theta, s, resets);
    if (!xw.strictly_admissible()) {
        throw InputError("strategy is not strictly admissible: wealth <= 0 at grid index " +
                         std::to_string(*xw.first_nonpos));
    }
    const std::size_t pts = s.points();
    std::vector<UValue> values(pts);
    values[0] = UValue::zeros(s.dim_at(0));
    UPath w(s.grid(), std::move(values));
    const auto mask = reset_mask(resets, pts);

    auto convert = [&](const UValue& th, const UValue& sv, double wealth) {
        const std::size_t n = sv.dim();
        if (th.dim() != n) throw StructureError("strategy/price dimension mismatch");
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = sv[i] * th[i] / wealth;
        return UValue::vec(std::move(out));
    };

    for (std::size_t j = 0; j < pts; ++j) {
        if (j + 1 < pts && (j == 0 || mask[j])) {
            w.set_post(j, convert(theta.shares.post(j), s.post(j), xw.x[j]));
            if (j > 0) w.set_value(j, convert(theta.shares.at(j), s.at(j), xw.x[j]));
        } else {
            w.set_value(j, convert(theta.shares.at(j), s.at(j), xw.x[j]));
        }
    }
    return Portfolio{std::move(w)};
}

RelativeWealth relative_wealth(const Portfolio& pi, const Portfolio& rho, const UPath& r,
                               const ResetSequence& resets) {
    WealthPath xpi = wealth_of_portfolio(pi, r, resets);
    WealthPath xrho = wealth_of_portfolio(rho, r, resets);
    const std::size_t pts = r.points();
    RelativeWealth out;
    out.ratio.resize(pts);
    out.exponential_form.resize(pts);
    for (std::size_t j = 0; j < pts; ++j) {
        if (xrho.x[j] <= 0.0) throw InputError("baseline wealth hit zero");
        out.ratio[j] = xpi.x[j] / xrho.x[j];
    }

    // Relative return of pi with respect to rho, accumulated stepwise with
    // realized covariations, then fed through exp(Z - [Z]/2).
    double z = 0.0;
    double qv = 0.0;
    out.exponential_form[0] = 1.0;
    for (std::size_t j = 0; j + 1 < pts; ++j) {
        const UValue& lo = r.post(j);
        const UValue& hi = r.at(j + 1);
        const std::size_t n = lo.dim();
        const UValue& wpi = pi.weights.post(j);
        const UValue& wrho = rho.weights.post(j);
        if (wpi.dim() != n || wrho.dim() != n) {
            throw StructureError("portfolio dimension mismatch in relative_wealth");
        }
        double drho = 0.0;
        for (std::size_t i = 0; i < n; ++i) drho += wrho[i] * (hi[i] - lo[i]);
        const double d_cov_rho_rho = drho * drho;
        const double d_r0 = d_cov_rho_rho - drho;
        double sum_pi = 0.0;
        double dz = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dri = hi[i] - lo[i];
            const double d_ci_rho = dri * drho;
            dz += wpi[i] * (d_r0 + dri - d_ci_rho);
            sum_pi += wpi[i];
        }
        dz += (1.0 - sum_pi) * d_r0;  // money-market weight times dR0
        z += dz;
        qv += dz * dz;
        out.exponential_form[j + 1] = std::exp(z - 0.5 * qv);
    }
    for (std::size_t j = 0; j < pts; ++j) {
        out.discrepancy = std::max(out.discrepancy,
                                   std::abs(out.ratio[j] - out.exponential_form[j]));
    }
    return out;
}

DeflatedRatio deflated_ratio_representation(double x, const Strategy& theta, const Portfolio& rho,
                                            const UPath& s, const UPath& r,
                                            const ResetSequence& resets,
                                            const ReturnDecomposition& decomp,
                                            const RatesPath& rates, WealthVariant variant,
                                            double structural_tol) {
    const std::size_t pts = s.points();
    // rho must satisfy the structural condition of the supplied rates.
    for (std::size_t j = 0; j + 1 < pts; ++j) {
        const StepRates& sr = rates.at(j);
        const UValue& w = rho.weights.post(j);
        if (static_cast<std::size_t>(sr.alpha.size()) != w.dim()) {
            throw StructureError("rates/baseline dimension mismatch");
        }
        Vec wr(sr.alpha.size());
        for (Eigen::Index i = 0; i < wr.size(); ++i) wr(i) = w[static_cast<std::size_t>(i)];
        const double res = (sr.c * wr - sr.alpha).norm();
        if (res > structural_tol * (1.0 + sr.alpha.norm())) {
            throw InputError("baseline violates the structural condition at step " +
                             std::to_string(j));
        }
    }

    WealthPath xw = wealth_of_strategy(x, theta, s, resets);
    WealthPath xrho = wealth_of_portfolio(rho, r, resets, variant);

    DeflatedRatio out;
    out.eta.resize(pts - 1);
    out.lhs.resize(pts);
    out.rhs.resize(pts);
    out.lhs[0] = x;
    out.rhs[0] = x;
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < pts; ++j) {
        const UValue& sv = s.post(j);
        const UValue& th = theta.shares.post(j);
        const UValue& w = rho.weights.post(j);
        const std::size_t n = sv.dim();
        Vec eta(static_cast<Eigen::Index>(n));
        Vec wr(static_cast<Eigen::Index>(n));
        Vec dr(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto ei = static_cast<Eigen::Index>(i);
            eta(ei) = (sv[i] * th[i] - xw.x[j] * w[i]) / xrho.x[j];
            wr(ei) = w[i];
            dr(ei) = r.at(j + 1)[i] - r.post(j)[i];
        }
        // compensated increment dR_i - dC_{i rho}: the structural condition
        // in the covariation mode carried by the decomposition
        const Vec dm = dr - decomp.dC[j] * wr;
        acc += eta.dot(dm);
        out.eta[j] = std::move(eta);
        out.rhs[j + 1] = x + acc;
        out.lhs[j + 1] = xw.x[j + 1] / xrho.x[j + 1];
    }
    for (std::size_t j = 0; j < pts; ++j) {
        out.residual = std::max(out.residual, std::abs(out.lhs[j] - out.rhs[j]));
    }
    return out;
}

}  // namespace pwm
