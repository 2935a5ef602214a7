#include "pwm/numeraire.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pwm/mcstats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pwm {

namespace {

NumeraireStep reduced_numeraire_step(const Vec& alpha, const Mat& c,
                                     const std::vector<Eigen::Index>& support) {
    NumeraireStep out;
    const auto r = static_cast<Eigen::Index>(support.size());
    Vec ar(r);
    Mat cr(r, r);
    for (Eigen::Index i = 0; i < r; ++i) {
        ar(i) = alpha(support[static_cast<std::size_t>(i)]);
        for (Eigen::Index q = 0; q < r; ++q) {
            cr(i, q) = c(support[static_cast<std::size_t>(i)], support[static_cast<std::size_t>(q)]);
        }
    }
    const Vec rho_r = r > 0 ? Vec(pseudo_inverse(cr) * ar) : Vec();
    out.rho = Vec::Zero(alpha.size());
    for (Eigen::Index i = 0; i < r; ++i) out.rho(support[static_cast<std::size_t>(i)]) = rho_r(i);
    const Vec resid = c * out.rho - alpha;
    out.range_residual = resid.norm();
    out.in_range = out.range_residual <= 1e-8 * (1.0 + alpha.norm());
    if (out.in_range) {
        out.g.value = 0.5 * alpha.dot(out.rho);
    } else {
        out.g.infinite = true;
        out.phi = -resid / resid.squaredNorm();  // alpha - c c^dagger alpha, normalized
    }
    return out;
}

}  // namespace

NumeraireStep numeraire_dissection(const Vec& alpha, const Mat& c) {
    require_symmetric(c);
    // Exactly-zero rows of c (censored or absent assets) carry weight
    // exactly zero; solve on the complement so the support stays exact.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        bool zero_row = true;
        for (Eigen::Index q = 0; q < c.cols() && zero_row; ++q) zero_row = c(i, q) == 0.0;
        if (!zero_row) support.push_back(i);
    }
    return reduced_numeraire_step(alpha, c, support);
}

namespace {

UValue vec_to_uvalue(const Vec& v) {
    return UValue::vec(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

Portfolio assemble_numeraire(const UPath& s, const ResetSequence& resets, const RatesPath& rates) {
    resets.validate();
    const std::size_t pts = s.points();
    const std::size_t steps = pts - 1;
    if (rates.steps() != steps) throw InputError("rates/grid mismatch");

    std::vector<bool> mask(pts, false);
    for (std::size_t j : resets.idx) mask[j] = true;

    std::vector<UValue> values(pts);
    values[0] = UValue::zeros(s.dim_at(0));
    UPath w(s.grid(), std::move(values));

    UValue prev = UValue::zeros(s.dim_at(0));
    const StepRates* cached = nullptr;  // pooled entries repeat across steps
    NumeraireStep ns;
    for (std::size_t j = 0; j < steps; ++j) {
        const StepRates& sr = rates.at(j);
        if (&sr != cached) {
            ns = numeraire_dissection(sr.alpha, sr.c);
            cached = &sr;
        }
        if (!ns.in_range) {
            throw NonViableError(
                DissectionKey{resets.epoch_of_step(j), static_cast<std::size_t>(sr.alpha.size())},
                j, ns.phi);
        }
        UValue uw = vec_to_uvalue(ns.rho);
        if (j == 0 || mask[j]) {
            w.set_post(j, uw);
            if (j > 0) w.set_value(j, prev);  // final record of the old epoch
        } else {
            w.set_value(j, uw);
        }
        prev = std::move(uw);
    }
    w.set_value(pts - 1, prev);
    return Portfolio{std::move(w)};
}

StructuralReport structural_residual(const RatesPath& rates, const Portfolio& rho,
                                     const ResetSequence& resets, double tol) {
    StructuralReport rep;
    const std::size_t steps = rates.steps();
    std::map<DissectionKey, std::pair<Vec, Vec>> accum;  // key -> (A, C_{. rho}) running sums
    double g_total = 0.0;
    bool g_inf = false;
    bool all_ok = true;
    const StepRates* cached = nullptr;
    NumeraireStep cached_ns;
    for (std::size_t j = 0; j < steps; ++j) {
        const StepRates& sr = rates.at(j);
        const UValue& wv = rho.weights.post(j);
        const auto n = sr.alpha.size();
        if (static_cast<std::size_t>(n) != wv.dim()) {
            throw StructureError("rho dimension mismatch at step " + std::to_string(j));
        }
        Vec w(n);
        for (Eigen::Index i = 0; i < n; ++i) w(i) = wv[static_cast<std::size_t>(i)];

        StructuralReport::StepEntry e;
        e.step = j;
        e.key = DissectionKey{resets.epoch_of_step(j), static_cast<std::size_t>(n)};
        const Vec crho = sr.c * w;
        e.residual = (crho - sr.alpha).norm();
        rep.max_step_residual = std::max(rep.max_step_residual, e.residual);
        if (e.residual > tol * (1.0 + sr.alpha.norm())) all_ok = false;

        if (&sr != cached) {
            cached_ns = numeraire_dissection(sr.alpha, sr.c);
            cached = &sr;
        }
        const NumeraireStep& ns = cached_ns;
        e.in_range = ns.in_range;
        e.g = ns.g;
        if (ns.g.infinite && sr.dO > 0.0) {
            g_inf = true;
        } else {
            g_total += ns.g.value * sr.dO;
        }
        if (!ns.in_range) rep.viable = false;

        auto [it, fresh] = accum.try_emplace(e.key, std::pair<Vec, Vec>{Vec::Zero(n), Vec::Zero(n)});
        it->second.first += sr.alpha * sr.dO;
        it->second.second += crho * sr.dO;
        const double gap = (it->second.first - it->second.second).cwiseAbs().maxCoeff();
        auto [rit, r_fresh] = rep.integrated_residual.try_emplace(e.key, 0.0);
        rit->second = std::max(rit->second, gap);
        rep.steps.push_back(std::move(e));
    }
    rep.total_growth = GrowthValue{g_total, g_inf};
    rep.numeraire_candidate = all_ok;
    return rep;
}

std::vector<double> growth_rate_path(const Portfolio& pi, const RatesPath& rates) {
    std::vector<double> out(rates.steps(), 0.0);
    for (std::size_t j = 0; j < rates.steps(); ++j) {
        const StepRates& sr = rates.at(j);
        const UValue& wv = pi.weights.post(j);
        const auto n = sr.alpha.size();
        if (static_cast<std::size_t>(n) != wv.dim()) throw StructureError("dimension mismatch");
        Vec w(n);
        for (Eigen::Index i = 0; i < n; ++i) w(i) = wv[static_cast<std::size_t>(i)];
        out[j] = sr.alpha.dot(w) - 0.5 * w.dot(sr.c * w);
    }
    return out;
}

std::vector<GrowthValue> max_growth_path(const RatesPath& rates) {
    std::vector<GrowthValue> out(rates.steps());
    for (std::size_t j = 0; j < rates.steps(); ++j) {
        out[j] = numeraire_dissection(rates.at(j).alpha, rates.at(j).c).g;
    }
    return out;
}

GrowthValue cumulative_growth(const RatesPath& rates, const TimeGrid& grid, double horizon) {
    GrowthValue total;
    const double eps = 1e-12 * std::max(1.0, grid.horizon());
    for (std::size_t j = 0; j < rates.steps(); ++j) {
        if (grid.time(j + 1) > horizon + eps) break;
        const GrowthValue g = numeraire_dissection(rates.at(j).alpha, rates.at(j).c).g;
        if (g.infinite && rates.at(j).dO > 0.0) {
            total.infinite = true;
        } else if (!g.infinite) {
            total.value += g.value * rates.at(j).dO;
        }
    }
    return total;
}

DeflatorPath deflator(const WealthPath& x_rho, const TimeGrid& grid,
                      const std::optional<OrthogonalDriverSpec>& driver, std::uint64_t path_id) {
    const std::size_t pts = x_rho.x.size();
    if (pts != grid.points()) throw InputError("wealth/grid mismatch");
    DeflatorPath out;
    out.y.resize(pts);
    if (!x_rho.strictly_admissible()) throw InputError("deflator needs strictly positive X_rho");

    std::vector<double> el(pts, 1.0);  // stochastic exponential of L
    if (driver.has_value()) {
        out.tag = "orthogonal-driver";
        std::mt19937_64 rng(path_stream_seed(driver->seed ^ 0xA5C1E5ull, path_id));
        std::normal_distribution<double> nd(0.0, 1.0);
        for (std::size_t j = 0; j + 1 < pts; ++j) {
            const double dl = driver->vol * std::sqrt(grid.dt(j)) * nd(rng);
            if (dl <= -1.0) throw InputError("driver increment dL <= -1");
            el[j + 1] = el[j] * (1.0 + dl);
        }
    } else {
        out.tag = "reciprocal-numeraire";
    }
    for (std::size_t j = 0; j < pts; ++j) {
        out.y[j] = el[j] / x_rho.x[j];
        if (!(out.y[j] > 0.0)) throw InputError("deflator lost positivity");
    }
    return out;
}

PortfolioBuilder rule_builder(WeightFn fn) {
    return [fn = std::move(fn)](const SimulatedPath& sp) {
        return make_portfolio(sp.prices, sp.resets, fn);
    };
}

PortfolioBuilder numeraire_builder() {
    return [](const SimulatedPath& sp) {
        return assemble_numeraire(sp.prices, sp.resets, sp.rates);
    };
}

namespace {

// Evaluates fn(path) -> per-candidate, per-checkpoint statistic, parallel
// over paths with a deterministic layout.
template <typename Fn>
std::vector<std::vector<std::vector<double>>> per_path_stats(const Ensemble& ens,
                                                             std::size_t n_candidates,
                                                             std::size_t n_checkpoints, Fn&& fn) {
    const std::size_t np = ens.paths.size();
    std::vector<std::vector<std::vector<double>>> out(
        n_candidates, std::vector<std::vector<double>>(n_checkpoints, std::vector<double>(np)));
    ParallelErrorCollector errors;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(max_threads())
#endif
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(np); ++p) {
        errors.run([&, p] { fn(static_cast<std::size_t>(p), out); });
    }
    errors.rethrow();
    return out;
}

std::vector<std::size_t> checkpoint_indices(const TimeGrid& grid,
                                            const std::vector<double>& checkpoints) {
    std::vector<std::size_t> idx;
    idx.reserve(checkpoints.size());
    for (double t : checkpoints) idx.push_back(grid.index_at(t));
    return idx;
}

}  // namespace

BatteryReport supermartingale_ratio_battery(const Ensemble& ens,
                                            const std::vector<NamedRule>& candidates,
                                            const std::vector<double>& checkpoints, double z) {
    const auto cps = checkpoint_indices(ens.grid, checkpoints);
    auto stats = per_path_stats(
        ens, candidates.size(), cps.size(),
        [&](std::size_t p, std::vector<std::vector<std::vector<double>>>& out) {
            const SimulatedPath& sp = ens.paths[p];
            UPath r = return_process(sp.prices, sp.resets);
            Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
            WealthPath xr = wealth_of_portfolio(rho, r, sp.resets);
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                Portfolio pi = candidates[c].second(sp);
                WealthPath xp = wealth_of_portfolio(pi, r, sp.resets);
                for (std::size_t t = 0; t < cps.size(); ++t) {
                    out[c][t][p] = xp.x[cps[t]] / xr.x[cps[t]];
                }
            }
        });

    BatteryReport rep;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (std::size_t t = 0; t < cps.size(); ++t) {
            Estimate e = mean_with_se(stats[c][t]);
            BatteryRow row;
            row.candidate = candidates[c].first;
            row.t = ens.grid.time(cps[t]);
            row.estimate = e.mean;
            row.se = e.se;
            row.bound = 1.0 + z * e.se;
            row.pass = e.mean <= row.bound;
            rep.pass = rep.pass && row.pass;
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

BatteryReport log_optimality_battery(const Ensemble& ens, const std::vector<NamedRule>& candidates,
                                     const std::vector<double>& checkpoints, double z) {
    const auto cps = checkpoint_indices(ens.grid, checkpoints);
    auto stats = per_path_stats(
        ens, candidates.size(), cps.size(),
        [&](std::size_t p, std::vector<std::vector<std::vector<double>>>& out) {
            const SimulatedPath& sp = ens.paths[p];
            UPath r = return_process(sp.prices, sp.resets);
            Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
            WealthPath xr = wealth_of_portfolio(rho, r, sp.resets);
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                Portfolio pi = candidates[c].second(sp);
                WealthPath xp = wealth_of_portfolio(pi, r, sp.resets);
                for (std::size_t t = 0; t < cps.size(); ++t) {
                    out[c][t][p] = std::log(xp.x[cps[t]] / xr.x[cps[t]]);
                }
            }
        });

    BatteryReport rep;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (std::size_t t = 0; t < cps.size(); ++t) {
            Estimate e = mean_with_se(stats[c][t]);
            BatteryRow row;
            row.candidate = candidates[c].first;
            row.t = ens.grid.time(cps[t]);
            row.estimate = e.mean;
            row.se = e.se;
            row.bound = z * e.se;
            row.pass = e.mean <= row.bound;
            rep.pass = rep.pass && row.pass;
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

BatteryReport deflator_martingale_battery(const Ensemble& ens,
                                          const std::vector<NamedRule>& candidates,
                                          const std::vector<double>& checkpoints,
                                          const OrthogonalDriverSpec& driver, double z) {
    const auto cps = checkpoint_indices(ens.grid, checkpoints);
    auto stats = per_path_stats(
        ens, candidates.size(), cps.size(),
        [&](std::size_t p, std::vector<std::vector<std::vector<double>>>& out) {
            const SimulatedPath& sp = ens.paths[p];
            UPath r = return_process(sp.prices, sp.resets);
            Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
            WealthPath xr = wealth_of_portfolio(rho, r, sp.resets);
            DeflatorPath y = deflator(xr, ens.grid, driver, p);
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                Portfolio pi = candidates[c].second(sp);
                WealthPath xp = wealth_of_portfolio(pi, r, sp.resets);
                for (std::size_t t = 0; t < cps.size(); ++t) {
                    out[c][t][p] = y.y[cps[t]] * xp.x[cps[t]];
                }
            }
        });

    BatteryReport rep;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (std::size_t t = 0; t < cps.size(); ++t) {
            Estimate e = mean_with_se(stats[c][t]);
            BatteryRow row;
            row.candidate = candidates[c].first;
            row.t = ens.grid.time(cps[t]);
            row.estimate = e.mean;
            row.se = e.se;
            row.bound = z * e.se;
            row.pass = std::abs(e.mean - 1.0) <= row.bound;
            rep.pass = rep.pass && row.pass;
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

double clock_invariance_gap(const Ensemble& ens) {
    const std::size_t np = ens.paths.size();
    std::vector<double> gap(np, 0.0);
    ParallelErrorCollector errors;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(max_threads())
#endif
    for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(np); ++pi) {
        errors.run([&, pi] {
            const std::size_t p = static_cast<std::size_t>(pi);
            const SimulatedPath& sp = ens.paths[p];
            UPath r = return_process(sp.prices, sp.resets);
            ReturnDecomposition d =
                decompose_returns(r, sp.resets, sp.rates, ReturnDecomposition::CovMode::model);
            RatesPath cal = local_rates(d, ClockMode::calendar);
            RatesPath pap = local_rates(d, ClockMode::paper);
            double worst = 0.0;
            for (std::size_t j = 0; j < cal.steps(); ++j) {
                const Vec a = numeraire_dissection(cal.at(j).alpha, cal.at(j).c).rho;
                const Vec b = numeraire_dissection(pap.at(j).alpha, pap.at(j).c).rho;
                worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
            }
            gap[p] = worst;
        });
    }
    errors.rethrow();
    return *std::max_element(gap.begin(), gap.end());
}

}  // namespace pwm
