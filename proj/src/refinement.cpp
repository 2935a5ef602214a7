#include "pwm/refinement.hpp"

#include <cmath>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pwm {

SimulatedPath simulate_coupled_path(const MarketModel& model, double horizon, std::size_t steps,
                                    std::size_t finest_steps, const std::vector<double>& xi_finest,
                                    std::size_t max_dim) {
    if (finest_steps % steps != 0) throw InputError("levels must divide the finest grid");
    const std::size_t f = finest_steps / steps;
    const double root_f = std::sqrt(static_cast<double>(f));
    TimeGrid grid = TimeGrid::uniform(horizon, steps);

    std::vector<DimensionalEventGenerator::Kind> scheduled(steps + 1,
                                                           DimensionalEventGenerator::Kind::none);
    if (model.events.any_random() || model.events.ipo_sigma > 0.0) {
        throw InputError("coupled refinement supports scheduled entries only");
    }
    for (const auto& ev : model.events.scheduled) {
        if (ev.kind != DimensionalEventGenerator::Kind::entry) {
            throw InputError("coupled refinement supports scheduled entries only");
        }
        const std::size_t j = grid.index_at(ev.time);
        if (j == 0 || j >= steps) throw InputError("scheduled event must be strictly inside the grid");
        scheduled[j] = ev.kind;
    }

    std::vector<double> s = model.initial_prices;
    std::vector<UValue> values(grid.points());
    values[0] = UValue::vec(s);
    UPath path(grid, std::move(values));
    ResetSequence resets;
    resets.idx.push_back(0);
    RatesPath rates;

    std::vector<Mat> factor(max_dim + 1);
    std::vector<bool> have_factor(max_dim + 1, false);

    Vec a, xi;
    Mat v;
    for (std::size_t j = 0; j < steps; ++j) {
        const std::size_t n = s.size();
        model.dynamics.rates_at(grid.time(j), s, n, a, v);
        rates.push(StepRates{a, v, grid.dt(j)});
        if (!have_factor[n]) {
            Eigen::SelfAdjointEigenSolver<Mat> es(clip_psd(v));
            factor[n] = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            have_factor[n] = true;
        }
        xi.setZero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t q = 0; q < f; ++q) {
                sum += xi_finest[(j * f + q) * max_dim + i];
            }
            xi(static_cast<Eigen::Index>(i)) = sum / root_f;
        }
        const Vec noise = factor[n] * xi;
        const double dt = grid.dt(j);
        const double sq = std::sqrt(dt);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ei = static_cast<Eigen::Index>(i);
            if (model.scheme == Scheme::log_euler) {
                s[i] *= std::exp((a(ei) - 0.5 * v(ei, ei)) * dt + noise(ei) * sq);
            } else {
                s[i] *= 1.0 + a(ei) * dt + noise(ei) * sq;
            }
        }
        path.set_value(j + 1, UValue::vec(s));
        if (j + 1 < steps && scheduled[j + 1] == DimensionalEventGenerator::Kind::entry &&
            n < max_dim) {
            std::vector<double> post = s;
            post.push_back(model.events.ipo_price);
            path.set_post(j + 1, UValue::vec(post));
            resets.idx.push_back(j + 1);
            s = std::move(post);
        }
    }
    return SimulatedPath{std::move(path), std::move(resets), std::move(rates)};
}

RefinementReport refinement_study(const RefinementSpec& spec) {
    spec.model.validate();
    if (spec.step_counts.size() < 2) throw InputError("need at least two grid levels");
    const std::size_t finest = spec.step_counts.back();
    for (std::size_t i = 1; i < spec.step_counts.size(); ++i) {
        if (spec.step_counts[i] <= spec.step_counts[i - 1]) {
            throw InputError("step counts must increase");
        }
        if (finest % spec.step_counts[i - 1] != 0) {
            throw InputError("levels must divide the finest grid");
        }
    }
    const std::size_t max_dim = spec.model.dynamics.max_dim();
    const std::size_t levels = spec.step_counts.size();

    enum Diag { kRatioGap = 0, kEtaMoney, kEtaEqual, kWealthGap, kDiagCount };
    std::vector<std::vector<double>> sup_err(kDiagCount, std::vector<double>(levels, 0.0));

    std::vector<std::vector<std::vector<double>>> per_path(
        kDiagCount,
        std::vector<std::vector<double>>(levels, std::vector<double>(spec.n_paths, 0.0)));

    ParallelErrorCollector errors;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
#endif
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(spec.n_paths); ++pp) {
        errors.run([&, pp] {
        const std::size_t p = static_cast<std::size_t>(pp);
        std::mt19937_64 rng(path_stream_seed(spec.seed, p));
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<double> xi(finest * max_dim);
        for (double& v : xi) v = nd(rng);

        for (std::size_t lv = 0; lv < levels; ++lv) {
            SimulatedPath sp = simulate_coupled_path(spec.model, spec.horizon,
                                                     spec.step_counts[lv], finest, xi, max_dim);
            UPath r = return_process(sp.prices, sp.resets);
            Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
            Portfolio equal = make_portfolio(sp.prices, sp.resets, equal_weight_rule(1.0));
            // realized covariations drive the representation residuals; the
            // model rates back the structural precondition on rho
            ReturnDecomposition dec =
                decompose_returns(r, sp.resets, sp.rates, ReturnDecomposition::CovMode::realized);
            const RatesPath& rates = sp.rates;

            per_path[kRatioGap][lv][p] = relative_wealth(equal, rho, r, sp.resets).discrepancy;

            // zero-share (money market) strategy with the path's dimension profile
            std::vector<UValue> zs(sp.prices.points());
            for (std::size_t j = 0; j < sp.prices.points(); ++j) {
                zs[j] = UValue::zeros(sp.prices.dim_at(j));
            }
            UPath zpath(sp.prices.grid(), std::move(zs));
            for (std::size_t j : sp.resets.idx) {
                if (j > 0) zpath.set_post(j, UValue::zeros(sp.prices.dim_post(j)));
            }
            Strategy money{std::move(zpath), 1.0};
            per_path[kEtaMoney][lv][p] =
                deflated_ratio_representation(1.0, money, rho, sp.prices, r, sp.resets, dec, rates)
                    .residual;

            Strategy eq_strat = strategy_from_portfolio(equal, sp.prices, r, sp.resets);
            per_path[kEtaEqual][lv][p] =
                deflated_ratio_representation(1.0, eq_strat, rho, sp.prices, r, sp.resets, dec,
                                              rates)
                    .residual;

            WealthPath mult = wealth_of_portfolio(equal, r, sp.resets);
            WealthPath expw =
                wealth_of_portfolio(equal, r, sp.resets, WealthVariant::exponential);
            double gap = 0.0;
            for (std::size_t j = 0; j < mult.x.size(); ++j) {
                gap = std::max(gap, std::abs(mult.x[j] - expw.x[j]));
            }
            per_path[kWealthGap][lv][p] = gap;
        }
        });
    }
    errors.rethrow();

    for (int d = 0; d < kDiagCount; ++d) {
        for (std::size_t lv = 0; lv < levels; ++lv) {
            double worst = 0.0;
            for (double v : per_path[static_cast<std::size_t>(d)][lv]) worst = std::max(worst, v);
            sup_err[static_cast<std::size_t>(d)][lv] = worst;
        }
    }

    static const char* names[kDiagCount] = {"relative_wealth_exponential_gap",
                                            "deflated_ratio_money_market",
                                            "deflated_ratio_equal_weight",
                                            "wealth_variant_gap"};
    RefinementReport rep;
    std::vector<double> dts(levels);
    for (std::size_t lv = 0; lv < levels; ++lv) {
        dts[lv] = spec.horizon / static_cast<double>(spec.step_counts[lv]);
    }
    for (int d = 0; d < kDiagCount; ++d) {
        rep.diagnostics.push_back(
            fit_refinement(names[d], dts, sup_err[static_cast<std::size_t>(d)]));
        rep.pass = rep.pass && rep.diagnostics.back().pass;
    }
    return rep;
}

}  // namespace pwm
