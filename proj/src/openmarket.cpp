#include "pwm/openmarket.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pwm/mcstats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pwm {

namespace {

std::vector<std::size_t> sorted_indices(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    return idx;
}

}  // namespace

RankedValue ranked_value(std::span<const double> v, std::size_t k) {
    if (k == 0 || k > v.size()) throw InputError("rank out of range");
    const auto idx = sorted_indices(v);
    return RankedValue{v[idx[k - 1]], idx[k - 1]};
}

std::vector<std::size_t> rank_of(std::span<const double> v) {
    const auto idx = sorted_indices(v);
    std::vector<std::size_t> u(v.size());
    for (std::size_t r = 0; r < idx.size(); ++r) u[idx[r]] = r + 1;
    return u;
}

RankPath rank_process(const UPath& s, const ResetSequence& resets) {
    resets.validate();
    const std::size_t steps = s.points() - 1;
    RankPath out(steps);
    for (std::size_t j = 0; j < steps; ++j) out[j] = rank_of(s.post(j).values());
    return out;
}

std::size_t rank_turnover(const RankPath& ranks) {
    std::size_t count = 0;
    for (std::size_t j = 1; j < ranks.size(); ++j) {
        if (ranks[j] != ranks[j - 1]) ++count;
    }
    return count;
}

UPath censor_returns(const UPath& r, const RankPath& ranks, std::size_t m) {
    if (m == 0) throw InputError("top-m size must be >= 1");
    const std::size_t pts = r.points();
    if (ranks.size() != pts - 1) throw InputError("rank path length mismatch");
    std::vector<UValue> values(pts);
    values[0] = UValue::zeros(r.dim_at(0));
    UPath out(r.grid(), std::move(values));

    std::vector<double> acc(r.dim_post(0), 0.0);
    for (std::size_t j = 0; j + 1 < pts; ++j) {
        const UValue& lo = r.post(j);
        const UValue& hi = r.at(j + 1);
        const std::size_t n = lo.dim();
        if (j > 0 && r.has_post(j) && !(r.post(j) == r.at(j))) {
            acc.assign(n, 0.0);
            out.set_post(j, UValue::zeros(n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double ind = ranks[j][i] <= m ? 1.0 : 0.0;
            acc[i] += ind * (hi[i] - lo[i]);
        }
        out.set_value(j + 1, UValue::vec(acc));
    }
    return out;
}

RatesPath censored_rates(const RatesPath& rates, const RankPath& ranks, std::size_t m) {
    if (m == 0) throw InputError("top-m size must be >= 1");
    if (ranks.size() != rates.steps()) throw InputError("rank path length mismatch");
    RatesPath out;
    for (std::size_t j = 0; j < rates.steps(); ++j) {
        const StepRates& sr = rates.at(j);
        const auto n = sr.alpha.size();
        Vec d(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i) = ranks[j][static_cast<std::size_t>(i)] <= m ? 1.0 : 0.0;
        }
        StepRates o;
        o.alpha = d.asDiagonal() * sr.alpha;
        o.c = d.asDiagonal() * sr.c * d.asDiagonal();
        o.dO = sr.dO;
        out.push(std::move(o));
    }
    return out;
}

NumeraireStep top_m_numeraire(const Vec& alpha_censored, const Mat& c_censored) {
    return numeraire_dissection(alpha_censored, c_censored);
}

TopMCheck is_top_m_portfolio(const Portfolio& pi, const RankPath& ranks, std::size_t m) {
    for (std::size_t j = 0; j < ranks.size(); ++j) {
        const UValue& w = pi.weights.post(j);
        for (std::size_t i = 0; i < w.dim(); ++i) {
            if (ranks[j][i] > m && w[i] != 0.0) return TopMCheck{false, j, i};
        }
    }
    return TopMCheck{};
}

Portfolio make_rank_portfolio(const UPath& s, const ResetSequence& resets,
                              std::vector<double> rank_weights, std::size_t m) {
    if (rank_weights.size() > m) throw InputError("more rank weights than the top-m size");
    WeightFn fn = [rw = std::move(rank_weights), m](std::size_t, double, std::size_t n,
                                                    std::span<const double> s_left) {
        const auto u = rank_of(s_left);
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t r = u[i];
            if (r <= m && r <= rw.size()) w[i] = rw[r - 1];
        }
        return w;
    };
    return make_portfolio(s, resets, fn);
}

Portfolio assemble_top_m_numeraire(const UPath& s, const ResetSequence& resets,
                                   const RatesPath& rates, std::size_t m) {
    RankPath ranks = rank_process(s, resets);
    RatesPath cens = censored_rates(rates, ranks, m);
    return assemble_numeraire(s, resets, cens);
}

BatteryReport top_m_supermartingale_battery(
    const Ensemble& ens, std::size_t m,
    const std::vector<std::pair<std::string, std::vector<double>>>& candidates,
    const std::vector<double>& checkpoints, double z) {
    const std::size_t np = ens.paths.size();
    std::vector<std::size_t> cps;
    for (double t : checkpoints) cps.push_back(ens.grid.index_at(t));

    std::vector<std::vector<std::vector<double>>> stats(
        candidates.size(),
        std::vector<std::vector<double>>(cps.size(), std::vector<double>(np)));
    ParallelErrorCollector errors;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(max_threads())
#endif
    for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(np); ++pi) {
        errors.run([&, pi] {
            const std::size_t p = static_cast<std::size_t>(pi);
            const SimulatedPath& sp = ens.paths[p];
            UPath r = return_process(sp.prices, sp.resets);
            Portfolio rho = assemble_top_m_numeraire(sp.prices, sp.resets, sp.rates, m);
            WealthPath xr = wealth_of_portfolio(rho, r, sp.resets);
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                Portfolio cand =
                    make_rank_portfolio(sp.prices, sp.resets, candidates[c].second, m);
                WealthPath xc = wealth_of_portfolio(cand, r, sp.resets);
                for (std::size_t t = 0; t < cps.size(); ++t) {
                    stats[c][t][p] = xc.x[cps[t]] / xr.x[cps[t]];
                }
            }
        });
    }
    errors.rethrow();

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

}  // namespace pwm
