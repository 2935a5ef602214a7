#include "pwm/market.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pwm {

void EpochDynamics::validate() const {
    const std::size_t n = drift.size();
    if (n == 0) throw InputError("dynamics need at least one asset");
    if (cov.rows() != static_cast<Eigen::Index>(n) || cov.cols() != static_cast<Eigen::Index>(n)) {
        throw InputError("covariance size does not match drift size");
    }
    require_symmetric(cov);
    clip_psd(cov);  // throws if badly indefinite
    if (kind == Kind::mean_revert && (kappa.size() != n || theta.size() != n)) {
        throw InputError("mean_revert dynamics need kappa/theta per asset");
    }
}

void EpochDynamics::rates_at(double /*t*/, std::span<const double> s, std::size_t n, Vec& a,
                             Mat& v) const {
    if (n > max_dim()) throw InputError("epoch dimension exceeds model max_dim");
    a.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (kind == Kind::mean_revert) {
            a(static_cast<Eigen::Index>(i)) = kappa[i] * (theta[i] - std::log(s[i]));
        } else {
            a(static_cast<Eigen::Index>(i)) = drift[i];
        }
    }
    v = cov.topLeftCorner(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

void MarketModel::validate() const {
    dynamics.validate();
    if (initial_prices.empty()) throw InputError("initial prices missing");
    if (initial_prices.size() > dynamics.max_dim()) {
        throw InputError("initial dimension exceeds dynamics max_dim");
    }
    for (double p : initial_prices) {
        if (!(p > 0.0)) throw InputError("initial prices must be strictly positive");
    }
}

namespace {

using EventKind = DimensionalEventGenerator::Kind;

// sqrt-factor of the leading n x n covariance block, L L' = v.
Mat cov_factor(const Mat& v) {
    Eigen::SelfAdjointEigenSolver<Mat> es(clip_psd(v));
    Vec lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

struct EventOutcome {
    bool fired = false;
    std::vector<double> post;
};

EventOutcome apply_event(EventKind kind, const std::vector<double>& s, std::size_t cap,
                         const DimensionalEventGenerator& gen, std::mt19937_64& rng) {
    const std::size_t n = s.size();
    EventOutcome out;
    switch (kind) {
        case EventKind::entry: {
            if (n >= cap) return out;
            out.post = s;
            double price = gen.ipo_price;
            if (gen.ipo_sigma > 0.0) {
                std::normal_distribution<double> nd(0.0, 1.0);
                price *= std::exp(gen.ipo_sigma * nd(rng) - 0.5 * gen.ipo_sigma * gen.ipo_sigma);
            }
            out.post.push_back(price);
            out.fired = true;
            return out;
        }
        case EventKind::exit: {
            if (n <= 1) return out;
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            std::size_t gone = pick(rng);
            out.post = s;
            out.post.erase(out.post.begin() + static_cast<std::ptrdiff_t>(gone));
            out.fired = true;
            return out;
        }
        case EventKind::split: {
            if (n >= cap) return out;
            // Largest company splits; ties to the smaller index.
            std::size_t big = 0;
            for (std::size_t i = 1; i < n; ++i) {
                if (s[i] > s[big]) big = i;
            }
            std::uniform_real_distribution<double> ud(0.3, 0.7);
            const double u = ud(rng);
            out.post = s;
            out.post[big] = u * s[big];
            out.post.insert(out.post.begin() + static_cast<std::ptrdiff_t>(big) + 1,
                            (1.0 - u) * s[big]);
            out.fired = true;
            return out;
        }
        case EventKind::merge: {
            if (n <= 1) return out;
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            std::size_t i = pick(rng);
            std::uniform_int_distribution<std::size_t> pick2(0, n - 2);
            std::size_t j = pick2(rng);
            if (j >= i) ++j;
            if (i > j) std::swap(i, j);
            out.post = s;
            out.post[i] += out.post[j];
            out.post.erase(out.post.begin() + static_cast<std::ptrdiff_t>(j));
            out.fired = true;
            return out;
        }
        case EventKind::none:
            return out;
    }
    return out;
}

StepRates make_step_rates(const Vec& a, const Mat& v, double dt, ClockMode clock) {
    StepRates r;
    if (clock == ClockMode::calendar) {
        r.alpha = a;
        r.c = v;
        r.dO = dt;
        return r;
    }
    // paper clock: dO = sum_i (|dA_i| + dC_ii)
    const double w = a.cwiseAbs().sum() + v.trace();
    r.dO = w * dt;
    if (r.dO > 0.0) {
        r.alpha = a / w;
        r.c = v / w;
    } else {
        r.alpha = Vec::Zero(a.size());
        r.c = Mat::Zero(v.rows(), v.cols());
    }
    return r;
}

}  // namespace

SimulatedPath simulate_one_path(const MarketModel& model, const TimeGrid& grid,
                                std::uint64_t seed, std::uint64_t path_id) {
    const std::size_t steps = grid.steps();
    std::mt19937_64 rng(path_stream_seed(seed, path_id));
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);

    const std::size_t cap =
        model.events.max_dim > 0 ? std::min(model.events.max_dim, model.dynamics.max_dim())
                                 : model.dynamics.max_dim();

    // Scheduled events resolved to grid indices once.
    std::vector<EventKind> scheduled(steps + 1, EventKind::none);
    for (const auto& ev : model.events.scheduled) {
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

    // Covariance factors depend only on dimension; build lazily per dim.
    std::vector<Mat> factor(cap + 1);
    std::vector<bool> have_factor(cap + 1, false);
    const bool state_dependent_rates = model.dynamics.kind == EpochDynamics::Kind::mean_revert;
    std::size_t rates_n = 0;
    double rates_dt = -1.0;

    Vec a, xi, noise;
    Mat v;
    for (std::size_t j = 0; j < steps; ++j) {
        const std::size_t n = s.size();
        const bool fresh_rates =
            state_dependent_rates || j == 0 || n != rates_n || grid.dt(j) != rates_dt;
        model.dynamics.rates_at(grid.time(j), s, n, a, v);
        if (fresh_rates) {
            rates.push(make_step_rates(a, v, grid.dt(j), model.clock));
            rates_n = n;
            rates_dt = grid.dt(j);
        } else {
            rates.push_repeat();
        }
        if (!have_factor[n]) {
            factor[n] = cov_factor(v);
            have_factor[n] = true;
        }
        const Mat& fac = factor[n];
        xi.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) xi(static_cast<Eigen::Index>(i)) = nd(rng);
        noise.noalias() = fac * xi;
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

        // Dimensional event at the arrival grid time (never at the horizon).
        if (j + 1 < steps) {
            EventKind kind = scheduled[j + 1];
            if (kind == EventKind::none && model.events.any_random()) {
                const double u = ud(rng);
                const auto& ev = model.events;
                if (u < ev.p_entry) {
                    kind = EventKind::entry;
                } else if (u < ev.p_entry + ev.p_exit) {
                    kind = EventKind::exit;
                } else if (u < ev.p_entry + ev.p_exit + ev.p_split) {
                    kind = EventKind::split;
                } else if (u < ev.p_entry + ev.p_exit + ev.p_split + ev.p_merge) {
                    kind = EventKind::merge;
                }
            }
            if (kind != EventKind::none) {
                EventOutcome ev = apply_event(kind, s, cap, model.events, rng);
                if (ev.fired) {
                    path.set_post(j + 1, UValue::vec(ev.post));
                    resets.idx.push_back(j + 1);
                    s = std::move(ev.post);
                }
            }
        }
    }
    return SimulatedPath{std::move(path), std::move(resets), std::move(rates)};
}

Ensemble simulate_paths(const MarketModel& model, const TimeGrid& grid, std::size_t n_paths,
                        std::uint64_t seed, Exec exec) {
    model.validate();
    if (n_paths == 0) throw InputError("n_paths must be >= 1");
    Ensemble out;
    out.grid = grid;
    out.seed = seed;
    out.paths.resize(n_paths);
    if (exec == Exec::parallel) {
#ifdef _OPENMP
        const int nt = max_threads();
        ParallelErrorCollector errors;
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n_paths); ++p) {
            errors.run([&, p] {
                out.paths[static_cast<std::size_t>(p)] =
                    simulate_one_path(model, grid, seed, static_cast<std::uint64_t>(p));
            });
        }
        errors.rethrow();
        return out;
#endif
    }
    for (std::size_t p = 0; p < n_paths; ++p) {
        out.paths[p] = simulate_one_path(model, grid, seed, p);
    }
    return out;
}

UPath return_process(const UPath& s, const ResetSequence& resets) {
    resets.validate();
    const std::size_t pts = s.points();
    const std::size_t steps = pts - 1;
    std::vector<bool> is_reset(pts, false);
    for (std::size_t j : resets.idx) {
        if (j >= pts) throw StructureError("reset index outside grid");
        is_reset[j] = true;
    }

    std::vector<UValue> values(pts);
    values[0] = UValue::zeros(s.dim_at(0));
    UPath r(s.grid(), std::move(values));

    std::vector<double> acc(s.dim_post(0), 0.0);
    for (std::size_t j = 0; j < steps; ++j) {
        const UValue& left = s.post(j);
        const UValue& right = s.at(j + 1);
        const std::size_t n = left.dim();
        if (right.dim() != n) throw StructureError("price dimension break inside epoch");
        if (j > 0 && is_reset[j]) {
            // new epoch: returns re-base at zero
            acc.assign(n, 0.0);
            r.set_post(j, UValue::zeros(n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!(left[i] > 0.0)) {
                throw InputError("nonpositive price at grid index " + std::to_string(j) +
                                 " component " + std::to_string(i));
            }
            if (!(right[i] > 0.0)) {
                throw InputError("nonpositive price at grid index " + std::to_string(j + 1) +
                                 " component " + std::to_string(i));
            }
            acc[i] += (right[i] - left[i]) / left[i];
        }
        r.set_value(j + 1, UValue::vec(acc));
    }
    if (steps > 0 && is_reset[steps]) {
        r.set_post(steps, UValue::zeros(s.dim_post(steps)));
    }
    return r;
}

ReturnDecomposition decompose_returns(const UPath& r, const ResetSequence& resets,
                                      const RatesPath& rates,
                                      ReturnDecomposition::CovMode mode) {
    resets.validate();
    const std::size_t steps = r.points() - 1;
    if (rates.steps() != steps) throw InputError("rates/path step mismatch");
    ReturnDecomposition d;
    d.cov_mode = mode;
    d.dA.resize(steps);
    d.dM.resize(steps);
    d.dC.resize(steps);
    d.dt.resize(steps);
    for (std::size_t j = 0; j < steps; ++j) {
        const UValue& left = r.post(j);
        const UValue& right = r.at(j + 1);
        const std::size_t n = left.dim();
        const auto en = static_cast<Eigen::Index>(n);
        Vec dR(en);
        for (std::size_t i = 0; i < n; ++i) dR(static_cast<Eigen::Index>(i)) = right[i] - left[i];
        const StepRates& sr = rates.at(j);
        if (sr.alpha.size() != en) throw InputError("rates dimension mismatch on step");
        d.dA[j] = sr.alpha * sr.dO;
        d.dM[j] = dR - d.dA[j];
        d.dC[j] = (mode == ReturnDecomposition::CovMode::model)
                      ? Mat(sr.c * sr.dO)
                      : Mat(d.dM[j] * d.dM[j].transpose());
        d.dt[j] = r.grid().dt(j);
    }
    return d;
}

FixedDimPath ReturnDecomposition::cumulative(const std::vector<Vec>& inc,
                                             const ResetSequence& resets, std::size_t k) const {
    const std::size_t steps = inc.size();
    const std::size_t lo = resets.first_step(k);
    const std::size_t hi = resets.last_step(k, steps);
    if (hi <= lo) throw InputError("empty epoch has no cumulative path");
    const std::size_t n = static_cast<std::size_t>(inc[lo].size());
    FixedDimPath out(n, steps + 1);
    std::vector<double> acc(n, 0.0);
    for (std::size_t j = lo; j < hi; ++j) {
        for (std::size_t i = 0; i < n; ++i) acc[i] += inc[j](static_cast<Eigen::Index>(i));
        out.set_row(j + 1, acc);
    }
    for (std::size_t j = hi + 1; j <= steps; ++j) out.set_row(j, acc);
    return out;
}

std::vector<double> covariation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InputError("covariation needs a common grid");
    std::vector<double> out(p.size(), 0.0);
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
        out[j + 1] = out[j] + (p[j + 1] - p[j]) * (q[j + 1] - q[j]);
    }
    return out;
}

RatesPath local_rates(const ReturnDecomposition& decomp, ClockMode clock) {
    RatesPath out;
    const std::size_t steps = decomp.dA.size();
    for (std::size_t j = 0; j < steps; ++j) {
        const Vec& dA = decomp.dA[j];
        const Mat& dC = decomp.dC[j];
        StepRates r;
        double w = 0.0;
        if (clock == ClockMode::calendar) {
            w = decomp.dt[j];
            r.dO = w;
        } else {
            w = dA.cwiseAbs().sum() + dC.trace();
            r.dO = w;
        }
        if (w > 0.0) {
            r.alpha = dA / w;
            r.c = dC / w;
        } else {
            r.alpha = Vec::Zero(dA.size());
            r.c = Mat::Zero(dC.rows(), dC.cols());
        }
        out.push(std::move(r));
    }
    return out;
}

IntegrabilityReport integrability_report(const Vec& nu, const RatesPath& rates,
                                         const ResetSequence& resets, const TimeGrid& grid,
                                         double horizon) {
    IntegrabilityReport rep;
    const double eps = 1e-12 * std::max(1.0, grid.horizon());
    for (std::size_t j = 0; j < rates.steps(); ++j) {
        if (grid.time(j + 1) > horizon + eps) break;
        const StepRates& sr = rates.at(j);
        const auto n = sr.alpha.size();
        if (nu.size() < n) throw InputError("weight vector shorter than epoch dimension");
        const Vec nu_n = nu.head(n);
        const double g = std::abs(nu_n.dot(sr.alpha)) + nu_n.dot(sr.c * nu_n);
        const double contrib = g * sr.dO;
        if (!std::isfinite(contrib)) rep.finite = false;
        const DissectionKey key{resets.epoch_of_step(j), static_cast<std::size_t>(n)};
        rep.value[key] += contrib;
    }
    return rep;
}

}  // namespace pwm
