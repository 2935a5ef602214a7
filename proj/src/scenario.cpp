#include "pwm/scenario.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pwm/mcstats.hpp"
#include "pwm/openmarket.hpp"
#include "pwm/treeio.hpp"

namespace pwm {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw InputError("unknown key '" + item.key() + "' in " + where);
    }
}

Mat cov_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw InputError(where + " must be a matrix");
    const std::size_t n = j.size();
    Mat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        if (!j[r].is_array() || j[r].size() != n) throw InputError(where + " must be square");
        for (std::size_t c = 0; c < n; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
        }
    }
    return m;
}

EpochDynamics dynamics_from_json(const nlohmann::json& j) {
    check_keys(j, {"kind", "drift", "cov", "vols", "corr", "kappa", "theta"}, "dynamics");
    EpochDynamics d;
    const std::string kind = j.value("kind", "gbm");
    if (kind == "constant") {
        d.kind = EpochDynamics::Kind::constant;
    } else if (kind == "gbm") {
        d.kind = EpochDynamics::Kind::gbm;
    } else if (kind == "mean_revert") {
        d.kind = EpochDynamics::Kind::mean_revert;
    } else {
        throw InputError("unknown dynamics kind '" + kind + "'");
    }
    d.drift = j.at("drift").get<std::vector<double>>();
    const auto n = static_cast<Eigen::Index>(d.drift.size());
    if (j.contains("cov")) {
        d.cov = cov_from_json(j["cov"], "cov");
    } else if (j.contains("vols")) {
        const auto vols = j["vols"].get<std::vector<double>>();
        if (vols.size() != d.drift.size()) throw InputError("vols/drift size mismatch");
        Mat corr = Mat::Identity(n, n);
        if (j.contains("corr")) corr = cov_from_json(j["corr"], "corr");
        d.cov.resize(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) {
                d.cov(r, c) = vols[static_cast<std::size_t>(r)] *
                              vols[static_cast<std::size_t>(c)] * corr(r, c);
            }
        }
    } else {
        throw InputError("dynamics need 'cov' or 'vols'");
    }
    if (j.contains("kappa")) d.kappa = j["kappa"].get<std::vector<double>>();
    if (j.contains("theta")) d.theta = j["theta"].get<std::vector<double>>();
    return d;
}

DimensionalEventGenerator events_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"p_entry", "p_exit", "p_split", "p_merge", "scheduled", "max_dim", "ipo_price",
                "ipo_sigma"},
               "events");
    DimensionalEventGenerator g;
    g.p_entry = j.value("p_entry", 0.0);
    g.p_exit = j.value("p_exit", 0.0);
    g.p_split = j.value("p_split", 0.0);
    g.p_merge = j.value("p_merge", 0.0);
    g.max_dim = j.value("max_dim", 0);
    g.ipo_price = j.value("ipo_price", 1.0);
    g.ipo_sigma = j.value("ipo_sigma", 0.0);
    if (j.contains("scheduled")) {
        for (const auto& ev : j["scheduled"]) {
            check_keys(ev, {"time", "kind"}, "scheduled event");
            DimensionalEventGenerator::Scheduled s;
            s.time = ev.at("time").get<double>();
            const std::string kind = ev.value("kind", "entry");
            if (kind == "entry") {
                s.kind = DimensionalEventGenerator::Kind::entry;
            } else if (kind == "exit") {
                s.kind = DimensionalEventGenerator::Kind::exit;
            } else if (kind == "split") {
                s.kind = DimensionalEventGenerator::Kind::split;
            } else if (kind == "merge") {
                s.kind = DimensionalEventGenerator::Kind::merge;
            } else {
                throw InputError("unknown event kind '" + kind + "'");
            }
            g.scheduled.push_back(s);
        }
    }
    return g;
}

PortfolioSpec portfolio_from_json(const nlohmann::json& j) {
    check_keys(j, {"name", "kind", "weights", "scale", "asset", "times", "rows"}, "portfolio");
    PortfolioSpec p;
    p.name = j.value("name", "unnamed");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "money_market") {
        p.kind = PortfolioSpec::Kind::money_market;
    } else if (kind == "constant") {
        p.kind = PortfolioSpec::Kind::constant;
        p.weights = j.at("weights").get<std::vector<double>>();
    } else if (kind == "equal_weight") {
        p.kind = PortfolioSpec::Kind::equal_weight;
        p.scale = j.value("scale", 1.0);
    } else if (kind == "single_asset") {
        p.kind = PortfolioSpec::Kind::single_asset;
        p.asset = j.at("asset").get<std::size_t>();
    } else if (kind == "rank_weight") {
        p.kind = PortfolioSpec::Kind::rank_weight;
        p.weights = j.at("weights").get<std::vector<double>>();
    } else if (kind == "table") {
        p.kind = PortfolioSpec::Kind::table;
        p.table_times = j.at("times").get<std::vector<double>>();
        p.table_rows = j.at("rows").get<std::vector<std::vector<double>>>();
        if (p.table_times.size() != p.table_rows.size() || p.table_times.empty()) {
            throw InputError("table portfolio needs matching times/rows");
        }
    } else if (kind == "numeraire") {
        p.kind = PortfolioSpec::Kind::numeraire;
    } else {
        throw InputError("unknown portfolio kind '" + kind + "'");
    }
    return p;
}

}  // namespace

WeightFn PortfolioSpec::rule() const {
    switch (kind) {
        case Kind::money_market:
            return money_market_rule();
        case Kind::constant:
            return constant_rule(weights);
        case Kind::equal_weight:
            return equal_weight_rule(scale);
        case Kind::single_asset:
            return single_asset_rule(asset);
        case Kind::rank_weight: {
            const std::vector<double> rw = weights;
            return [rw](std::size_t, double, std::size_t n, std::span<const double> s) {
                const auto u = rank_of(s);
                std::vector<double> w(n, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (u[i] <= rw.size()) w[i] = rw[u[i] - 1];
                }
                return w;
            };
        }
        case Kind::table: {
            const auto times = table_times;
            const auto rows = table_rows;
            return [times, rows](std::size_t, double t, std::size_t n,
                                 std::span<const double>) {
                std::size_t row = 0;
                while (row + 1 < times.size() && times[row + 1] <= t + 1e-12) ++row;
                std::vector<double> w(n, 0.0);
                for (std::size_t i = 0; i < n && i < rows[row].size(); ++i) w[i] = rows[row][i];
                return w;
            };
        }
        case Kind::numeraire:
            throw InputError("the numeraire portfolio has no standalone weight rule");
    }
    throw InputError("bad portfolio spec");
}

PortfolioBuilder PortfolioSpec::builder() const {
    if (kind == Kind::numeraire) return numeraire_builder();
    return rule_builder(rule());
}

Scenario scenario_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"name", "market", "grid", "paths", "seed", "portfolios", "top_m", "checkpoints",
                "batteries", "trees", "driver", "refine_steps", "clock", "scheme"},
               "scenario");
    Scenario sc;
    sc.name = j.value("name", "scenario");
    const nlohmann::json& mj = j.at("market");
    check_keys(mj, {"initial_prices", "dynamics", "events", "scheme", "clock"}, "market");
    sc.model.initial_prices = mj.at("initial_prices").get<std::vector<double>>();
    sc.model.dynamics = dynamics_from_json(mj.at("dynamics"));
    if (mj.contains("events")) sc.model.events = events_from_json(mj["events"]);
    const std::string scheme = mj.value("scheme", "log_euler");
    if (scheme == "log_euler") {
        sc.model.scheme = Scheme::log_euler;
    } else if (scheme == "euler") {
        sc.model.scheme = Scheme::euler;
    } else {
        throw InputError("unknown scheme '" + scheme + "'");
    }
    const std::string clock = mj.value("clock", "calendar");
    if (clock == "calendar") {
        sc.model.clock = ClockMode::calendar;
    } else if (clock == "paper") {
        sc.model.clock = ClockMode::paper;
    } else {
        throw InputError("unknown clock '" + clock + "'");
    }
    const nlohmann::json& gj = j.at("grid");
    check_keys(gj, {"horizon", "steps"}, "grid");
    sc.horizon = gj.at("horizon").get<double>();
    sc.steps = gj.at("steps").get<std::size_t>();
    sc.n_paths = j.value("paths", 1000);
    sc.seed = j.value("seed", 1);
    if (j.contains("portfolios")) {
        for (const auto& pj : j["portfolios"]) sc.portfolios.push_back(portfolio_from_json(pj));
    }
    sc.top_m = j.value("top_m", 0);
    if (j.contains("checkpoints")) {
        sc.checkpoints = j["checkpoints"].get<std::vector<double>>();
    } else {
        sc.checkpoints = {sc.horizon};
    }
    if (j.contains("batteries")) sc.batteries = j["batteries"].get<std::vector<std::string>>();
    if (j.contains("trees")) sc.tree_files = j["trees"].get<std::vector<std::string>>();
    if (j.contains("driver")) {
        check_keys(j["driver"], {"vol", "seed"}, "driver");
        sc.driver.vol = j["driver"].value("vol", 0.5);
        sc.driver.seed = j["driver"].value("seed", 7);
    }
    if (j.contains("refine_steps")) {
        sc.refine_steps = j["refine_steps"].get<std::vector<std::size_t>>();
    }
    sc.model.validate();
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario file " + path);
    nlohmann::json j;
    in >> j;
    return scenario_from_json(j);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

std::string ensemble_csv(const Ensemble& ens) {
    std::ostringstream os;
    os << "path_id,time,epoch,dim,component,value,post_reset\n";
    char buf[64];
    for (std::size_t p = 0; p < ens.paths.size(); ++p) {
        const SimulatedPath& sp = ens.paths[p];
        for (std::size_t j = 0; j < sp.prices.points(); ++j) {
            const std::size_t k =
                j == 0 ? 1 : sp.resets.epoch_of_step(j - 1);  // epoch owning arrival at t_j
            const UValue& v = sp.prices.at(j);
            for (std::size_t i = 0; i < v.dim(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
                os << p << ',' << sp.prices.grid().time(j) << ',' << k << ',' << v.dim() << ','
                   << i << ',' << buf << ",0\n";
            }
            if (sp.prices.has_post(j) && !(sp.prices.post(j) == v)) {
                const UValue& pv = sp.prices.post(j);
                for (std::size_t i = 0; i < pv.dim(); ++i) {
                    std::snprintf(buf, sizeof(buf), "%.17g", pv[i]);
                    os << p << ',' << sp.prices.grid().time(j) << ',' << (k + 1) << ','
                       << pv.dim() << ',' << i << ',' << buf << ",1\n";
                }
            }
        }
    }
    return os.str();
}

namespace {

nlohmann::json battery_to_json(const std::string& name, const BatteryReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const BatteryRow& r : rep.rows) {
        rows.push_back({{"candidate", r.candidate},
                        {"T", r.t},
                        {"estimate", r.estimate},
                        {"se", r.se},
                        {"bound", r.bound},
                        {"pass", r.pass}});
    }
    return nlohmann::json{{"battery", name}, {"pass", rep.pass}, {"rows", std::move(rows)}};
}

std::vector<NamedRule> candidate_rules(const Scenario& sc) {
    std::vector<NamedRule> out;
    for (const PortfolioSpec& p : sc.portfolios) out.emplace_back(p.name, p.builder());
    if (out.empty()) {
        out.emplace_back("money_market", rule_builder(money_market_rule()));
        out.emplace_back("equal_weight", rule_builder(equal_weight_rule(1.0)));
    }
    return out;
}

bool battery_selected(const Scenario& sc, const std::string& name) {
    if (sc.batteries.empty()) return true;
    return std::find(sc.batteries.begin(), sc.batteries.end(), name) != sc.batteries.end();
}

nlohmann::json structural_summary(const Ensemble& ens) {
    double max_step = 0.0;
    double max_integrated = 0.0;
    bool viable = true;
    for (const SimulatedPath& sp : ens.paths) {
        UPath r = return_process(sp.prices, sp.resets);
        Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
        StructuralReport rep = structural_residual(sp.rates, rho, sp.resets);
        max_step = std::max(max_step, rep.max_step_residual);
        for (const auto& [key, v] : rep.integrated_residual) {
            max_integrated = std::max(max_integrated, v);
        }
        viable = viable && rep.viable;
    }
    return nlohmann::json{{"battery", "structural"},
                          {"pass", viable && max_step <= 1e-8},
                          {"max_step_residual", max_step},
                          {"max_integrated_residual", max_integrated},
                          {"viable", viable}};
}

}  // namespace

nlohmann::json run_simulate(const Scenario& sc, const std::string& out_dir) {
    Ensemble ens = simulate_paths(sc.model, sc.grid(), sc.n_paths, sc.seed);
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir + "/ensemble.csv", ensemble_csv(ens));
    std::size_t resets = 0;
    for (const SimulatedPath& sp : ens.paths) resets += sp.resets.idx.size() - 1;
    nlohmann::json manifest{{"model", sc.name},
                            {"seed", sc.seed},
                            {"paths", sc.n_paths},
                            {"grid", {{"horizon", sc.horizon}, {"steps", sc.steps}}},
                            {"total_dimension_events", resets}};
    write_text_atomic(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

nlohmann::json run_numeraire(const Scenario& sc, const std::string& out_dir) {
    Ensemble ens = simulate_paths(sc.model, sc.grid(), sc.n_paths, sc.seed);
    nlohmann::json rep = structural_summary(ens);
    rep["scenario"] = sc.name;

    // Weight trajectory of the first path.
    const SimulatedPath& sp = ens.paths.front();
    Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
    std::ostringstream os;
    os << "time,component,weight\n";
    for (std::size_t j = 0; j + 1 < sp.prices.points(); ++j) {
        const UValue& w = rho.weights.post(j);
        for (std::size_t i = 0; i < w.dim(); ++i) {
            os << sp.prices.grid().time(j) << ',' << i << ',' << w[i] << '\n';
        }
    }
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir + "/numeraire_weights.csv", os.str());
    write_text_atomic(out_dir + "/structural_report.json", rep.dump(2) + "\n");

    // Growth trajectory of the first path: local rate and its running sum.
    std::ostringstream gs;
    gs << "time,g,G\n";
    auto gpath = max_growth_path(sp.rates);
    double acc = 0.0;
    for (std::size_t j = 0; j < gpath.size(); ++j) {
        acc += gpath[j].infinite ? 0.0 : gpath[j].value * sp.rates.at(j).dO;
        gs << sp.prices.grid().time(j) << ',' << (gpath[j].infinite ? "inf" : std::to_string(gpath[j].value))
           << ',' << acc << '\n';
    }
    write_text_atomic(out_dir + "/growth_path.csv", gs.str());
    return rep;
}

namespace {

// Checkpointed ratio values X_pi/X_rho per path and candidate, feeding
// the pairwise supermartingale hypothesis test.
nlohmann::json ratio_pairs_battery(const Ensemble& ens, const std::vector<NamedRule>& candidates,
                                   std::vector<double> checkpoints, bool* pass) {
    checkpoints.insert(checkpoints.begin(), 0.0);
    std::vector<std::size_t> cps;
    for (double t : checkpoints) cps.push_back(ens.grid.index_at(t));
    nlohmann::json rows = nlohmann::json::array();
    bool all_ok = true;
    for (const auto& [name, builder] : candidates) {
        std::vector<std::vector<double>> values(ens.paths.size(),
                                                std::vector<double>(cps.size()));
        ParallelErrorCollector errors;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(max_threads())
#endif
        for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(ens.paths.size()); ++pi) {
            errors.run([&, pi] {
                const SimulatedPath& sp = ens.paths[static_cast<std::size_t>(pi)];
                UPath r = return_process(sp.prices, sp.resets);
                Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
                WealthPath xr = wealth_of_portfolio(rho, r, sp.resets);
                Portfolio cand = builder(sp);
                WealthPath xc = wealth_of_portfolio(cand, r, sp.resets);
                for (std::size_t t = 0; t < cps.size(); ++t) {
                    values[static_cast<std::size_t>(pi)][t] = xc.x[cps[t]] / xr.x[cps[t]];
                }
            });
        }
        errors.rethrow();
        SupermartingaleTest st = supermartingale_test(values, checkpoints);
        all_ok = all_ok && st.pass;
        rows.push_back({{"candidate", name},
                        {"pass", st.pass},
                        {"worst_margin", st.worst_margin},
                        {"tests", st.rows.size()}});
    }
    *pass = all_ok;
    return rows;
}

}  // namespace

nlohmann::json run_verify(const Scenario& sc, const std::string& out_dir) {
    Ensemble ens = simulate_paths(sc.model, sc.grid(), sc.n_paths, sc.seed);
    const auto candidates = candidate_rules(sc);
    nlohmann::json batteries = nlohmann::json::array();
    bool pass = true;

    if (battery_selected(sc, "supermartingale")) {
        BatteryReport rep = supermartingale_ratio_battery(ens, candidates, sc.checkpoints);
        pass = pass && rep.pass;
        batteries.push_back(battery_to_json("supermartingale", rep));
    }
    if (battery_selected(sc, "supermartingale_pairs")) {
        bool ok = true;
        nlohmann::json rows = ratio_pairs_battery(ens, candidates, sc.checkpoints, &ok);
        pass = pass && ok;
        batteries.push_back(
            {{"battery", "supermartingale_pairs"}, {"pass", ok}, {"rows", std::move(rows)}});
    }
    if (battery_selected(sc, "log_optimality")) {
        BatteryReport rep = log_optimality_battery(ens, candidates, sc.checkpoints);
        pass = pass && rep.pass;
        batteries.push_back(battery_to_json("log_optimality", rep));
    }
    if (battery_selected(sc, "deflator")) {
        BatteryReport rep =
            deflator_martingale_battery(ens, candidates, sc.checkpoints, sc.driver);
        pass = pass && rep.pass;
        batteries.push_back(battery_to_json("deflator", rep));
    }
    if (battery_selected(sc, "clock_invariance")) {
        const double gap = clock_invariance_gap(ens);
        const bool ok = gap <= 1e-10;
        pass = pass && ok;
        batteries.push_back(
            {{"battery", "clock_invariance"}, {"pass", ok}, {"gap", gap}, {"tol", 1e-10}});
    }
    if (battery_selected(sc, "structural")) {
        nlohmann::json rep = structural_summary(ens);
        pass = pass && rep["pass"].get<bool>();
        batteries.push_back(std::move(rep));
    }

    nlohmann::json out{{"scenario", sc.name},
                       {"seed", sc.seed},
                       {"paths", sc.n_paths},
                       {"pass", pass},
                       {"batteries", std::move(batteries)}};
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir + "/verify_report.json", out.dump(2) + "\n");

    std::ostringstream os;
    os << "battery,candidate,T,estimate,se,bound,pass\n";
    for (const auto& b : out["batteries"]) {
        if (!b.contains("rows")) continue;
        for (const auto& r : b["rows"]) {
            if (!r.contains("T")) continue;
            os << b["battery"].get<std::string>() << ',' << r["candidate"].get<std::string>()
               << ',' << r["T"].get<double>() << ',' << r["estimate"].get<double>() << ','
               << r["se"].get<double>() << ',' << r["bound"].get<double>() << ','
               << (r["pass"].get<bool>() ? "PASS" : "FAIL") << '\n';
        }
    }
    write_text_atomic(out_dir + "/verify_table.csv", os.str());

    // Plot data: mean wealth trajectories over a fixed subsample of paths.
    const std::size_t sample = std::min<std::size_t>(ens.paths.size(), 200);
    std::ostringstream ws;
    ws << "time,candidate,mean_wealth\n";
    std::vector<std::vector<double>> sums(candidates.size() + 1,
                                          std::vector<double>(ens.grid.points(), 0.0));
    for (std::size_t p = 0; p < sample; ++p) {
        const SimulatedPath& sp = ens.paths[p];
        UPath r = return_process(sp.prices, sp.resets);
        Portfolio rho = assemble_numeraire(sp.prices, sp.resets, sp.rates);
        WealthPath xr = wealth_of_portfolio(rho, r, sp.resets);
        for (std::size_t j = 0; j < xr.x.size(); ++j) sums.back()[j] += xr.x[j];
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            Portfolio cand = candidates[c].second(sp);
            WealthPath xc = wealth_of_portfolio(cand, r, sp.resets);
            for (std::size_t j = 0; j < xc.x.size(); ++j) sums[c][j] += xc.x[j];
        }
    }
    for (std::size_t c = 0; c <= candidates.size(); ++c) {
        const std::string name = c < candidates.size() ? candidates[c].first : "numeraire";
        for (std::size_t j = 0; j < ens.grid.points(); ++j) {
            ws << ens.grid.time(j) << ',' << name << ','
               << sums[c][j] / static_cast<double>(sample) << '\n';
        }
    }
    write_text_atomic(out_dir + "/wealth_trajectories.csv", ws.str());
    return out;
}

nlohmann::json run_open_market(const Scenario& sc, std::size_t top_m, const std::string& out_dir) {
    const std::size_t m = top_m > 0 ? top_m : sc.top_m;
    if (m == 0) throw InputError("open-market run needs --top-m or scenario top_m");
    Ensemble ens = simulate_paths(sc.model, sc.grid(), sc.n_paths, sc.seed);

    std::vector<std::pair<std::string, std::vector<double>>> candidates;
    for (const PortfolioSpec& p : sc.portfolios) {
        if (p.kind == PortfolioSpec::Kind::rank_weight) candidates.emplace_back(p.name, p.weights);
        if (p.kind == PortfolioSpec::Kind::money_market) candidates.emplace_back(p.name, std::vector<double>{});
    }
    if (candidates.empty()) {
        candidates.emplace_back("top1", std::vector<double>{1.0});
        candidates.emplace_back("money_market", std::vector<double>{});
    }
    BatteryReport rep = top_m_supermartingale_battery(ens, m, candidates, sc.checkpoints);

    // Support check and censored-rate identities across the ensemble.
    double support_violation = 0.0;
    double identity_gap = 0.0;
    std::size_t turnover = 0;
    for (const SimulatedPath& sp : ens.paths) {
        RankPath ranks = rank_process(sp.prices, sp.resets);
        turnover += rank_turnover(ranks);
        RatesPath cens = censored_rates(sp.rates, ranks, m);
        for (std::size_t j = 0; j < cens.steps(); ++j) {
            const StepRates& sr = sp.rates.at(j);
            const StepRates& cr = cens.at(j);
            NumeraireStep ns = top_m_numeraire(cr.alpha, cr.c);
            for (Eigen::Index i = 0; i < ns.rho.size(); ++i) {
                if (ranks[j][static_cast<std::size_t>(i)] > m) {
                    support_violation = std::max(support_violation, std::abs(ns.rho(i)));
                }
                const double ind = ranks[j][static_cast<std::size_t>(i)] <= m ? 1.0 : 0.0;
                identity_gap =
                    std::max(identity_gap, std::abs(cr.alpha(i) - ind * sr.alpha(i)));
                for (Eigen::Index q = 0; q < ns.rho.size(); ++q) {
                    const double indq = ranks[j][static_cast<std::size_t>(q)] <= m ? 1.0 : 0.0;
                    identity_gap = std::max(
                        identity_gap, std::abs(cr.c(i, q) - ind * indq * sr.c(i, q)));
                }
            }
        }
    }

    nlohmann::json out{{"scenario", sc.name},
                       {"top_m", m},
                       {"pass", rep.pass && support_violation == 0.0 && identity_gap == 0.0},
                       {"support_violation", support_violation},
                       {"censored_identity_gap", identity_gap},
                       {"rank_turnover_steps", turnover},
                       {"battery", battery_to_json("top_m_supermartingale", rep)}};
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir + "/open_market_report.json", out.dump(2) + "\n");

    // Rank trajectory of the first path.
    std::ostringstream os;
    os << "time,component,rank\n";
    const SimulatedPath& sp = ens.paths.front();
    RankPath ranks = rank_process(sp.prices, sp.resets);
    for (std::size_t j = 0; j < ranks.size(); ++j) {
        for (std::size_t i = 0; i < ranks[j].size(); ++i) {
            os << sp.prices.grid().time(j) << ',' << i << ',' << ranks[j][i] << '\n';
        }
    }
    write_text_atomic(out_dir + "/rank_trajectory.csv", os.str());
    return out;
}

nlohmann::json run_refine(const Scenario& sc, const std::string& out_dir) {
    RefinementSpec spec;
    spec.model = sc.model;
    spec.horizon = sc.horizon;
    spec.step_counts = sc.refine_steps.empty()
                           ? std::vector<std::size_t>{16, 32, 64, 128, 256}
                           : sc.refine_steps;
    spec.n_paths = std::min<std::size_t>(sc.n_paths, 128);
    spec.seed = sc.seed;
    RefinementReport rep = refinement_study(spec);

    nlohmann::json diags = nlohmann::json::array();
    std::ostringstream os;
    os << "diagnostic,dt,error\n";
    for (const RefinementDiagnostic& d : rep.diagnostics) {
        nlohmann::json rows = nlohmann::json::array();
        for (const RefinementRow& r : d.rows) {
            rows.push_back({{"dt", r.dt}, {"error", r.error}});
            os << d.name << ',' << r.dt << ',' << r.error << '\n';
        }
        diags.push_back({{"name", d.name},
                         {"order", d.order},
                         {"exact", d.exact},
                         {"pass", d.pass},
                         {"rows", std::move(rows)}});
    }
    nlohmann::json out{{"scenario", sc.name}, {"pass", rep.pass}, {"diagnostics", std::move(diags)}};
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir + "/refine_report.json", out.dump(2) + "\n");
    write_text_atomic(out_dir + "/refine_table.csv", os.str());
    return out;
}

namespace {

nlohmann::json run_tree_impl(const std::string& sub, const std::string& tree_file,
                             const nlohmann::json& extras) {
    EventTree tree = load_tree(tree_file);
    TreeAnalysis an = analyze_tree(tree);
    nlohmann::json out{{"tree", tree_file}, {"subcommand", sub}, {"nodes", tree.size()}};

    if (sub == "viability") {
        Na1Report rep = na1_probe(tree, an);
        out["viable"] = rep.viable;
        if (!rep.viable) {
            out["node"] = rep.node;
            out["certificate"] = std::vector<double>(
                rep.certificate.data(), rep.certificate.data() + rep.certificate.size());
        }
        out["pass"] = true;
        return out;
    }
    if (sub == "complete") {
        out["complete"] = is_complete(tree, an);
        nlohmann::json kinds = nlohmann::json::array();
        for (std::size_t i = 0; i < tree.size(); ++i) {
            if (tree.node(static_cast<int>(i)).children.empty()) continue;
            const char* k = an.sets[i].kind == OneStepSet::Kind::singleton ? "singleton" : "multi";
            if (!an.sets[i].viable()) k = "non-viable";
            kinds.push_back({{"node", i}, {"kind", k}});
        }
        out["one_step_sets"] = std::move(kinds);
        out["pass"] = true;
        return out;
    }
    if (sub == "superhedge") {
        WithdrawalStream k = extras.contains("stream")
                                 ? stream_from_json(extras["stream"], tree)
                                 : WithdrawalStream{NodeValues(tree.size(), 0.0)};
        if (extras.contains("claim")) {
            Claim c = claim_from_json(extras["claim"], tree);
            for (std::size_t i = 0; i < tree.size(); ++i) k.dK[i] += c.payoff[i];
        }
        Superhedge sh = superhedge(tree, an, k);
        DualValue dv = dual_value(tree, an, k);
        out["primal_value"] = sh.x0;
        out["dual_value"] = dv.value;
        out["duality_gap"] = std::abs(sh.x0 - dv.value);
        out["attained"] = dv.attained;
        out["worst_domination"] = sh.worst_domination;
        out["pass"] = std::abs(sh.x0 - dv.value) <= 1e-8 * (1.0 + std::abs(sh.x0));
        return out;
    }
    if (sub == "decompose") {
        NodeValues x = node_values_from_json(extras.at("process"), tree);
        Decomposition dec = optional_decompose(tree, an, x);
        out["accepted"] = dec.accepted;
        if (dec.accepted) {
            out["x0"] = dec.x0;
            out["max_reconstruction_error"] = dec.max_reconstruction_error;
            double total_k = 0.0;
            for (double v : dec.k.dK) total_k += v;
            out["total_withdrawal"] = total_k;
        } else {
            out["bad_node"] = dec.bad_node;
            out["violation"] = dec.violation;
        }
        out["pass"] = true;
        return out;
    }
    if (sub == "numeraire") {
        NumeraireTree nt = supermartingale_numeraire_tree(tree, an);
        out["x_star"] = nt.x_star;
        std::vector<TreeDeflator> ys = sample_deflators(tree, an, 20, 11);
        double worst = 0.0;
        for (const TreeDeflator& y : ys) {
            NodeValues yx(tree.size());
            for (std::size_t i = 0; i < tree.size(); ++i) yx[i] = y.y[i] * nt.x_star[i];
            MartingaleCheck mc = is_martingale(tree, yx);
            worst = std::max(worst, mc.worst);
        }
        out["deflated_martingale_residual"] = worst;
        out["deflators_sampled"] = ys.size();
        out["pass"] = worst <= 1e-10;
        return out;
    }
    throw InputError("unknown tree subcommand '" + sub + "'");
}

}  // namespace

nlohmann::json run_tree(const std::string& sub, const std::string& tree_file,
                        const nlohmann::json& extras, const std::string& out_dir) {
    nlohmann::json out = run_tree_impl(sub, tree_file, extras);
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir + "/tree_" + sub + "_report.json", out.dump(2) + "\n");
    return out;
}

}  // namespace pwm
