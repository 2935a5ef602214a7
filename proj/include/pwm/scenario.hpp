#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "pwm/numeraire.hpp"
#include "pwm/refinement.hpp"

namespace pwm {

struct PortfolioSpec {
    enum class Kind {
        money_market,
        constant,
        equal_weight,
        single_asset,
        rank_weight,
        table,     // explicit per-time weight rows, step function in time
        numeraire  // the computed growth-optimal portfolio
    };
    std::string name;
    Kind kind = Kind::money_market;
    std::vector<double> weights;              // constant / rank_weight
    double scale = 1.0;                       // equal_weight
    std::size_t asset = 0;                    // single_asset
    std::vector<double> table_times;          // table
    std::vector<std::vector<double>> table_rows;

    WeightFn rule() const;         // throws for kind == numeraire
    PortfolioBuilder builder() const;
};

struct Scenario {
    std::string name;
    MarketModel model;
    double horizon = 1.0;
    std::size_t steps = 256;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 1;
    std::vector<PortfolioSpec> portfolios;
    std::size_t top_m = 0;
    std::vector<double> checkpoints;
    std::vector<std::string> batteries;  // empty = all applicable
    std::vector<std::string> tree_files;
    OrthogonalDriverSpec driver;
    std::vector<std::size_t> refine_steps;

    TimeGrid grid() const { return TimeGrid::uniform(horizon, steps); }
};

// Strict parse: unknown keys are errors.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

// Atomic file write (temp + rename).
void write_text_atomic(const std::string& path, const std::string& content);

// Columnar ensemble CSV: path_id,time,epoch,dim,component,value,post_reset.
std::string ensemble_csv(const Ensemble& ens);

// Report-producing runners shared by the CLI and the tests. The returned
// JSON is the deterministic payload; writing is the caller's business.
nlohmann::json run_simulate(const Scenario& sc, const std::string& out_dir);
nlohmann::json run_numeraire(const Scenario& sc, const std::string& out_dir);
nlohmann::json run_verify(const Scenario& sc, const std::string& out_dir);
nlohmann::json run_open_market(const Scenario& sc, std::size_t top_m, const std::string& out_dir);
nlohmann::json run_refine(const Scenario& sc, const std::string& out_dir);
nlohmann::json run_tree(const std::string& sub, const std::string& tree_file,
                        const nlohmann::json& extras, const std::string& out_dir);

}  // namespace pwm
