#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pwm/scenario.hpp"
#include "pwm/treeio.hpp"

using namespace pwm;

namespace {

nlohmann::json minimal_scenario_json() {
    return nlohmann::json{
        {"name", "mini"},
        {"market",
         {{"initial_prices", {1.0, 1.0}},
          {"dynamics",
           {{"kind", "gbm"},
            {"drift", {0.08, 0.04}},
            {"vols", {0.2, 0.15}},
            {"corr", {{1.0, 0.3}, {0.3, 1.0}}}}}}},
        {"grid", {{"horizon", 1.0}, {"steps", 16}}},
        {"paths", 200},
        {"seed", 3},
        {"checkpoints", {1.0}},
    };
}

}  // namespace

TEST_CASE("scenario parsing") {
    Scenario sc = scenario_from_json(minimal_scenario_json());
    CHECK(sc.name == "mini");
    CHECK(sc.steps == 16);
    CHECK(sc.model.initial_prices.size() == 2);
    CHECK(sc.model.dynamics.cov(0, 1) == doctest::Approx(0.2 * 0.15 * 0.3));

    SUBCASE("unknown keys are rejected everywhere") {
        nlohmann::json j = minimal_scenario_json();
        j["bogus"] = 1;
        CHECK_THROWS_AS(scenario_from_json(j), InputError);
        nlohmann::json j2 = minimal_scenario_json();
        j2["market"]["dynamics"]["bogus"] = 1;
        CHECK_THROWS_AS(scenario_from_json(j2), InputError);
        nlohmann::json j3 = minimal_scenario_json();
        j3["grid"]["bogus"] = 1;
        CHECK_THROWS_AS(scenario_from_json(j3), InputError);
    }
    SUBCASE("portfolio specs map to rules") {
        nlohmann::json j = minimal_scenario_json();
        j["portfolios"] = nlohmann::json::array(
            {{{"name", "mm"}, {"kind", "money_market"}},
             {{"name", "c"}, {"kind", "constant"}, {"weights", {0.4, 0.6}}},
             {{"name", "rank"}, {"kind", "rank_weight"}, {"weights", {0.8}}},
             {{"name", "tab"},
              {"kind", "table"},
              {"times", {0.0, 0.5}},
              {"rows", {{0.2, 0.2}, {1.0, 0.0}}}},
             {{"name", "gop"}, {"kind", "numeraire"}}});
        Scenario sc2 = scenario_from_json(j);
        REQUIRE(sc2.portfolios.size() == 5);
        auto w = sc2.portfolios[1].rule()(0, 0.0, 2, std::vector<double>{1.0, 2.0});
        CHECK(w == std::vector<double>{0.4, 0.6});
        auto rw = sc2.portfolios[2].rule()(0, 0.0, 2, std::vector<double>{1.0, 2.0});
        CHECK(rw == std::vector<double>{0.0, 0.8});
        auto early = sc2.portfolios[3].rule()(0, 0.25, 2, std::vector<double>{1.0, 1.0});
        CHECK(early == std::vector<double>{0.2, 0.2});
        auto late = sc2.portfolios[3].rule()(0, 0.75, 2, std::vector<double>{1.0, 1.0});
        CHECK(late == std::vector<double>{1.0, 0.0});
        CHECK_THROWS_AS(sc2.portfolios[4].rule(), InputError);

        // the numeraire candidate compared to itself has ratio exactly one
        Scenario run = sc2;
        run.n_paths = 50;
        Ensemble ens = simulate_paths(run.model, run.grid(), run.n_paths, run.seed);
        BatteryReport rep = supermartingale_ratio_battery(
            ens, {{"gop", sc2.portfolios[4].builder()}}, {1.0});
        REQUIRE(rep.rows.size() == 1);
        CHECK(rep.rows[0].estimate == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.rows[0].pass);
    }
}

TEST_CASE("verify runner is deterministic and passes on the quick scenario") {
    Scenario sc = scenario_from_json(minimal_scenario_json());
    sc.n_paths = 400;
    const std::string out = "test_out_verify";
    nlohmann::json a = run_verify(sc, out);
    nlohmann::json b = run_verify(sc, out);
    CHECK(a.dump() == b.dump());  // byte-identical payloads
    CHECK(a["pass"].get<bool>());
    CHECK(std::filesystem::exists(out + "/verify_report.json"));
    CHECK(std::filesystem::exists(out + "/verify_table.csv"));
    std::filesystem::remove_all(out);
}

TEST_CASE("ensemble CSV shape") {
    Scenario sc = scenario_from_json(minimal_scenario_json());
    sc.n_paths = 2;
    sc.steps = 4;
    Ensemble ens = simulate_paths(sc.model, sc.grid(), sc.n_paths, sc.seed);
    std::string csv = ensemble_csv(ens);
    CHECK(csv.rfind("path_id,time,epoch,dim,component,value,post_reset\n", 0) == 0);
    // 2 paths x 5 grid points x 2 components + header
    std::size_t lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == 1 + 2 * 5 * 2);
}

TEST_CASE("tree json round trip") {
    EventTree tree = load_tree(std::string(PWM_SOURCE_DIR) + "/scenarios/trees/two_epoch.json");
    CHECK(tree.size() == 11);
    CHECK(tree.node(1).reset);
    CHECK(tree.node(1).post_prices.size() == 2);
    CHECK(tree.epoch[0] == 1);
    CHECK(tree.epoch[1] == 2);
    CHECK(tree.epoch[3] == 2);
    nlohmann::json j = tree_to_json(tree);
    EventTree back = tree_from_json(j);
    CHECK(back.size() == tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        CHECK(back.node(static_cast<int>(i)).prices == tree.node(static_cast<int>(i)).prices);
    }

    SUBCASE("node value maps") {
        NodeValues v = node_values_from_json(nlohmann::json{{"3", 1.5}, {"7", 2.0}}, tree);
        CHECK(v[3] == 1.5);
        CHECK(v[7] == 2.0);
        CHECK(v[0] == 0.0);
        CHECK_THROWS_AS(node_values_from_json(nlohmann::json{{"99", 1.0}}, tree), InputError);
    }
}

TEST_CASE("tree runner reports superhedge duality") {
    nlohmann::json extras;
    extras["claim"] = nlohmann::json{{"maturity", 1}, {"payoff", {{"1", 1.0}}}};
    nlohmann::json rep =
        run_tree("superhedge", std::string(PWM_SOURCE_DIR) + "/scenarios/trees/trinomial.json", extras, "test_out_tree");
    CHECK(rep["primal_value"].get<double>() == doctest::Approx(1.0 / 3.0));
    CHECK(rep["dual_value"].get<double>() == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(rep["attained"].get<bool>());
    CHECK(rep["pass"].get<bool>());
    std::filesystem::remove_all("test_out_tree");
}

TEST_CASE("tree runner decomposes a supplied process") {
    nlohmann::json extras;
    // wealth of holding one share: 1 + dS along each branch
    extras["process"] = nlohmann::json::array({1.0, 2.0, 1.0, 0.5});
    nlohmann::json rep = run_tree("decompose",
                                  std::string(PWM_SOURCE_DIR) + "/scenarios/trees/trinomial.json",
                                  extras, "test_out_dec");
    CHECK(rep["accepted"].get<bool>());
    CHECK(rep["total_withdrawal"].get<double>() <= 1e-10);
    CHECK(rep["max_reconstruction_error"].get<double>() <= 1e-10);
    std::filesystem::remove_all("test_out_dec");
}

TEST_CASE("refine runner emits a decay table") {
    Scenario sc = scenario_from_json(minimal_scenario_json());
    sc.refine_steps = {8, 16, 32};
    sc.n_paths = 8;
    nlohmann::json rep = run_refine(sc, "test_out_refine");
    CHECK(rep.contains("diagnostics"));
    CHECK(rep["diagnostics"].size() == 4);
    CHECK(std::filesystem::exists("test_out_refine/refine_table.csv"));
    std::filesystem::remove_all("test_out_refine");
}
