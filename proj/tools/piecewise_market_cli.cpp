// Scenario runner: simulation, numeraire diagnostics, verification
// batteries, open-market analysis, exact tree checks, and refinement
// studies, all driven by JSON scenario files.

#include <CLI11.hpp>
#include <chrono>
#include <iostream>
#include <nlohmann/json.hpp>

#include "pwm/scenario.hpp"
#include "pwm/treeio.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

struct CommonOpts {
    std::string scenario_file;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t paths = 0;
    double dt = 0.0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool scenario_required = true) {
    auto* sopt = cmd->add_option("--scenario", o.scenario_file, "scenario JSON file");
    if (scenario_required) sopt->required();
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "override scenario seed")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_option("--paths", o.paths, "override path count");
    cmd->add_option("--dt", o.dt, "override time step");
}

pwm::Scenario load_with_overrides(const CommonOpts& o) {
    pwm::Scenario sc = pwm::load_scenario(o.scenario_file);
    if (o.seed_set) sc.seed = o.seed;
    if (o.paths > 0) sc.n_paths = o.paths;
    if (o.dt > 0.0) {
        sc.steps = static_cast<std::size_t>(std::llround(sc.horizon / o.dt));
        if (sc.steps == 0) throw pwm::InputError("dt larger than horizon");
    }
    return sc;
}

void write_meta(const std::string& out_dir) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    nlohmann::json meta{
        {"unix_time", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
    pwm::write_text_atomic(out_dir + "/meta.json", meta.dump(2) + "\n");
}

int finish(const nlohmann::json& report, const std::string& out_dir) {
    write_meta(out_dir);
    std::cout << report.dump(2) << std::endl;
    if (report.contains("pass") && !report["pass"].get<bool>()) return 1;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"piecewise-market: stochastic-dimension market engine"};
    app.require_subcommand(1);

#ifdef _OPENMP
    omp_set_num_threads(pwm::max_threads());
#endif

    CommonOpts sim_o, num_o, ver_o, open_o, ref_o;
    std::size_t top_m = 0;
    std::vector<std::string> batteries;

    CLI::App* sim = app.add_subcommand("simulate", "simulate a path ensemble");
    add_common(sim, sim_o);

    CLI::App* num = app.add_subcommand("numeraire", "numeraire weights and structural report");
    add_common(num, num_o);

    CLI::App* ver = app.add_subcommand("verify", "run the Monte Carlo verification batteries");
    add_common(ver, ver_o);
    ver->add_option("--battery", batteries, "subset of batteries to run")->delimiter(',');

    CLI::App* open = app.add_subcommand("open-market", "top-m open market analysis");
    add_common(open, open_o);
    open->add_option("--top-m", top_m, "open market size");

    CLI::App* ref = app.add_subcommand("refine", "dt-convergence study");
    add_common(ref, ref_o);

    CLI::App* tre = app.add_subcommand("tree", "exact event-tree checks");
    tre->require_subcommand(1);
    std::string tree_file, stream_file, process_file, claim_file, tree_out = "out";
    for (const char* sub : {"viability", "decompose", "superhedge", "complete", "numeraire"}) {
        CLI::App* c = tre->add_subcommand(sub, std::string("tree ") + sub);
        c->add_option("--tree", tree_file, "tree JSON file")->required();
        c->add_option("--out", tree_out, "output directory");
        if (std::string(sub) == "superhedge") {
            c->add_option("--stream", stream_file, "withdrawal stream JSON (node->value)");
            c->add_option("--claim", claim_file, "claim JSON {maturity, payoff}");
        }
        if (std::string(sub) == "decompose") {
            c->add_option("--process", process_file, "process JSON (node->value)")->required();
        }
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            return finish(pwm::run_simulate(load_with_overrides(sim_o), sim_o.out_dir),
                          sim_o.out_dir);
        }
        if (num->parsed()) {
            return finish(pwm::run_numeraire(load_with_overrides(num_o), num_o.out_dir),
                          num_o.out_dir);
        }
        if (ver->parsed()) {
            pwm::Scenario sc = load_with_overrides(ver_o);
            if (!batteries.empty()) sc.batteries = batteries;
            return finish(pwm::run_verify(sc, ver_o.out_dir), ver_o.out_dir);
        }
        if (open->parsed()) {
            return finish(
                pwm::run_open_market(load_with_overrides(open_o), top_m, open_o.out_dir),
                open_o.out_dir);
        }
        if (ref->parsed()) {
            return finish(pwm::run_refine(load_with_overrides(ref_o), ref_o.out_dir),
                          ref_o.out_dir);
        }
        if (tre->parsed()) {
            CLI::App* sub = tre->get_subcommands().front();
            nlohmann::json extras = nlohmann::json::object();
            auto load_json = [](const std::string& path) {
                std::ifstream in(path);
                if (!in) throw pwm::InputError("cannot open " + path);
                nlohmann::json j;
                in >> j;
                return j;
            };
            if (!stream_file.empty()) extras["stream"] = load_json(stream_file);
            if (!claim_file.empty()) extras["claim"] = load_json(claim_file);
            if (!process_file.empty()) extras["process"] = load_json(process_file);
            return finish(pwm::run_tree(sub->get_name(), tree_file, extras, tree_out), tree_out);
        }
    } catch (const pwm::InputError& e) {
        nlohmann::json err{{"error", "input"}, {"message", e.what()}};
        std::cout << err.dump(2) << std::endl;
        return 2;
    } catch (const pwm::Error& e) {
        nlohmann::json err{{"error", "runtime"}, {"message", e.what()}};
        std::cout << err.dump(2) << std::endl;
        return 2;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "internal"}, {"message", e.what()}};
        std::cout << err.dump(2) << std::endl;
        return 2;
    }
    return 2;
}
