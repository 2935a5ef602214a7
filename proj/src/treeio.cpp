#include "pwm/treeio.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

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

}  // namespace

EventTree tree_from_json(const nlohmann::json& j) {
    check_keys(j, {"nodes", "name"}, "tree file");
    if (!j.contains("nodes") || !j["nodes"].is_array()) {
        throw InputError("tree file needs a 'nodes' array");
    }
    EventTree tree;
    for (const auto& nj : j["nodes"]) {
        check_keys(nj, {"id", "parent", "prob", "prices", "reset", "post_prices"}, "tree node");
        TreeNode nd;
        nd.id = nj.at("id").get<int>();
        nd.parent = nj.value("parent", -1);
        nd.prob = nj.value("prob", 1.0);
        nd.prices = nj.at("prices").get<std::vector<double>>();
        nd.reset = nj.value("reset", false);
        if (nj.contains("post_prices")) {
            nd.post_prices = nj["post_prices"].get<std::vector<double>>();
        }
        tree.nodes.push_back(std::move(nd));
    }
    tree.finalize();
    return tree;
}

nlohmann::json tree_to_json(const EventTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& nd : tree.nodes) {
        nlohmann::json nj;
        nj["id"] = nd.id;
        nj["parent"] = nd.parent;
        nj["prob"] = nd.prob;
        nj["prices"] = nd.prices;
        nj["reset"] = nd.reset;
        if (nd.reset) nj["post_prices"] = nd.post_prices;
        nodes.push_back(std::move(nj));
    }
    return nlohmann::json{{"nodes", std::move(nodes)}};
}

EventTree load_tree(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open tree file " + path);
    nlohmann::json j;
    in >> j;
    return tree_from_json(j);
}

NodeValues node_values_from_json(const nlohmann::json& j, const EventTree& tree, double fill) {
    NodeValues out(tree.size(), fill);
    if (j.is_array()) {
        if (j.size() != tree.size()) throw InputError("node value array size mismatch");
        for (std::size_t i = 0; i < tree.size(); ++i) out[i] = j[i].get<double>();
        return out;
    }
    if (!j.is_object()) throw InputError("node values must be an array or a node->value map");
    for (const auto& item : j.items()) {
        int id = -1;
        try {
            std::size_t consumed = 0;
            id = std::stoi(item.key(), &consumed);
            if (consumed != item.key().size()) id = -1;
        } catch (const std::exception&) {
            id = -1;
        }
        if (id < 0 || id >= static_cast<int>(tree.size())) {
            throw InputError("'" + item.key() + "' is not a node id of this tree");
        }
        if (!item.value().is_number()) {
            throw InputError("node " + item.key() + " value must be a number");
        }
        out[static_cast<std::size_t>(id)] = item.value().get<double>();
    }
    return out;
}

WithdrawalStream stream_from_json(const nlohmann::json& j, const EventTree& tree) {
    WithdrawalStream k;
    k.dK = node_values_from_json(j, tree);
    for (double v : k.dK) {
        if (v < 0.0) throw InputError("withdrawal stream must be nonnegative");
    }
    return k;
}

Claim claim_from_json(const nlohmann::json& j, const EventTree& tree) {
    check_keys(j, {"maturity", "payoff"}, "claim");
    Claim c;
    c.maturity = j.value("maturity", tree.max_depth);
    c.payoff = node_values_from_json(j.at("payoff"), tree);
    return c;
}

}  // namespace pwm
