#include "fctraj/dependency_graph.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fctraj/llm_client.hpp"

namespace fctraj {

using nlohmann::json;

void graph_set::insert(local_dependency_graph g) {
    function_id id = g.target;
    graphs_[std::move(id)] = std::move(g);
}

const local_dependency_graph* graph_set::find(const function_id& id) const {
    auto it = graphs_.find(id);
    return it == graphs_.end() ? nullptr : &it->second;
}

const local_dependency_graph& graph_set::at(const function_id& id) const {
    if (const auto* g = find(id)) return *g;
    throw validation_error("no local graph for '" + id + "'");
}

std::vector<function_id> graph_set::ids() const {
    std::vector<function_id> out;
    out.reserve(graphs_.size());
    for (const auto& [id, _] : graphs_) out.push_back(id);
    return out;
}

std::vector<function_id> sample_candidates(const function_pool& pool, const function_id& target,
                                           size_t k, rng64& rng, bool cross_category) {
    const function_signature& sig = pool.at(target);
    std::vector<function_id> group =
        cross_category ? pool.ids() : pool.group_members(sig.category, sig.tool_class);
    group.erase(std::remove(group.begin(), group.end(), target), group.end());
    return rng.sample(group, k);
}

std::vector<function_id> judge_edges(const function_signature& target,
                                     const std::vector<const function_signature*>& candidates,
                                     dependency_judge& judge,
                                     std::vector<std::string>* warnings) {
    std::vector<std::string> named = judge.adjacent(target, candidates);
    std::set<std::string> wanted;
    for (const auto& name : named) {
        if (name == target.api_name) {
            if (warnings) warnings->push_back("judge named the target itself: " + name);
            continue;
        }
        bool known = std::any_of(candidates.begin(), candidates.end(),
                                 [&](const function_signature* c) { return c->api_name == name; });
        if (!known) {
            if (warnings) {
                warnings->push_back("judge named '" + name + "', not a candidate of " +
                                    target.api_name);
            }
            continue;
        }
        wanted.insert(name);
    }
    std::vector<function_id> edges;
    for (const function_signature* c : candidates) {
        if (wanted.count(c->api_name)) edges.push_back(c->api_name);
    }
    return edges;
}

namespace {

local_dependency_graph build_one(const function_pool& pool, const function_id& target,
                                 dependency_judge& judge, const graph_config& config,
                                 uint64_t seed) {
    local_dependency_graph g;
    g.target = target;
    rng64 rng(derive_seed(seed, target));
    g.neighbors = sample_candidates(pool, target, config.k_cand, rng, config.cross_category);
    std::vector<const function_signature*> candidates;
    candidates.reserve(g.neighbors.size());
    for (const auto& id : g.neighbors) candidates.push_back(&pool.at(id));
    if (candidates.empty()) return g;
    try {
        g.edges = judge_edges(pool.at(target), candidates, judge);
    } catch (const std::exception& e) {
        std::cerr << "warning: dependency judgment failed for " << target << ": " << e.what()
                  << "\n";
        g.edges.clear();
        g.judge_failed = true;
    }
    return g;
}

}  // namespace

graph_set build_graph_set(const function_pool& pool, dependency_judge& judge,
                          const graph_config& config, uint64_t seed) {
    const std::vector<function_id> targets = pool.ids();
    std::vector<local_dependency_graph> built(targets.size());

    size_t jobs = std::max<size_t>(1, std::min(config.jobs, targets.size()));
    if (jobs == 1) {
        for (size_t i = 0; i < targets.size(); ++i) {
            built[i] = build_one(pool, targets[i], judge, config, seed);
        }
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> workers;
        for (size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    size_t i = next.fetch_add(1);
                    if (i >= targets.size()) return;
                    built[i] = build_one(pool, targets[i], judge, config, seed);
                }
            });
        }
        for (auto& t : workers) t.join();
    }

    size_t failed = 0;
    graph_set out;
    for (auto& g : built) {
        failed += g.judge_failed ? 1 : 0;
        out.insert(std::move(g));
    }
    if (failed == targets.size() && !targets.empty()) {
        throw judgment_error("dependency judgment failed for every target");
    }
    return out;
}

json graph_set_to_json(const graph_set& graphs) {
    json out = json::object();
    for (const auto& [id, g] : graphs.graphs()) {
        out[id] = {{"neighbors", g.neighbors},
                   {"edges", g.edges},
                   {"judge_failed", g.judge_failed}};
    }
    return out;
}

graph_set graph_set_from_json(const json& j) {
    graph_set out;
    for (const auto& [id, body] : j.items()) {
        local_dependency_graph g;
        g.target = id;
        g.neighbors = body.at("neighbors").get<std::vector<std::string>>();
        g.edges = body.at("edges").get<std::vector<std::string>>();
        g.judge_failed = body.value("judge_failed", false);
        out.insert(std::move(g));
    }
    return out;
}

void save_graph_set(const graph_set& graphs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write graph file: " + path.string());
    out << graph_set_to_json(graphs).dump(2) << "\n";
}

graph_set load_graph_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open graph file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("graph file parse error: ") + e.what());
    }
    return graph_set_from_json(j);
}

std::vector<std::string> map_dependency_judge::adjacent(
    const function_signature& target, const std::vector<const function_signature*>&) {
    auto it = adjacency_.find(target.api_name);
    return it == adjacency_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> hash_dependency_judge::adjacent(
    const function_signature& target, const std::vector<const function_signature*>& candidates) {
    std::vector<std::string> out;
    for (const function_signature* c : candidates) {
        uint64_t h = mix_seed(seed_, fnv1a64(target.api_name) ^ splitmix64(fnv1a64(c->api_name)));
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u < density_) out.push_back(c->api_name);
    }
    return out;
}

llm_dependency_judge::llm_dependency_judge(chat_backend& backend, int max_retries)
    : backend_(&backend), max_retries_(max_retries) {}

std::vector<std::string> llm_dependency_judge::adjacent(
    const function_signature& target, const std::vector<const function_signature*>& candidates) {
    json cand_doc = json::array();
    for (const function_signature* c : candidates) cand_doc.push_back(signature_to_json(*c));
    auto messages = render(template_id::dependency_judge,
                           {{"target_api", signature_to_json(target).dump(2)},
                            {"candidates", cand_doc.dump(2)}});
    retry_policy policy;
    policy.max_retries = max_retries_;
    std::string reply;
    try {
        reply = complete_with_retry(*backend_, messages, chat_params{}, policy);
    } catch (const transport_error& e) {
        throw judgment_error(std::string("dependency judge transport failure: ") + e.what());
    }
    // Tolerate fenced or chatty replies: parse the outermost {...} span.
    size_t open = reply.find('{');
    size_t close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw judgment_error("dependency judge reply holds no adjacency dictionary");
    }
    json dict;
    try {
        dict = json::parse(reply.substr(open, close - open + 1));
    } catch (const json::parse_error& e) {
        throw judgment_error(std::string("unparseable adjacency dictionary: ") + e.what());
    }
    if (!dict.is_object() || !dict.contains(target.api_name) ||
        !dict.at(target.api_name).is_array()) {
        throw judgment_error("adjacency dictionary is missing the target key '" + target.api_name +
                             "'");
    }
    std::vector<std::string> out;
    for (const auto& item : dict.at(target.api_name)) {
        if (item.is_string()) out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace fctraj
