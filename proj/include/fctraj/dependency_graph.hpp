#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/function_pool.hpp"
#include "fctraj/rng.hpp"

namespace fctraj {

// Out-edges of one target function over its sampled candidate neighbors.
struct local_dependency_graph {
    function_id target;
    std::vector<function_id> neighbors;  // target excluded; |neighbors| <= k_cand
    std::vector<function_id> edges;      // destinations; every edge source is `target`
    bool judge_failed = false;

    bool operator==(const local_dependency_graph&) const = default;
};

class graph_set {
public:
    void insert(local_dependency_graph g);
    const local_dependency_graph* find(const function_id& id) const;
    const local_dependency_graph& at(const function_id& id) const;
    size_t size() const { return graphs_.size(); }
    std::vector<function_id> ids() const;  // sorted
    const std::map<function_id, local_dependency_graph>& graphs() const { return graphs_; }

    bool operator==(const graph_set&) const = default;

private:
    std::map<function_id, local_dependency_graph> graphs_;
};

// Judges the whole candidate batch in one call and returns the names it
// considers dependent on the target (the adjacency-dict contract).
class dependency_judge {
public:
    virtual ~dependency_judge() = default;
    virtual std::vector<std::string> adjacent(
        const function_signature& target,
        const std::vector<const function_signature*>& candidates) = 0;
};

struct graph_config {
    size_t k_cand = 30;
    bool cross_category = false;  // sample candidates pool-wide instead of per group
    size_t jobs = 1;
};

// Distinct ids from the target's (category, tool_class) group, target
// excluded; length = min(k, available). Throws if target is not pooled.
std::vector<function_id> sample_candidates(const function_pool& pool, const function_id& target,
                                           size_t k, rng64& rng, bool cross_category = false);

// Filters the judge's names against the candidate batch: unknown names and
// the target itself are discarded (warned), duplicates collapsed. Edge order
// follows the candidate list.
std::vector<function_id> judge_edges(const function_signature& target,
                                     const std::vector<const function_signature*>& candidates,
                                     dependency_judge& judge,
                                     std::vector<std::string>* warnings = nullptr);

// One local graph per pool member. Per-target seeds derive from (seed, id),
// so the result is a pure function of (pool, judge, config, seed) regardless
// of job count. Throws only if every target fails.
graph_set build_graph_set(const function_pool& pool, dependency_judge& judge,
                          const graph_config& config, uint64_t seed);

nlohmann::json graph_set_to_json(const graph_set& graphs);
graph_set graph_set_from_json(const nlohmann::json& j);
void save_graph_set(const graph_set& graphs, const std::filesystem::path& path);
graph_set load_graph_set(const std::filesystem::path& path);

// Explicit wiring for tests: target -> dependent neighbor names.
class map_dependency_judge final : public dependency_judge {
public:
    explicit map_dependency_judge(std::map<std::string, std::vector<std::string>> adjacency)
        : adjacency_(std::move(adjacency)) {}
    std::vector<std::string> adjacent(
        const function_signature& target,
        const std::vector<const function_signature*>& candidates) override;

private:
    std::map<std::string, std::vector<std::string>> adjacency_;
};

// Deterministic pseudo-judge: declares an edge when the (seed, target,
// candidate) hash lands under `density`.
class hash_dependency_judge final : public dependency_judge {
public:
    hash_dependency_judge(uint64_t seed, double density) : seed_(seed), density_(density) {}
    std::vector<std::string> adjacent(
        const function_signature& target,
        const std::vector<const function_signature*>& candidates) override;

private:
    uint64_t seed_;
    double density_;
};

class chat_backend;

// Renders the dependency prompt, parses the adjacency dictionary out of the
// reply (code fences tolerated). Throws judgment_error when the reply is
// unusable after retries.
class llm_dependency_judge final : public dependency_judge {
public:
    explicit llm_dependency_judge(chat_backend& backend, int max_retries = 2);
    std::vector<std::string> adjacent(
        const function_signature& target,
        const std::vector<const function_signature*>& candidates) override;

private:
    chat_backend* backend_;
    int max_retries_;
};

}  // namespace fctraj
