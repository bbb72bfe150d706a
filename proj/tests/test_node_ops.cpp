#include <doctest.h>

#include <cmath>
#include <map>

#include "fctraj/node_ops.hpp"
#include "test_helpers.hpp"

using namespace fctraj;

namespace {

fsp chain_fsp(const std::vector<std::string>& ids) {
    fsp path;
    for (const auto& id : ids) path.turns.push_back(turn_group{{id}, miss_label::none});
    path.provenance.start = ids.empty() ? "" : ids.front();
    return path;
}

std::multiset<function_id> multiset_of(const fsp& path) {
    auto flat = path.flatten();
    return {flat.begin(), flat.end()};
}

// Exact first and second moments of the merge count for the left-to-right
// non-chaining scan, by enumerating every coin sequence with its
// probability. Independent of the implementation: walks the decision tree
// directly.
void enumerate_merges(size_t turns_left, double p, double prob, size_t merges, double& mean,
                      double& second_moment) {
    if (turns_left < 2) {
        mean += prob * static_cast<double>(merges);
        second_moment += prob * static_cast<double>(merges * merges);
        return;
    }
    enumerate_merges(turns_left - 2, p, prob * p, merges + 1, mean, second_moment);
    enumerate_merges(turns_left - 1, p, prob * (1 - p), merges, mean, second_moment);
}

graph_set neighbor_graphs(const std::map<std::string, std::vector<std::string>>& neighbors) {
    graph_set graphs;
    for (const auto& [target, nbrs] : neighbors) {
        local_dependency_graph g;
        g.target = target;
        g.neighbors = nbrs;
        g.edges = nbrs;
        graphs.insert(std::move(g));
    }
    return graphs;
}

function_pool pool_of(const std::vector<std::string>& ids) {
    std::vector<function_signature> sigs;
    for (const auto& id : ids) sigs.push_back(testing::make_sig(id));
    return function_pool::from_signatures(std::move(sigs));
}

}  // namespace

TEST_CASE("merge at p=0 is the identity on turns") {
    fsp path = chain_fsp({"a", "b", "c", "d"});
    rng64 rng(1);
    fsp merged = op_merge(path, 0.0, rng);
    CHECK(merged.turns == path.turns);
    CHECK(merged.provenance.ops == std::vector<std::string>{"merge"});
}

TEST_CASE("merge at p=1 halves an even single-function chain, without chaining") {
    fsp path = chain_fsp({"a", "b", "c", "d"});
    rng64 rng(1);
    fsp merged = op_merge(path, 1.0, rng);
    REQUIRE(merged.turns.size() == 2);
    CHECK(merged.turns[0].functions == std::vector<function_id>{"a", "b"});
    CHECK(merged.turns[1].functions == std::vector<function_id>{"c", "d"});

    // odd chain: the tail turn survives alone
    fsp odd = chain_fsp({"a", "b", "c", "d", "e"});
    rng64 rng2(1);
    fsp merged_odd = op_merge(odd, 1.0, rng2);
    REQUIRE(merged_odd.turns.size() == 3);
    CHECK(merged_odd.turns[2].functions == std::vector<function_id>{"e"});
}

TEST_CASE("merge count matches the enumeration oracle at p=0.3") {
    const double p = 0.3;
    const size_t turns = 8;
    double exact_mean = 0.0, exact_second = 0.0;
    enumerate_merges(turns, p, 1.0, 0, exact_mean, exact_second);
    double exact_var = exact_second - exact_mean * exact_mean;

    const int trials = 20000;
    double sum = 0.0;
    fsp path = chain_fsp({"a", "b", "c", "d", "e", "f", "g", "h"});
    for (int i = 0; i < trials; ++i) {
        rng64 rng(derive_seed(31337, "merge", i));
        fsp merged = op_merge(path, p, rng);
        sum += static_cast<double>(path.turns.size() - merged.turns.size());
    }
    double mc_mean = sum / trials;
    double sigma = std::sqrt(exact_var / trials);
    CHECK(std::abs(mc_mean - exact_mean) <= 3 * sigma);
}

TEST_CASE("merge preserves function order and multiset") {
    fsp path = chain_fsp({"a", "b", "c", "d", "e", "f", "g"});
    for (int i = 0; i < 50; ++i) {
        rng64 rng(derive_seed(4, "m", i));
        fsp merged = op_merge(path, 0.5, rng);
        CHECK(merged.flatten() == path.flatten());
    }
}

TEST_CASE("merge refuses a miss-labeled path") {
    fsp path = chain_fsp({"a"});
    path.turns.push_back(turn_group{{}, miss_label::miss_func});
    rng64 rng(1);
    CHECK_THROWS_AS(op_merge(path, 0.3, rng), validation_error);
    CHECK_THROWS_AS(op_merge(chain_fsp({"a"}), 1.5, rng), validation_error);
}

TEST_CASE("insert appends the nested neighbor to the turn") {
    function_pool pool = pool_of({"get_distance", "convert_unit"});
    graph_set graphs = neighbor_graphs({{"get_distance", {"convert_unit"}},
                                        {"convert_unit", {}}});
    map_nested_judge judge(std::set<std::pair<std::string, std::string>>{{"get_distance", "convert_unit"}});
    fsp path = chain_fsp({"get_distance"});
    rng64 rng(1);
    fsp out = op_insert(path, graphs, pool, judge, /*q_long=*/0.0, rng);
    REQUIRE(out.turns.size() == 1);
    CHECK(out.turns[0].functions ==
          std::vector<function_id>{"get_distance", "convert_unit"});
    CHECK(out.provenance.ops == std::vector<std::string>{"insert"});
}

TEST_CASE("an always-no judge leaves the path unchanged") {
    function_pool pool = pool_of({"a", "b", "c"});
    graph_set graphs = neighbor_graphs({{"a", {"b", "c"}}, {"b", {"c"}}, {"c", {}}});
    const_nested_judge no(false);
    fsp path = chain_fsp({"a", "b"});
    rng64 rng(1);
    fsp out = op_insert(path, graphs, pool, no, 0.5, rng);
    CHECK(out.turns == path.turns);
}

TEST_CASE("long-dependency insertion lands uniformly after the source turn") {
    function_pool pool = pool_of({"a", "b", "c", "x"});
    graph_set graphs =
        neighbor_graphs({{"a", {"x"}}, {"b", {}}, {"c", {}}, {"x", {}}});
    map_nested_judge judge(std::set<std::pair<std::string, std::string>>{{"a", "x"}});
    fsp path = chain_fsp({"a", "b", "c"});

    const int trials = 10000;
    std::map<size_t, int> slot_counts;  // index of x in the output
    for (int i = 0; i < trials; ++i) {
        rng64 rng(derive_seed(21, "ins", i));
        fsp out = op_insert(path, graphs, pool, judge, /*q_long=*/1.0, rng);
        REQUIRE(out.turns.size() == 4);
        CHECK(multiset_of(out) == std::multiset<function_id>{"a", "b", "c", "x"});
        size_t where = 0;
        for (size_t h = 0; h < out.turns.size(); ++h) {
            if (out.turns[h].functions == std::vector<function_id>{"x"}) where = h;
        }
        CHECK(where >= 1);  // strictly after turn 0
        slot_counts[where] += 1;
    }
    // three legal slots, uniform within 3 sigma
    double sigma = std::sqrt((1.0 / 3) * (2.0 / 3) / trials);
    for (size_t slot : {1, 2, 3}) {
        double freq = static_cast<double>(slot_counts[slot]) / trials;
        CHECK(std::abs(freq - 1.0 / 3) <= 3 * sigma);
    }
}

TEST_CASE("insert adds at most one function per original turn") {
    function_pool pool = pool_of({"a", "b", "n1", "n2", "n3"});
    graph_set graphs = neighbor_graphs({{"a", {"n1", "n2", "n3"}},
                                        {"b", {"n1", "n2", "n3"}},
                                        {"n1", {}},
                                        {"n2", {}},
                                        {"n3", {}}});
    const_nested_judge yes(true);
    fsp path = chain_fsp({"a", "b"});
    rng64 rng(9);
    fsp out = op_insert(path, graphs, pool, yes, 0.0, rng);
    REQUIRE(out.turns.size() == 2);
    CHECK(out.turns[0].functions.size() == 2);  // a + first judged-yes neighbor
    CHECK(out.turns[1].functions.size() == 2);
    CHECK(out.turns[0].functions[1] == "n1");
}

TEST_CASE("insert keeps the original order as a subsequence") {
    function_pool pool = pool_of({"a", "b", "c", "x", "y"});
    graph_set graphs = neighbor_graphs(
        {{"a", {"x"}}, {"b", {"y"}}, {"c", {}}, {"x", {}}, {"y", {}}});
    map_nested_judge judge(std::set<std::pair<std::string, std::string>>{{"a", "x"}, {"b", "y"}});
    fsp path = chain_fsp({"a", "b", "c"});
    for (int i = 0; i < 200; ++i) {
        rng64 rng(derive_seed(6, "sub", i));
        fsp out = op_insert(path, graphs, pool, judge, 0.5, rng);
        auto flat = out.flatten();
        std::vector<function_id> original_only;
        for (const auto& id : flat) {
            if (id == "a" || id == "b" || id == "c") original_only.push_back(id);
        }
        CHECK(original_only == std::vector<function_id>{"a", "b", "c"});
    }
}

TEST_CASE("judge failures skip the turn with a warning") {
    function_pool pool = pool_of({"a", "n1"});
    graph_set graphs = neighbor_graphs({{"a", {"n1"}}, {"n1", {}}});
    struct throwing_judge : nested_judge {
        bool nested(const function_signature&, const function_signature&) override {
            throw transport_error("backend down");
        }
    } judge;
    fsp path = chain_fsp({"a"});
    rng64 rng(1);
    fsp out = op_insert(path, graphs, pool, judge, 0.5, rng);
    CHECK(out.turns == path.turns);
}

TEST_CASE("split inserts exactly one labeled empty turn") {
    fsp path = chain_fsp({"a", "b", "c"});
    rng64 rng(17);
    fsp out = op_split(path, rng, miss_label::miss_params);
    REQUIRE(out.turns.size() == 4);
    auto miss = out.miss_index();
    REQUIRE(miss.has_value());
    CHECK(out.turns[*miss].functions.empty());
    CHECK(out.turns[*miss].miss == miss_label::miss_params);
    CHECK(multiset_of(out) == multiset_of(path));
    CHECK(out.provenance.ops == std::vector<std::string>{"split"});

    // boundary: single-turn path gets the empty turn appended
    fsp one = chain_fsp({"a"});
    rng64 rng2(3);
    fsp out1 = op_split(one, rng2);
    REQUIRE(out1.turns.size() == 2);
    CHECK(out1.turns[1].functions.empty());
}

TEST_CASE("split position and label are uniform") {
    fsp path = chain_fsp({"a", "b", "c", "d", "e"});
    const int trials = 10000;
    std::map<size_t, int> position_counts;
    int params_label = 0;
    for (int i = 0; i < trials; ++i) {
        rng64 rng(derive_seed(5150, "split", i));
        fsp out = op_split(path, rng);
        size_t pos = *out.miss_index();
        position_counts[pos] += 1;
        params_label += out.turns[pos].miss == miss_label::miss_params ? 1 : 0;
    }
    double sigma_pos = std::sqrt(0.2 * 0.8 / trials);
    for (size_t slot : {1, 2, 3, 4, 5}) {  // after turn h, h in 0..4
        double freq = static_cast<double>(position_counts[slot]) / trials;
        CHECK(std::abs(freq - 0.2) <= 3 * sigma_pos);
    }
    double sigma_label = std::sqrt(0.25 / trials);
    CHECK(std::abs(static_cast<double>(params_label) / trials - 0.5) <= 3 * sigma_label);
}

TEST_CASE("split refuses paths that already have a miss turn") {
    fsp path = chain_fsp({"a"});
    rng64 rng(1);
    fsp once = op_split(path, rng);
    CHECK_THROWS_AS(op_split(once, rng), validation_error);
    CHECK_THROWS_AS(op_split(fsp{}, rng), validation_error);
}

TEST_CASE("enhance with degenerate ops only adds the labeled turn") {
    function_pool pool = pool_of({"a", "b", "c"});
    graph_set graphs = neighbor_graphs({{"a", {"b"}}, {"b", {"c"}}, {"c", {}}});
    const_nested_judge no(false);
    node_ops_config cfg;
    cfg.merge_p = 0.0;
    fsp path = chain_fsp({"a", "b", "c"});
    rng64 rng(8);
    auto [phi, phihat] = enhance(path, graphs, pool, no, cfg, rng);
    CHECK(phi.turns == path.turns);
    CHECK(phi.provenance.ops == std::vector<std::string>{"merge", "insert"});
    CHECK(phihat.turns.size() == 4);
    CHECK(phihat.miss_index().has_value());
    CHECK(phihat.provenance.ops == std::vector<std::string>{"merge", "insert", "split"});
    CHECK(!phi.miss_index().has_value());
}

TEST_CASE("enhance hand-trace: forced merge plus one nested insert") {
    function_pool pool = pool_of({"get_distance", "set_navigation", "convert_unit"});
    graph_set graphs = neighbor_graphs({{"get_distance", {"set_navigation"}},
                                        {"set_navigation", {"convert_unit"}},
                                        {"convert_unit", {}}});
    map_nested_judge judge(std::set<std::pair<std::string, std::string>>{{"set_navigation", "convert_unit"}});
    node_ops_config cfg;
    cfg.merge_p = 1.0;
    cfg.q_long = 0.0;
    fsp path = chain_fsp({"get_distance", "set_navigation"});
    rng64 rng(2);
    auto [phi, phihat] = enhance(path, graphs, pool, judge, cfg, rng);
    // merge makes one turn; insert appends the neighbor of its last function
    REQUIRE(phi.turns.size() == 1);
    CHECK(phi.turns[0].functions ==
          std::vector<function_id>{"get_distance", "set_navigation", "convert_unit"});
    CHECK(multiset_of(phihat) == multiset_of(phi));
    CHECK(phihat.turns.size() == 2);
}
