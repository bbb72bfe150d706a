#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/trajectory.hpp"

namespace fctraj {

struct mixture_config {
    size_t n_single_turn = 0;
    size_t n_multi_turn = 0;
    size_t n_irrelevance = 0;
    uint64_t seed = 0;

    size_t total() const { return n_single_turn + n_multi_turn + n_irrelevance; }
};

// 100 * irrelevance / total, exact.
double mixture_ratio_percent(const mixture_config& cfg);
// Same, rounded half-away-from-zero at one decimal.
double mixture_ratio_rounded(const mixture_config& cfg);

// Permutes system_functions only; everything else byte-identical.
trajectory shuffle_functions(const trajectory& traj, rng64& rng);

struct filter_decision {
    bool keep = true;
    std::string keyword;  // set on drop
    size_t turn_index = 0;

    std::string reason() const;
};

// Drop iff any tool-output payload text contains any keyword (case-sensitive
// substring). Queries and actions are out of scope.
filter_decision keyword_filter(const trajectory& traj, const std::vector<std::string>& keywords);

inline const std::vector<std::string>& default_filter_keywords() {
    static const std::vector<std::string> kws = {"Bad request", "does not match"};
    return kws;
}

struct mixture_manifest {
    mixture_config config;
    std::map<std::string, std::vector<std::string>> selected;  // type -> ids
};

struct mixture_result {
    std::vector<trajectory> dataset;  // globally shuffled
    mixture_manifest manifest;
};

// Exact per-type counts, uniform without replacement. Types: single_turn,
// multi_turn, irrelevance. Throws on an empty mixture or a short pool.
mixture_result mix(const std::map<std::string, std::vector<trajectory>>& datasets,
                   const mixture_config& cfg);

nlohmann::json manifest_to_json(const mixture_manifest& m);

struct dataset_stats {
    std::map<std::string, size_t> per_type;
    std::map<size_t, size_t> turn_histogram;
    std::map<size_t, size_t> fc_histogram;
    size_t total = 0;  // = sum of per_type
};

// A record is anything with a type and shape; pairs count once under their
// own type.
struct stats_record {
    std::string type;
    size_t turns = 0;
    size_t calls = 0;
};

dataset_stats compute_stats(const std::vector<stats_record>& records);
dataset_stats compute_stats(const std::vector<trajectory>& dataset,
                            const std::vector<trajectory_pair>& pairs = {});
nlohmann::json stats_to_json(const dataset_stats& s);

// Irrelevance instances: a query aimed at one function, offered only tools
// from other (category, tool_class) groups, answered by a textual refusal.
std::vector<trajectory> build_irrelevance(const function_pool& pool, size_t count, uint64_t seed);

}  // namespace fctraj
