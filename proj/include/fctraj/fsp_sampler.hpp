#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/dependency_graph.hpp"
#include "fctraj/rng.hpp"

namespace fctraj {

enum class miss_label : uint8_t { none, miss_params, miss_func };

std::string_view miss_label_text(miss_label m);  // "miss params" / "miss func"
miss_label miss_label_from_text(std::string_view s);

struct turn_group {
    std::vector<function_id> functions;
    miss_label miss = miss_label::none;  // set <=> functions empty

    bool operator==(const turn_group&) const = default;
};

struct fsp_provenance {
    uint64_t seed = 0;
    function_id start;
    std::vector<std::string> ops;  // applied node ops, in order

    bool operator==(const fsp_provenance&) const = default;
};

struct fsp {
    std::vector<turn_group> turns;
    fsp_provenance provenance;

    std::optional<size_t> miss_index() const;
    // All function ids left to right across turns.
    std::vector<function_id> flatten() const;

    bool operator==(const fsp&) const = default;
};

// Throws validation_error on a malformed path (miss/empty mismatch, more
// than one miss turn).
void validate_fsp(const fsp& path);

// Uniform random walk over out-edges, hopping to each node's own local
// graph; stops early at sinks. turns[0] = {start}; result length is in
// [1, steps + 1], one function per turn.
fsp random_walk(const graph_set& graphs, const function_id& start, size_t steps, rng64& rng);

struct sampler_config {
    size_t steps = 7;
    size_t count = 1;
    size_t min_turns = 2;  // shorter walks are discarded
};

// `count` walks cycling over graph ids in sorted order with per-walk derived
// seeds. Throws validation_error if the attempt cap passes without yield.
std::vector<fsp> sample_fsps(const graph_set& graphs, const sampler_config& config, uint64_t seed);

nlohmann::json fsp_to_json(const fsp& path);
fsp fsp_from_json(const nlohmann::json& j);
void save_fsps(const std::vector<fsp>& paths, const std::filesystem::path& path);
std::vector<fsp> load_fsps(const std::filesystem::path& path);

}  // namespace fctraj
