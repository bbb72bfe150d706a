#include "fctraj/fsp_sampler.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fctraj {

using nlohmann::json;

std::string_view miss_label_text(miss_label m) {
    switch (m) {
        case miss_label::none: return "";
        case miss_label::miss_params: return "miss params";
        case miss_label::miss_func: return "miss func";
    }
    return "";
}

miss_label miss_label_from_text(std::string_view s) {
    if (s == "miss params") return miss_label::miss_params;
    if (s == "miss func") return miss_label::miss_func;
    if (s.empty()) return miss_label::none;
    throw validation_error("unknown miss label '" + std::string(s) + "'");
}

std::optional<size_t> fsp::miss_index() const {
    for (size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].miss != miss_label::none) return i;
    }
    return std::nullopt;
}

std::vector<function_id> fsp::flatten() const {
    std::vector<function_id> out;
    for (const auto& turn : turns) {
        out.insert(out.end(), turn.functions.begin(), turn.functions.end());
    }
    return out;
}

void validate_fsp(const fsp& path) {
    size_t misses = 0;
    for (size_t i = 0; i < path.turns.size(); ++i) {
        const turn_group& turn = path.turns[i];
        bool labeled = turn.miss != miss_label::none;
        if (labeled != turn.functions.empty()) {
            throw validation_error("fsp turn " + std::to_string(i) +
                                   ": miss label and emptiness disagree");
        }
        misses += labeled ? 1 : 0;
    }
    if (misses > 1) throw validation_error("fsp has more than one miss-labeled turn");
}

fsp random_walk(const graph_set& graphs, const function_id& start, size_t steps, rng64& rng) {
    if (!graphs.find(start)) {
        throw validation_error("random_walk: start '" + start + "' has no local graph");
    }
    fsp out;
    out.provenance.start = start;
    out.turns.push_back(turn_group{{start}, miss_label::none});
    function_id current = start;
    for (size_t step = 0; step < steps; ++step) {
        const local_dependency_graph* g = graphs.find(current);
        if (!g || g->edges.empty()) break;  // sink: stop early
        const function_id& next = g->edges[rng.bounded(g->edges.size())];
        out.turns.push_back(turn_group{{next}, miss_label::none});
        current = next;
    }
    return out;
}

std::vector<fsp> sample_fsps(const graph_set& graphs, const sampler_config& config,
                             uint64_t seed) {
    if (graphs.size() == 0) throw validation_error("sample_fsps: empty graph set");
    const std::vector<function_id> starts = graphs.ids();
    std::vector<fsp> out;
    size_t attempts = 0;
    const size_t max_attempts = 64 * std::max<size_t>(config.count, 1);
    for (size_t i = 0; out.size() < config.count; ++i, ++attempts) {
        if (attempts >= max_attempts) {
            throw validation_error("sample_fsps: no walk of length >= " +
                                   std::to_string(config.min_turns) + " after " +
                                   std::to_string(attempts) + " attempts");
        }
        const function_id& start = starts[i % starts.size()];
        uint64_t walk_seed = derive_seed(seed, "walk", i);
        rng64 rng(walk_seed);
        fsp path = random_walk(graphs, start, config.steps, rng);
        path.provenance.seed = walk_seed;
        if (path.turns.size() < config.min_turns) continue;
        out.push_back(std::move(path));
    }
    return out;
}

json fsp_to_json(const fsp& path) {
    json turns = json::array();
    for (const auto& turn : path.turns) turns.push_back(turn.functions);
    json out = {
        {"turns", std::move(turns)},
        {"miss_label_at", nullptr},
        {"label", nullptr},
        {"seed", path.provenance.seed},
        {"provenance", {{"start", path.provenance.start}, {"ops", path.provenance.ops}}},
    };
    if (auto miss = path.miss_index()) {
        out["miss_label_at"] = *miss;
        out["label"] = std::string(miss_label_text(path.turns[*miss].miss));
    }
    return out;
}

fsp fsp_from_json(const json& j) {
    fsp out;
    for (const auto& functions : j.at("turns")) {
        turn_group turn;
        turn.functions = functions.get<std::vector<std::string>>();
        out.turns.push_back(std::move(turn));
    }
    if (j.contains("miss_label_at") && !j.at("miss_label_at").is_null()) {
        size_t at = j.at("miss_label_at").get<size_t>();
        if (at >= out.turns.size()) throw validation_error("miss_label_at out of range");
        out.turns[at].miss = miss_label_from_text(j.at("label").get<std::string>());
    }
    out.provenance.seed = j.value("seed", uint64_t{0});
    if (j.contains("provenance")) {
        const json& p = j.at("provenance");
        out.provenance.start = p.value("start", "");
        if (p.contains("ops")) out.provenance.ops = p.at("ops").get<std::vector<std::string>>();
    }
    validate_fsp(out);
    return out;
}

void save_fsps(const std::vector<fsp>& paths, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write fsp file: " + path.string());
    for (const auto& p : paths) out << fsp_to_json(p).dump() << "\n";
}

std::vector<fsp> load_fsps(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open fsp file: " + path.string());
    std::vector<fsp> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(fsp_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw parse_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace fctraj
