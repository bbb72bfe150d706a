#include "fctraj/postprocess_mixture.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace fctraj {

using nlohmann::json;

double mixture_ratio_percent(const mixture_config& cfg) {
    if (cfg.total() == 0) throw validation_error("empty mixture");
    return 100.0 * static_cast<double>(cfg.n_irrelevance) / static_cast<double>(cfg.total());
}

double mixture_ratio_rounded(const mixture_config& cfg) {
    return std::round(mixture_ratio_percent(cfg) * 10.0) / 10.0;
}

trajectory shuffle_functions(const trajectory& traj, rng64& rng) {
    if (traj.system_functions.empty()) {
        throw validation_error("shuffle_functions: no system functions");
    }
    trajectory out = traj;
    rng.shuffle(out.system_functions);
    return out;
}

std::string filter_decision::reason() const {
    if (keep) return "keep";
    return "drop(\"" + keyword + "\", turn " + std::to_string(turn_index) + ")";
}

filter_decision keyword_filter(const trajectory& traj,
                               const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw validation_error("keyword_filter: empty keyword list");
    for (size_t h = 0; h < traj.turns.size(); ++h) {
        for (const auto& step : traj.turns[h].steps) {
            for (const auto& out : step.outputs) {
                std::string text = out.payload_text();
                for (const auto& kw : keywords) {
                    if (text.find(kw) != std::string::npos) {
                        return filter_decision{false, kw, h};
                    }
                }
            }
        }
    }
    return filter_decision{};
}

mixture_result mix(const std::map<std::string, std::vector<trajectory>>& datasets,
                   const mixture_config& cfg) {
    if (cfg.total() == 0) throw validation_error("empty mixture");
    const std::array<std::pair<std::string, size_t>, 3> wanted = {{
        {"single_turn", cfg.n_single_turn},
        {"multi_turn", cfg.n_multi_turn},
        {"irrelevance", cfg.n_irrelevance},
    }};
    mixture_result result;
    result.manifest.config = cfg;
    rng64 rng(cfg.seed);
    for (const auto& [type, count] : wanted) {
        if (count == 0) continue;
        auto it = datasets.find(type);
        size_t available = it == datasets.end() ? 0 : it->second.size();
        if (available < count) {
            throw validation_error("mix: need " + std::to_string(count) + " " + type +
                                   " but only " + std::to_string(available) + " available");
        }
        std::vector<size_t> order(available);
        for (size_t i = 0; i < available; ++i) order[i] = i;
        rng.shuffle(order);
        auto& ids = result.manifest.selected[type];
        for (size_t i = 0; i < count; ++i) {
            const trajectory& chosen = it->second[order[i]];
            result.dataset.push_back(chosen);
            ids.push_back(chosen.id);
        }
    }
    rng.shuffle(result.dataset);
    return result;
}

json manifest_to_json(const mixture_manifest& m) {
    return json{{"config",
                 {{"single_turn", m.config.n_single_turn},
                  {"multi_turn", m.config.n_multi_turn},
                  {"irrelevance", m.config.n_irrelevance}}},
                {"seed", m.config.seed},
                {"irrelevance_ratio_percent", mixture_ratio_rounded(m.config)},
                {"selected", m.selected}};
}

dataset_stats compute_stats(const std::vector<stats_record>& records) {
    if (records.empty()) throw validation_error("compute_stats: empty dataset");
    dataset_stats s;
    for (const auto& r : records) {
        s.per_type[r.type] += 1;
        s.turn_histogram[r.turns] += 1;
        s.fc_histogram[r.calls] += 1;
        s.total += 1;
    }
    size_t sum = 0;
    for (const auto& [_, n] : s.per_type) sum += n;
    if (sum != s.total) throw validation_error("compute_stats: totals identity violated");
    return s;
}

dataset_stats compute_stats(const std::vector<trajectory>& dataset,
                            const std::vector<trajectory_pair>& pairs) {
    std::vector<stats_record> records;
    records.reserve(dataset.size() + pairs.size());
    for (const auto& t : dataset) {
        records.push_back({t.type, t.turns.size(), t.total_calls()});
    }
    for (const auto& p : pairs) {
        records.push_back(
            {"preference_pair", p.chosen.turns.size(), p.chosen.total_calls()});
    }
    return compute_stats(records);
}

json stats_to_json(const dataset_stats& s) {
    auto hist = [](const std::map<size_t, size_t>& h) {
        json out = json::object();
        for (const auto& [k, v] : h) out[std::to_string(k)] = v;
        return out;
    };
    return json{{"per_type", s.per_type},
                {"turn_histogram", hist(s.turn_histogram)},
                {"fc_histogram", hist(s.fc_histogram)},
                {"total", s.total}};
}

std::vector<trajectory> build_irrelevance(const function_pool& pool, size_t count,
                                          uint64_t seed) {
    std::vector<trajectory> out;
    if (count == 0) return out;
    const auto ids = pool.ids();
    rng64 rng(derive_seed(seed, "irrelevance"));
    size_t attempts = 0;
    const size_t max_attempts = 64 * count + 64;
    for (size_t i = 0; out.size() < count; ++i) {
        if (++attempts > max_attempts) {
            throw validation_error("build_irrelevance: pool has no cross-group material");
        }
        const function_signature& target = pool.at(ids[i % ids.size()]);
        // Tools drawn from groups the target does not belong to.
        std::vector<function_id> foreign;
        for (const auto& id : ids) {
            const function_signature& sig = pool.at(id);
            if (sig.category != target.category || sig.tool_class != target.tool_class) {
                foreign.push_back(id);
            }
        }
        if (foreign.empty()) continue;
        std::vector<function_id> chosen = rng.sample(foreign, 4);

        trajectory traj;
        traj.id = "irrelevance-" + std::to_string(out.size());
        traj.type = "irrelevance";
        traj.pol = polarity::positive;
        for (const auto& id : chosen) traj.system_functions.push_back(pool.at(id));

        traj_turn turn;
        turn.query = "Please " +
                     (target.api_description.empty() ? target.api_name : target.api_description) +
                     ".";
        turn_step step;
        step.action =
            "None of the available functions can handle this request, so I cannot proceed with "
            "a call. Could you provide a tool for it or rephrase?";
        turn.steps.push_back(std::move(step));
        traj.turns.push_back(std::move(turn));
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace fctraj
