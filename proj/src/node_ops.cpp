#include "fctraj/node_ops.hpp"

#include <algorithm>
#include <iostream>

#include <nlohmann/json.hpp>

#include "fctraj/llm_client.hpp"

namespace fctraj {

bool hash_nested_judge::nested(const function_signature& first, const function_signature& second) {
    uint64_t h = mix_seed(seed_, fnv1a64(first.api_name) ^ splitmix64(fnv1a64(second.api_name)));
    return static_cast<double>(h >> 11) * 0x1.0p-53 < density_;
}

llm_nested_judge::llm_nested_judge(chat_backend& backend, int max_retries)
    : backend_(&backend), max_retries_(max_retries) {}

bool llm_nested_judge::nested(const function_signature& first, const function_signature& second) {
    auto messages = render(template_id::nested_judge,
                           {{"first_function", signature_to_json(first).dump(2)},
                            {"second_function", signature_to_json(second).dump(2)}});
    retry_policy policy;
    policy.max_retries = max_retries_;
    std::string reply = complete_with_retry(*backend_, messages, chat_params{}, policy);
    return parse_yes_no_line(reply).first;
}

fsp op_merge(const fsp& path, double p, rng64& rng) {
    if (path.miss_index()) throw validation_error("op_merge: path already has a miss turn");
    if (p < 0.0 || p > 1.0) throw validation_error("op_merge: p outside [0, 1]");
    fsp out;
    out.provenance = path.provenance;
    size_t i = 0;
    while (i < path.turns.size()) {
        if (i + 1 < path.turns.size() && rng.bernoulli(p)) {
            turn_group merged = path.turns[i];
            const auto& next = path.turns[i + 1].functions;
            merged.functions.insert(merged.functions.end(), next.begin(), next.end());
            out.turns.push_back(std::move(merged));
            i += 2;  // a merged turn is not merged again this pass
        } else {
            out.turns.push_back(path.turns[i]);
            i += 1;
        }
    }
    out.provenance.ops.push_back("merge");
    return out;
}

fsp op_insert(const fsp& path, const graph_set& graphs, const function_pool& pool,
              nested_judge& judge, double q_long, rng64& rng) {
    fsp out = path;
    const size_t original_turns = path.turns.size();
    // (insertion index in original coordinates, inserted turn)
    std::vector<std::pair<size_t, turn_group>> deferred;

    for (size_t h = 0; h < original_turns; ++h) {
        const turn_group& turn = path.turns[h];
        if (turn.functions.empty()) continue;
        const function_id& last = turn.functions.back();
        const local_dependency_graph* g = graphs.find(last);
        if (!g) continue;
        const function_signature* last_sig = pool.find(last);
        if (!last_sig) continue;

        const function_id* chosen = nullptr;
        for (const function_id& candidate : g->neighbors) {
            const function_signature* cand_sig = pool.find(candidate);
            if (!cand_sig) continue;
            bool is_nested = false;
            try {
                is_nested = judge.nested(*last_sig, *cand_sig);
            } catch (const std::exception& e) {
                std::cerr << "warning: nested judgment failed at turn " << h << " (" << last
                          << "): " << e.what() << "\n";
                break;  // skip insertion for this turn
            }
            if (is_nested) {
                chosen = &candidate;
                break;
            }
        }
        if (!chosen) continue;

        if (rng.bernoulli(q_long)) {
            // Own turn, uniformly placed strictly after turn h.
            size_t slot = h + 1 + rng.bounded(original_turns - h);
            deferred.emplace_back(slot, turn_group{{*chosen}, miss_label::none});
        } else {
            out.turns[h].functions.push_back(*chosen);
        }
    }

    std::stable_sort(deferred.begin(), deferred.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (auto& [slot, turn] : deferred) {
        out.turns.insert(out.turns.begin() + static_cast<ptrdiff_t>(slot), std::move(turn));
    }
    out.provenance.ops.push_back("insert");
    return out;
}

fsp op_split(const fsp& path, rng64& rng, std::optional<miss_label> force) {
    if (path.turns.empty()) throw validation_error("op_split: empty path");
    if (path.miss_index()) throw validation_error("op_split: path already has a miss turn");
    fsp out = path;
    size_t h = rng.bounded(path.turns.size());
    miss_label label = force ? *force
                             : (rng.bounded(2) == 0 ? miss_label::miss_params
                                                    : miss_label::miss_func);
    turn_group null_turn;
    null_turn.miss = label;
    out.turns.insert(out.turns.begin() + static_cast<ptrdiff_t>(h) + 1, std::move(null_turn));
    out.provenance.ops.push_back("split");
    return out;
}

std::pair<fsp, fsp> enhance(const fsp& path, const graph_set& graphs, const function_pool& pool,
                            nested_judge& judge, const node_ops_config& config, rng64& rng) {
    fsp merged = op_merge(path, config.merge_p, rng);
    fsp enhanced = op_insert(merged, graphs, pool, judge, config.q_long, rng);
    fsp with_miss = op_split(enhanced, rng, config.force_split_label);
    return {std::move(enhanced), std::move(with_miss)};
}

}  // namespace fctraj
