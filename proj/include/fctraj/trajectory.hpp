#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/translation.hpp"

namespace fctraj {

enum class hint_kind : uint8_t { correct, miss_function, miss_params, misleading };

std::string_view hint_kind_name(hint_kind k);
hint_kind hint_kind_from_name(std::string_view s);

// [Hint] payload: serialized calls for correct/misleading, fixed marker text
// for the miss kinds ("miss function" / "missed params").
struct hint {
    hint_kind kind = hint_kind::correct;
    std::string content;

    bool operator==(const hint&) const = default;
};

// Throws validation_error when the content does not fit the kind.
void validate_hint(const hint& h);

hint correct_hint(const fc_list& calls);
hint misleading_hint(const std::string& calls_text);  // must parse as a call list

struct turn_step {
    std::string action;                // assistant text and/or serialized calls
    std::vector<tool_output> outputs;  // one per call in `action`

    bool operator==(const turn_step&) const = default;
};

struct traj_turn {
    std::string query;  // user text; carries "\n[Hint]: ..." only while sampling
    std::optional<hint> turn_hint;
    std::vector<turn_step> steps;

    // All calls across this turn's actions, in order.
    fc_list actions_calls() const;
    size_t output_count() const;
    bool operator==(const traj_turn&) const = default;
};

enum class polarity : uint8_t { positive, negative };

struct trajectory {
    std::string id;
    std::string type;  // single_turn | multi_turn | irrelevance
    polarity pol = polarity::positive;
    std::vector<function_signature> system_functions;
    std::vector<traj_turn> turns;

    size_t total_calls() const;
    bool contains_hint_marker() const;  // any "[Hint]" substring anywhere
    bool operator==(const trajectory&) const = default;
};

struct trajectory_pair {
    std::string instance_id;
    trajectory chosen;    // positive
    trajectory rejected;  // negative
};

// Chat-format view: system message (system prompt + serialized functions),
// then user/assistant/tool messages per turn.
std::vector<chat_message> render_messages(const trajectory& traj);
// Assistant-message indexes per turn, matching render_messages.
std::vector<std::vector<size_t>> action_spans(const trajectory& traj);

nlohmann::json trajectory_to_json(const trajectory& traj);
trajectory trajectory_from_json(const nlohmann::json& j);
void save_trajectories(const std::vector<trajectory>& xs, const std::filesystem::path& path);
std::vector<trajectory> load_trajectories(const std::filesystem::path& path);

nlohmann::json pair_to_json(const trajectory_pair& p);
trajectory_pair pair_from_json(const nlohmann::json& j);
void save_pairs(const std::vector<trajectory_pair>& xs, const std::filesystem::path& path);
std::vector<trajectory_pair> load_pairs(const std::filesystem::path& path);

}  // namespace fctraj
