#include "fctraj/trajectory.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace fctraj {

using nlohmann::json;

std::string_view hint_kind_name(hint_kind k) {
    switch (k) {
        case hint_kind::correct: return "correct";
        case hint_kind::miss_function: return "miss_function";
        case hint_kind::miss_params: return "miss_params";
        case hint_kind::misleading: return "misleading";
    }
    return "?";
}

hint_kind hint_kind_from_name(std::string_view s) {
    if (s == "correct") return hint_kind::correct;
    if (s == "miss_function") return hint_kind::miss_function;
    if (s == "miss_params") return hint_kind::miss_params;
    if (s == "misleading") return hint_kind::misleading;
    throw validation_error("unknown hint kind '" + std::string(s) + "'");
}

void validate_hint(const hint& h) {
    switch (h.kind) {
        case hint_kind::miss_function:
            if (h.content != "miss function") {
                throw validation_error("miss_function hint must read 'miss function'");
            }
            return;
        case hint_kind::miss_params:
            if (h.content != "missed params") {
                throw validation_error("miss_params hint must read 'missed params'");
            }
            return;
        case hint_kind::correct:
        case hint_kind::misleading:
            try {
                parse_call_list(h.content);
            } catch (const parse_error& e) {
                throw validation_error(std::string(hint_kind_name(h.kind)) +
                                       " hint does not parse as calls: " + e.what());
            }
            return;
    }
}

hint correct_hint(const fc_list& calls) {
    hint h{hint_kind::correct, serialize_calls(calls)};
    validate_hint(h);
    return h;
}

hint misleading_hint(const std::string& calls_text) {
    hint h{hint_kind::misleading, calls_text};
    validate_hint(h);
    return h;
}

fc_list traj_turn::actions_calls() const {
    fc_list out;
    for (const auto& step : steps) {
        std::string trimmed = step.action;
        size_t b = trimmed.find_first_not_of(" \t\r\n");
        if (b == std::string::npos || trimmed[b] != '[') continue;
        fc_list calls = parse_fc_list(trimmed.substr(b));
        out.calls.insert(out.calls.end(), calls.calls.begin(), calls.calls.end());
    }
    return out;
}

size_t traj_turn::output_count() const {
    size_t n = 0;
    for (const auto& step : steps) n += step.outputs.size();
    return n;
}

size_t trajectory::total_calls() const {
    size_t n = 0;
    for (const auto& turn : turns) n += turn.actions_calls().size();
    return n;
}

bool trajectory::contains_hint_marker() const {
    static const std::string marker = "[Hint]";
    for (const auto& turn : turns) {
        if (turn.query.find(marker) != std::string::npos) return true;
        if (turn.turn_hint) return true;
        for (const auto& step : turn.steps) {
            if (step.action.find(marker) != std::string::npos) return true;
        }
    }
    return false;
}

std::vector<chat_message> render_messages(const trajectory& traj) {
    json functions = json::array();
    for (const auto& sig : traj.system_functions) functions.push_back(signature_to_json(sig));
    std::vector<chat_message> messages =
        render(template_id::system_prompt, {{"functions", functions.dump(2)}});
    for (const auto& turn : traj.turns) {
        std::string user = turn.query;
        if (turn.turn_hint) user += "\n[Hint]: " + turn.turn_hint->content;
        messages.push_back({"user", std::move(user)});
        for (const auto& step : turn.steps) {
            messages.push_back({"assistant", step.action});
            for (const auto& out : step.outputs) {
                messages.push_back({"tool", out.payload_text()});
            }
        }
    }
    return messages;
}

std::vector<std::vector<size_t>> action_spans(const trajectory& traj) {
    std::vector<std::vector<size_t>> spans;
    size_t index = 1;  // message 0 is the system prompt
    for (const auto& turn : traj.turns) {
        ++index;  // user message
        std::vector<size_t> turn_span;
        for (const auto& step : turn.steps) {
            turn_span.push_back(index++);
            index += step.outputs.size();
        }
        spans.push_back(std::move(turn_span));
    }
    return spans;
}

json trajectory_to_json(const trajectory& traj) {
    json turns = json::array();
    for (const auto& turn : traj.turns) {
        json steps = json::array();
        for (const auto& step : turn.steps) {
            json outputs = json::array();
            for (const auto& o : step.outputs) {
                outputs.push_back({{"call", serialize_call(o.call)},
                                   {"payload", o.payload},
                                   {"is_error", o.is_error}});
            }
            steps.push_back({{"action", step.action}, {"outputs", std::move(outputs)}});
        }
        json jturn = {{"query", turn.query}, {"steps", std::move(steps)}};
        if (turn.turn_hint) {
            jturn["hint"] = {{"kind", std::string(hint_kind_name(turn.turn_hint->kind))},
                             {"content", turn.turn_hint->content}};
        } else {
            jturn["hint"] = nullptr;
        }
        turns.push_back(std::move(jturn));
    }
    json functions = json::array();
    for (const auto& sig : traj.system_functions) functions.push_back(signature_to_json(sig));

    json messages = json::array();
    for (const auto& m : render_messages(traj)) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return json{{"id", traj.id},
                {"type", traj.type},
                {"polarity", traj.pol == polarity::positive ? "positive" : "negative"},
                {"system_functions", std::move(functions)},
                {"turns", std::move(turns)},
                {"messages", std::move(messages)},
                {"action_spans", action_spans(traj)}};
}

trajectory trajectory_from_json(const json& j) {
    trajectory traj;
    traj.id = j.at("id").get<std::string>();
    traj.type = j.value("type", "multi_turn");
    traj.pol = j.value("polarity", "positive") == "negative" ? polarity::negative
                                                             : polarity::positive;
    for (const auto& sig : j.at("system_functions")) {
        traj.system_functions.push_back(signature_from_json(sig));
    }
    for (const auto& jturn : j.at("turns")) {
        traj_turn turn;
        turn.query = jturn.at("query").get<std::string>();
        if (jturn.contains("hint") && !jturn.at("hint").is_null()) {
            hint h;
            h.kind = hint_kind_from_name(jturn.at("hint").at("kind").get<std::string>());
            h.content = jturn.at("hint").at("content").get<std::string>();
            turn.turn_hint = std::move(h);
        }
        for (const auto& jstep : jturn.at("steps")) {
            turn_step step;
            step.action = jstep.at("action").get<std::string>();
            for (const auto& o : jstep.value("outputs", json::array())) {
                tool_output out;
                out.call = parse_call_list(o.at("call").get<std::string>()).calls.at(0);
                out.payload = o.at("payload");
                out.is_error = o.value("is_error", false);
                step.outputs.push_back(std::move(out));
            }
            turn.steps.push_back(std::move(step));
        }
        traj.turns.push_back(std::move(turn));
    }
    return traj;
}

void save_trajectories(const std::vector<trajectory>& xs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write trajectory file: " + path.string());
    for (const auto& t : xs) out << trajectory_to_json(t).dump() << "\n";
}

std::vector<trajectory> load_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open trajectory file: " + path.string());
    std::vector<trajectory> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(trajectory_from_json(json::parse(line)));
    }
    return out;
}

json pair_to_json(const trajectory_pair& p) {
    return json{{"instance_id", p.instance_id},
                {"positive", trajectory_to_json(p.chosen)},
                {"negative", trajectory_to_json(p.rejected)}};
}

trajectory_pair pair_from_json(const json& j) {
    trajectory_pair p;
    p.instance_id = j.at("instance_id").get<std::string>();
    p.chosen = trajectory_from_json(j.at("positive"));
    p.rejected = trajectory_from_json(j.at("negative"));
    return p;
}

void save_pairs(const std::vector<trajectory_pair>& xs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write pair file: " + path.string());
    for (const auto& p : xs) out << pair_to_json(p).dump() << "\n";
}

std::vector<trajectory_pair> load_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open pair file: " + path.string());
    std::vector<trajectory_pair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(pair_from_json(json::parse(line)));
    }
    return out;
}

}  // namespace fctraj
