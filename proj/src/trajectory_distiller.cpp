#include "fctraj/trajectory_distiller.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fctraj {

using nlohmann::json;

namespace {

constexpr std::string_view kHintMarker = "[Hint]";

std::string trim(std::string s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::optional<fc_list> try_parse_calls(const std::string& text) {
    try {
        fc_list calls = parse_call_list(text);
        if (calls.empty()) return std::nullopt;
        return calls;
    } catch (const parse_error&) {
        return std::nullopt;
    }
}

// Bracketed action text -> calls; anything else is a verbal action.
std::optional<fc_list> action_calls(const std::string& action) {
    std::string trimmed = trim(action);
    if (trimmed.empty() || trimmed.front() != '[') return std::nullopt;
    try {
        fc_list calls = parse_fc_list(trimmed);
        if (calls.empty()) return std::nullopt;
        return calls;
    } catch (const parse_error&) {
        return std::nullopt;
    }
}

struct conversation_tail {
    size_t last_user = 0;            // index of the last user message
    std::string hint_content;       // empty when the turn carries no hint
    size_t assistant_count = 0;      // assistant messages after the user turn
    std::vector<std::string> tool_contents;
};

conversation_tail scan_tail(const std::vector<chat_message>& messages) {
    conversation_tail tail;
    size_t u = messages.size();
    for (size_t i = messages.size(); i-- > 0;) {
        if (messages[i].role == "user") {
            u = i;
            break;
        }
    }
    if (u == messages.size()) throw protocol_error("conversation has no user message");
    tail.last_user = u;
    const std::string& user = messages[u].content;
    if (size_t pos = user.find("[Hint]: "); pos != std::string::npos) {
        tail.hint_content = user.substr(pos + 8);
        if (!tail.hint_content.empty() && tail.hint_content.back() == '\n') {
            tail.hint_content.pop_back();
        }
    }
    for (size_t i = u + 1; i < messages.size(); ++i) {
        if (messages[i].role == "assistant") ++tail.assistant_count;
        if (messages[i].role == "tool") tail.tool_contents.push_back(messages[i].content);
    }
    return tail;
}

std::string summarize_tools(const std::vector<std::string>& tool_contents) {
    if (tool_contents.empty()) return "Nothing needed a call here; all set.";
    std::ostringstream os;
    os << "All set. Here is what came back: ";
    for (size_t i = 0; i < tool_contents.size(); ++i) {
        std::string part = tool_contents[i];
        if (part.size() > 64) part = part.substr(0, 64) + "...";
        os << (i ? "; " : "") << part;
    }
    os << ".";
    return os.str();
}

// Shared hint-following behavior for the teacher double and for students
// sampling with misleading hints.
std::optional<std::string> follow_hint_reply(const std::vector<chat_message>& messages,
                                             bool substep_split) {
    conversation_tail tail = scan_tail(messages);
    if (tail.hint_content.empty()) return std::nullopt;
    if (tail.hint_content == "miss function") {
        return "I cannot complete this step: the capability it needs is not available with the "
               "current tools. Please provide it or adjust the request.";
    }
    if (tail.hint_content == "missed params") {
        return "Could you share the missing required information for this request?";
    }
    std::optional<fc_list> calls = try_parse_calls(tail.hint_content);
    if (!calls) return "I could not determine a valid call for this turn.";
    if (substep_split) {
        size_t executed = tail.tool_contents.size();
        if (executed < calls->size()) return "[" + serialize_call(calls->calls[executed]) + "]";
        return summarize_tools(tail.tool_contents);
    }
    if (tail.assistant_count == 0) return serialize_fc_list(*calls);
    return summarize_tools(tail.tool_contents);
}

}  // namespace

std::string hint_following_backend::complete(const std::vector<chat_message>& messages,
                                             const chat_params&) {
    if (auto reply = follow_hint_reply(messages, substep_split_)) return *reply;
    return "I do not have enough guidance to proceed here.";
}

scripted_student_backend::scripted_student_backend(const translation_instance& inst,
                                                   uint64_t seed, double wrong_rate)
    : seed_(seed), wrong_rate_(wrong_rate) {
    for (const auto& turn : inst.turns) reference_.push_back(turn.hint_reference);
}

std::string scripted_student_backend::complete(const std::vector<chat_message>& messages,
                                               const chat_params& params) {
    // With hints present (negative sampling) the student follows them.
    if (auto reply = follow_hint_reply(messages, /*substep_split=*/false)) return *reply;

    conversation_tail tail = scan_tail(messages);
    size_t turn = 0;
    for (size_t i = 0; i <= tail.last_user; ++i) {
        if (messages[i].role == "user") ++turn;
    }
    if (turn == 0 || turn > reference_.size()) {
        return "I am not sure how to act on this turn.";
    }
    const std::string& reference = reference_[turn - 1];
    uint64_t h = mix_seed(seed_, splitmix64(params.seed) ^ (turn * 0x9e37ull));
    bool wrong = static_cast<double>(h >> 11) * 0x1.0p-53 < wrong_rate_;

    std::optional<fc_list> ref_calls = try_parse_calls(reference);
    if (!ref_calls) {
        // Reference expects a textual turn (missing info).
        if (wrong) return "[guess_helper(value=\"unknown\")]";
        return reference == "miss function"
                   ? "That capability does not seem to be available right now."
                   : "Could you give me the missing detail first?";
    }
    if (tail.assistant_count > 0) return summarize_tools(tail.tool_contents);
    if (!wrong) return serialize_fc_list(*ref_calls);

    fc_list corrupted = *ref_calls;
    if (corrupted.size() > 1 && (h & 1)) {
        corrupted.calls.pop_back();  // forgot the nested follow-up call
    } else if (!corrupted.calls.front().args.empty()) {
        corrupted.calls.front().args.front().second =
            fc_value::of(std::string("wrong_") + std::to_string(h % 9973));
    } else {
        corrupted.calls.front().args.emplace_back("value", fc_value::of(std::string("guess")));
    }
    return serialize_fc_list(corrupted);
}

std::string comparing_judge_backend::complete(const std::vector<chat_message>& messages,
                                              const chat_params&) {
    if (messages.empty()) throw protocol_error("judge got an empty prompt");
    const std::string& prompt = messages.back().content;
    size_t m = prompt.find("Model response:\n");
    size_t r = prompt.find("Reference response:\n");
    if (m == std::string::npos || r == std::string::npos || r < m) {
        throw protocol_error("judge prompt is missing its sections");
    }
    std::string model = trim(prompt.substr(m + 16, r - (m + 16)));
    std::string reference = trim(prompt.substr(r + 20));

    std::optional<fc_list> mp = try_parse_calls(model);
    std::optional<fc_list> rp = try_parse_calls(reference);
    if (mp && rp) {
        if (serialize_calls(*mp) == serialize_calls(*rp)) return "yes\nthe calls match";
        return "no\n2";
    }
    if (mp.has_value() != rp.has_value()) return "no\n5";
    if (model == reference) return "yes\nidentical text";
    return "no\n4";
}

hinted_conversation inject_hints(const translation_instance& inst, const function_pool& pool) {
    return inject_hints(inst, pool, {});
}

hinted_conversation inject_hints(const translation_instance& inst, const function_pool& pool,
                                 const std::map<size_t, hint>& overrides) {
    if (inst.turns.empty()) throw validation_error("inject_hints: instance has no turns");
    hinted_conversation conv;
    conv.source = &inst;
    for (const auto& id : inst.tools) conv.system_functions.push_back(pool.at(id));
    for (size_t h = 0; h < inst.turns.size(); ++h) {
        const query_fc_turn& turn = inst.turns[h];
        hint turn_hint;
        if (auto it = overrides.find(h); it != overrides.end()) {
            turn_hint = it->second;
        } else if (turn.miss == miss_label::miss_func) {
            turn_hint = hint{hint_kind::miss_function, "miss function"};
        } else if (turn.miss == miss_label::miss_params) {
            turn_hint = hint{hint_kind::miss_params, "missed params"};
        } else {
            turn_hint = hint{hint_kind::correct, serialize_calls(turn.reference_calls)};
        }
        validate_hint(turn_hint);
        conv.user_messages.push_back(turn.query + "\n[Hint]: " + turn_hint.content);
        conv.hints.emplace_back(std::move(turn_hint));
    }
    return conv;
}

hinted_conversation plain_conversation(const translation_instance& inst,
                                       const function_pool& pool) {
    if (inst.turns.empty()) throw validation_error("plain_conversation: instance has no turns");
    hinted_conversation conv;
    conv.source = &inst;
    for (const auto& id : inst.tools) conv.system_functions.push_back(pool.at(id));
    for (const auto& turn : inst.turns) {
        conv.user_messages.push_back(turn.query);
        conv.hints.emplace_back(std::nullopt);
    }
    return conv;
}

trajectory sample_trajectory(chat_backend& model, const hinted_conversation& conversation,
                             executor& exec, const function_pool& pool,
                             const distill_config& config, polarity pol, uint64_t rollout_seed) {
    if (!conversation.source) throw validation_error("sample_trajectory: conversation lost its source");
    const translation_instance& inst = *conversation.source;

    trajectory traj;
    traj.id = inst.id;
    traj.type = inst.turns.size() == 1 ? "single_turn" : "multi_turn";
    traj.pol = pol;
    traj.system_functions = conversation.system_functions;

    json functions = json::array();
    for (const auto& sig : traj.system_functions) functions.push_back(signature_to_json(sig));
    std::vector<chat_message> messages =
        render(template_id::positive_distill, {{"functions", functions.dump(2)}});
    chat_params params;
    params.seed = rollout_seed;

    for (size_t h = 0; h < conversation.user_messages.size(); ++h) {
        messages.push_back({"user", conversation.user_messages[h]});
        traj_turn turn;
        turn.query = inst.turns[h].query;
        turn.turn_hint = conversation.hints[h];

        for (size_t sub = 0; sub < config.max_substeps; ++sub) {
            std::string action;
            bool clean = false;
            for (int attempt = 0; attempt <= config.retries; ++attempt) {
                action = complete_with_retry(model, messages, params,
                                             retry_policy{config.retries,
                                                          std::chrono::milliseconds{0}});
                if (action.find(kHintMarker) == std::string::npos) {
                    clean = true;
                    break;
                }
            }
            if (!clean) throw protocol_error("model action leaked the hint marker");
            messages.push_back({"assistant", action});
            turn_step step;
            step.action = action;

            std::optional<fc_list> calls = action_calls(action);
            if (!calls) {
                turn.steps.push_back(std::move(step));
                break;  // verbal action ends the turn
            }
            for (const function_call& fc : calls->calls) {
                tool_output out;
                const function_signature* sig = pool.find(fc.name);
                if (sig && validate_args(fc, *sig).ok()) {
                    out = exec.execute(fc, *sig);
                } else {
                    out.call = fc;
                    out.is_error = true;
                    out.payload = sig ? "Error: invalid call arguments (schema violation)"
                                      : "Error: no function named '" + fc.name + "' is available";
                }
                messages.push_back({"tool", out.payload_text()});
                step.outputs.push_back(std::move(out));
            }
            turn.steps.push_back(std::move(step));
        }
        traj.turns.push_back(std::move(turn));
    }
    return traj;
}

trajectory sample_positive(chat_backend& teacher, const hinted_conversation& conversation,
                           executor& exec, const function_pool& pool,
                           const distill_config& config) {
    trajectory traj = sample_trajectory(teacher, conversation, exec, pool, config,
                                        polarity::positive);
    traj.id += "#pos";
    return traj;
}

turn_judgement judge_turn(chat_backend& judge, const std::string& conversation,
                          const std::string& model_action, const std::string& reference_action) {
    auto messages = render(template_id::negative_judge, {{"conversation", conversation},
                                                         {"model_response", model_action},
                                                         {"reference_response", reference_action}});
    std::string reply = complete_with_retry(judge, messages, chat_params{},
                                            retry_policy{2, std::chrono::milliseconds{0}});
    try {
        auto [correct, rest] = parse_yes_no_line(reply);
        turn_judgement out;
        out.correct = correct;
        if (!correct) {
            size_t d = rest.find_first_of("0123456789");
            if (d == std::string::npos) throw protocol_error("no error number after 'no'");
            int type = rest[d] - '0';
            if (type < 1 || type > 5) throw protocol_error("error type out of range 1..5");
            out.error_type = type;
        }
        return out;
    } catch (const protocol_error& e) {
        throw judgment_error(std::string("judge protocol violation: ") + e.what());
    }
}

std::map<size_t, std::vector<std::string>> mine_negative_hints(
    chat_backend& student, const translation_instance& inst, chat_backend& judge, executor& exec,
    const function_pool& pool, size_t k, const distill_config& config) {
    if (k == 0) throw validation_error("mine_negative_hints: k must be >= 1");
    std::map<size_t, std::vector<std::string>> mined;
    hinted_conversation plain = plain_conversation(inst, pool);

    for (size_t r = 0; r < k; ++r) {
        uint64_t rollout_seed = derive_seed(fnv1a64(inst.id), "rollout", r);
        trajectory rollout;
        try {
            rollout = sample_trajectory(student, plain, exec, pool, config, polarity::negative,
                                        rollout_seed);
        } catch (const std::exception&) {
            continue;  // lost coverage, never fatal
        }
        std::ostringstream conv_text;
        for (size_t h = 0; h < rollout.turns.size() && h < inst.turns.size(); ++h) {
            const traj_turn& turn = rollout.turns[h];
            conv_text << "user: " << inst.turns[h].query << "\n";
            std::string model_action = turn.steps.empty() ? "" : turn.steps.front().action;
            try {
                turn_judgement verdict =
                    judge_turn(judge, conv_text.str(), model_action, inst.turns[h].hint_reference);
                if (!verdict.correct) {
                    if (auto calls = try_parse_calls(model_action)) {
                        mined[h].push_back(serialize_calls(*calls));
                    }
                }
            } catch (const judgment_error&) {
                // skip this turn for mining
            }
            for (const auto& step : turn.steps) {
                conv_text << "assistant: " << step.action << "\n";
                for (const auto& out : step.outputs) {
                    conv_text << "tool: " << out.payload_text() << "\n";
                }
            }
        }
    }
    return mined;
}

trajectory sample_negative(chat_backend& student, const translation_instance& inst,
                           const std::map<size_t, std::vector<std::string>>& mined, executor& exec,
                           const function_pool& pool, const distill_config& config) {
    if (mined.empty()) throw validation_error("sample_negative: no mined hints");
    std::map<size_t, hint> overrides;
    for (const auto& [turn, texts] : mined) {
        if (texts.empty()) continue;
        overrides.emplace(turn, misleading_hint(texts.front()));
        if (config.negative_selection == distill_config::negative_selection_t::first_turn) break;
    }
    if (overrides.empty()) throw validation_error("sample_negative: no usable mined hints");
    hinted_conversation conv = inject_hints(inst, pool, overrides);
    trajectory traj =
        sample_trajectory(student, conv, exec, pool, config, polarity::negative);
    traj.id += "#neg";
    return traj;
}

trajectory strip_hints(const trajectory& traj) {
    trajectory out = traj;
    for (auto& turn : out.turns) {
        if (size_t pos = turn.query.find("[Hint]:"); pos != std::string::npos) {
            turn.query.resize(pos);
            while (!turn.query.empty() &&
                   std::isspace(static_cast<unsigned char>(turn.query.back()))) {
                turn.query.pop_back();
            }
        }
        turn.turn_hint.reset();
    }
    return out;
}

distill_outcome distill_instance(const translation_instance& inst, const function_pool& pool,
                                 chat_backend& teacher, chat_backend* student,
                                 chat_backend* judge, executor& exec,
                                 const distill_config& config) {
    distill_outcome outcome;
    trajectory positive;
    try {
        hinted_conversation conv = inject_hints(inst, pool);
        positive = sample_positive(teacher, conv, exec, pool, config);
        positive = strip_hints(positive);
        if (positive.contains_hint_marker()) {
            outcome.drop_reason = "hint marker survived stripping";
            return outcome;
        }
    } catch (const std::exception& e) {
        outcome.drop_reason = e.what();
        return outcome;
    }
    outcome.positive = positive;

    if (!student || !judge || config.rollouts == 0) return outcome;
    outcome.mined = mine_negative_hints(*student, inst, *judge, exec, pool, config.rollouts,
                                        config);
    if (outcome.mined.empty()) return outcome;
    try {
        trajectory negative =
            strip_hints(sample_negative(*student, inst, outcome.mined, exec, pool, config));
        if (negative.contains_hint_marker()) return outcome;
        // A valid pair keeps the queries identical and differs in >=1 action.
        bool queries_match = negative.turns.size() == positive.turns.size();
        bool differs = false;
        for (size_t h = 0; queries_match && h < negative.turns.size(); ++h) {
            if (negative.turns[h].query != positive.turns[h].query) {
                queries_match = false;
                break;
            }
            size_t steps = std::max(negative.turns[h].steps.size(),
                                    positive.turns[h].steps.size());
            for (size_t s = 0; s < steps; ++s) {
                std::string a =
                    s < negative.turns[h].steps.size() ? negative.turns[h].steps[s].action : "";
                std::string b =
                    s < positive.turns[h].steps.size() ? positive.turns[h].steps[s].action : "";
                if (a != b) differs = true;
            }
        }
        if (queries_match && differs) {
            outcome.pair = trajectory_pair{inst.id, positive, std::move(negative)};
        }
    } catch (const std::exception&) {
        // keep the positive even when the negative fails
    }
    return outcome;
}

}  // namespace fctraj
