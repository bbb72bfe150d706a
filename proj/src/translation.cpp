#include "fctraj/translation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace fctraj {

using nlohmann::json;

std::string tool_output::payload_text() const {
    return payload.is_string() ? payload.get<std::string>() : payload.dump();
}

size_t translation_instance::total_calls() const {
    size_t n = 0;
    for (const auto& t : turns) n += t.reference_calls.size();
    return n;
}

namespace {

std::string hex_of(uint64_t h, int digits) {
    static const char* alphabet = "0123456789abcdef";
    std::string out(digits, '0');
    for (int i = digits - 1; i >= 0; --i) {
        out[i] = alphabet[h & 0xf];
        h >>= 4;
    }
    return out;
}

uint64_t param_hash(uint64_t seed, std::string_view api, std::string_view param) {
    return mix_seed(seed, fnv1a64(api) ^ splitmix64(fnv1a64(param)));
}

}  // namespace

std::string placeholder_text(uint64_t seed, std::string_view api, std::string_view param) {
    return std::string(param) + "_" + hex_of(param_hash(seed, api, param), 4);
}

fc_value placeholder_value(uint64_t seed, const function_signature& sig,
                           const std::string& param) {
    uint64_t h = param_hash(seed, sig.api_name, param);
    auto it = sig.parameters.properties.find(param);
    const std::string type = it == sig.parameters.properties.end() ? "string" : it->second.type;
    if (type == "integer") return fc_value::of(static_cast<int64_t>(1 + h % 97));
    if (type == "number") return fc_value::of(static_cast<double>(h % 1000) / 4.0);
    if (type == "boolean") return fc_value::of((h & 1) == 1);
    if (type == "array") {
        return fc_value::of(std::vector<fc_value>{
            fc_value::of(placeholder_text(seed, sig.api_name, param))});
    }
    return fc_value::of(placeholder_text(seed, sig.api_name, param));
}

tool_output simulated_executor::execute(const function_call& fc, const function_signature& sig) {
    tool_output out;
    out.call = fc;
    const std::string canon = serialize_call(fc);
    const uint64_t h = mix_seed(config_.seed, fnv1a64(canon));

    if (config_.error_rate > 0.0 && !config_.error_keywords.empty()) {
        double u = static_cast<double>(mix_seed(h, 0x6e72) >> 11) * 0x1.0p-53;
        if (u < config_.error_rate) {
            const std::string& keyword = config_.error_keywords[h % config_.error_keywords.size()];
            out.is_error = true;
            out.payload = keyword + ": simulated failure for " + fc.name + " (code " +
                          hex_of(h, 4) + ")";
            return out;
        }
    }

    // Field names come from identifier-ish tokens of response_info.
    static const std::set<std::string> stopwords = {"the", "and", "for", "with", "that",
                                                    "this", "from", "info", "are",  "is"};
    std::vector<std::string> fields;
    std::string token;
    for (char c : sig.response_info + " ") {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!token.empty()) {
            if (token.size() >= 3 && !stopwords.count(token) &&
                std::find(fields.begin(), fields.end(), token) == fields.end()) {
                fields.push_back(token);
            }
            token.clear();
            if (fields.size() == 3) break;
        }
    }
    if (fields.empty()) fields.push_back("result");

    json field_values = json::object();
    for (size_t i = 0; i < fields.size(); ++i) {
        field_values[fields[i]] = fields[i] + "_" + hex_of(mix_seed(h, i + 1), 4);
    }
    out.payload = json{{"api", fc.name},
                       {"output", fc.name + "_out_" + hex_of(h, 8)},
                       {"fields", std::move(field_values)}};
    return out;
}

forth_answer parse_forth_reply(const std::string& raw) {
    std::istringstream is(raw);
    std::string line;
    bool answer_seen = false;
    std::string payload;
    while (std::getline(is, line)) {
        size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t\r");
        std::string trimmed = line.substr(b, e - b + 1);
        if (!answer_seen) {
            if (trimmed.rfind("Answer:", 0) == 0) {
                answer_seen = true;
                payload = trimmed.substr(7);
                size_t pb = payload.find_first_not_of(" \t");
                payload = pb == std::string::npos ? "" : payload.substr(pb);
                if (!payload.empty()) break;
            }
            continue;
        }
        payload = trimmed;  // answer on the line after "Answer:"
        break;
    }
    if (!answer_seen) throw parse_error("forth reply has no Answer: line");
    if (payload.empty()) throw parse_error("forth reply has an empty answer");
    forth_answer out;
    if (payload == "FINISH") {
        out.finish = true;
        return out;
    }
    out.calls = parse_call_list(payload);
    return out;
}

// -------- mock_translation_backend --------

namespace {

// Previous turn's primary output value, if it can thread into a string param.
std::optional<std::string> threadable_output(const std::vector<query_fc_turn>& history) {
    if (history.empty()) return std::nullopt;
    const query_fc_turn& prev = history.back();
    if (prev.outputs.empty()) return std::nullopt;
    const tool_output& first = prev.outputs.front();
    if (first.is_error || !first.payload.is_object()) return std::nullopt;
    auto it = first.payload.find("output");
    if (it == first.payload.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
}

bool is_string_param(const function_signature& sig, const std::string& param) {
    auto it = sig.parameters.properties.find(param);
    return it == sig.parameters.properties.end() || it->second.type == "string" ||
           it->second.type == "object";
}

std::string describe_capability(const function_signature& sig) {
    return sig.api_description.empty() ? sig.api_name : sig.api_description;
}

}  // namespace

fc_list mock_translation_backend::reference_calls(const turn_context& ctx) {
    fc_list out;
    if (ctx.miss != miss_label::none) return out;
    std::optional<std::string> threaded =
        ctx.history ? threadable_output(*ctx.history) : std::nullopt;
    std::map<std::string, size_t> seen;
    for (const function_signature* sig : ctx.functions) {
        size_t ordinal = seen[sig->api_name]++;
        uint64_t seed = ordinal == 0 ? ctx.instance_seed
                                     : mix_seed(ctx.instance_seed, 0xca11 + ordinal);
        function_call fc;
        fc.name = sig->api_name;
        bool first_param = true;
        for (const std::string& param : sig->parameters.required) {
            if (first_param && out.calls.empty() && threaded && is_string_param(*sig, param)) {
                fc.args.emplace_back(param, fc_value::of(*threaded));
            } else {
                fc.args.emplace_back(param, placeholder_value(seed, *sig, param));
            }
            first_param = false;
        }
        out.calls.push_back(std::move(fc));
    }
    return out;
}

std::string mock_translation_backend::back_translate(const turn_context& ctx) {
    std::ostringstream os;
    if (ctx.miss == miss_label::miss_params) {
        const function_signature* target = ctx.miss_target;
        if (!target) return "Could you take care of the next step? I am missing some details.";
        const auto& required = target->parameters.required;
        os << "I would like to " << describe_capability(*target) << ".";
        if (!required.empty()) {
            const std::string omitted = required.back();
            for (size_t i = 0; i + 1 < required.size(); ++i) {
                os << " The " << required[i] << " is \""
                   << placeholder_text(ctx.instance_seed, target->api_name, required[i]) << "\".";
            }
            os << " I cannot recall the " << omitted << " right now.";
        } else {
            os << " I am not sure about the details yet.";
        }
        return os.str();
    }
    if (ctx.miss == miss_label::miss_func) {
        const function_signature* target = ctx.miss_target;
        if (!target) return "Please handle the next step for me.";
        os << "Now please " << describe_capability(*target) << ".";
        return os.str();
    }

    if (ctx.resume_target) {
        const function_signature* target = ctx.resume_target;
        if (!target->parameters.required.empty()) {
            const std::string& omitted = target->parameters.required.back();
            os << "Sorry about that, the " << omitted << " is \""
               << placeholder_text(ctx.instance_seed, target->api_name, omitted)
               << "\". Please go ahead.";
            return os.str();
        }
    }

    fc_list calls = reference_calls(ctx);
    os << (ctx.turn_index == 0 ? "Please " : "Next, please ");
    for (size_t i = 0; i < calls.calls.size(); ++i) {
        const function_call& fc = calls.calls[i];
        const function_signature* sig = ctx.functions[i];
        if (i) os << ", and then ";
        os << "take care of " << describe_capability(*sig);
        std::optional<std::string> threaded =
            ctx.history ? threadable_output(*ctx.history) : std::nullopt;
        for (const auto& [param, value] : fc.args) {
            if (threaded && value.k == fc_value::kind::string && value.s == *threaded) {
                os << ", reusing the result you just obtained as the " << param;
            } else {
                os << ", with " << param << " being " << serialize_value(value);
            }
        }
    }
    os << ".";
    return os.str();
}

std::string mock_translation_backend::forth_translate(const turn_context& ctx) {
    std::optional<size_t> read_turn;
    if (ctx.history && threadable_output(*ctx.history)) {
        read_turn = ctx.history->size() - 1;
    }
    access_log_.emplace_back(ctx.turn_index, read_turn);
    fc_list calls = reference_calls(ctx);
    if (calls.empty()) return "Thought: nothing can be called.\nAnswer: FINISH";
    return "Thought: fill the parameters from the query and the previous outputs.\nAnswer: " +
           serialize_calls(calls);
}

// -------- translate_fsp --------

namespace {

std::vector<function_id> union_tools(const fsp& path) {
    std::vector<function_id> tools;
    for (const auto& turn : path.turns) {
        for (const auto& id : turn.functions) {
            if (std::find(tools.begin(), tools.end(), id) == tools.end()) tools.push_back(id);
        }
    }
    return tools;
}

const function_signature* first_function_after(const fsp& path, size_t h,
                                               const function_pool& pool) {
    for (size_t j = h + 1; j < path.turns.size(); ++j) {
        if (!path.turns[j].functions.empty()) return pool.find(path.turns[j].functions.front());
    }
    for (size_t j = h; j-- > 0;) {
        if (!path.turns[j].functions.empty()) return pool.find(path.turns[j].functions.back());
    }
    return nullptr;
}

}  // namespace

translate_result translate_fsp(const fsp& path, const function_pool& pool,
                               translation_backend& backend, executor& exec,
                               const translate_config& config) {
    validate_fsp(path);
    translation_instance inst;
    inst.id = "fsp-" + std::to_string(path.provenance.seed);
    inst.source_fsp_seed = path.provenance.seed;
    inst.provenance = path.provenance;
    inst.tools = union_tools(path);

    auto dropped = [&](std::string reason) {
        translate_result r;
        r.drop_reason = std::move(reason);
        return r;
    };

    bool finished_early = false;
    for (size_t h = 0; h < path.turns.size() && !finished_early; ++h) {
        const turn_group& tg = path.turns[h];
        turn_context ctx;
        ctx.turn_index = h;
        ctx.history = &inst.turns;
        ctx.instance_seed = path.provenance.seed;
        ctx.miss = tg.miss;

        if (tg.miss != miss_label::none) {
            query_fc_turn turn;
            turn.miss = tg.miss;
            turn.tools = inst.tools;
            ctx.miss_target = first_function_after(path, h, pool);
            if (!ctx.miss_target) return dropped("miss turn has no target function");
            if (tg.miss == miss_label::miss_func && h + 1 < path.turns.size()) {
                // The capability asked about is withheld from this turn.
                for (const auto& withheld : path.turns[h + 1].functions) {
                    turn.tools.erase(std::remove(turn.tools.begin(), turn.tools.end(), withheld),
                                     turn.tools.end());
                }
            }
            try {
                turn.query = backend.back_translate(ctx);
            } catch (const std::exception& e) {
                return dropped(std::string("back-translation failed: ") + e.what());
            }
            turn.hint_reference =
                tg.miss == miss_label::miss_func ? "miss function" : "missed params";
            inst.turns.push_back(std::move(turn));
            continue;
        }

        ctx.functions.clear();
        for (const auto& id : tg.functions) {
            const function_signature* sig = pool.find(id);
            if (!sig) return dropped("unknown function '" + id + "' in path");
            ctx.functions.push_back(sig);
        }
        if (h > 0 && path.turns[h - 1].miss == miss_label::miss_params) {
            ctx.resume_target = ctx.functions.front();
        }

        query_fc_turn turn;
        turn.tools = inst.tools;
        try {
            turn.query = backend.back_translate(ctx);
        } catch (const std::exception& e) {
            return dropped(std::string("back-translation failed: ") + e.what());
        }
        ctx.query = turn.query;

        int backend_budget = config.backend_retries;
        int validation_budget = config.validation_retries;
        std::string failure;
        for (;;) {
            std::string raw;
            try {
                raw = backend.forth_translate(ctx);
            } catch (const std::exception& e) {
                failure = std::string("forth-translation transport: ") + e.what();
                if (backend_budget-- > 0) continue;
                return dropped(failure);
            }
            forth_answer ans;
            try {
                ans = parse_forth_reply(raw);
            } catch (const parse_error& e) {
                failure = std::string("forth-translation parse: ") + e.what();
                if (backend_budget-- > 0) continue;
                return dropped(failure);
            }
            if (ans.finish) {
                finished_early = true;
                break;
            }
            std::string problem;
            std::vector<const function_signature*> call_sigs;
            if (ans.calls.size() > config.max_parallel_calls) {
                problem = "more than " + std::to_string(config.max_parallel_calls) +
                          " parallel calls";
            } else {
                for (const function_call& fc : ans.calls) {
                    const function_signature* sig = nullptr;
                    for (const function_signature* s : ctx.functions) {
                        if (s->api_name == fc.name) {
                            sig = s;
                            break;
                        }
                    }
                    if (!sig) {
                        problem = "call to '" + fc.name + "' outside the turn group";
                        break;
                    }
                    validation_report report = validate_args(fc, *sig);
                    if (!report.ok()) {
                        problem = fc.name + ": " + report.describe();
                        break;
                    }
                    call_sigs.push_back(sig);
                }
            }
            if (!problem.empty()) {
                failure = "forth-translation validation: " + problem;
                if (validation_budget-- > 0) continue;
                return dropped(failure);
            }
            turn.reference_calls = std::move(ans.calls);
            for (size_t c = 0; c < turn.reference_calls.calls.size(); ++c) {
                try {
                    turn.outputs.push_back(
                        exec.execute(turn.reference_calls.calls[c], *call_sigs[c]));
                } catch (const std::exception& e) {
                    return dropped(std::string("execution failed: ") + e.what());
                }
            }
            break;
        }
        if (finished_early) break;
        turn.hint_reference = serialize_calls(turn.reference_calls);
        inst.turns.push_back(std::move(turn));
    }

    if (inst.turns.size() < config.min_turns) {
        return dropped(finished_early ? "FINISH left fewer than min_turns turns"
                                      : "fewer than min_turns turns");
    }
    translate_result r;
    r.instance = std::move(inst);
    return r;
}

// -------- JSONL --------

json instance_to_json(const translation_instance& inst) {
    json turns = json::array();
    for (const auto& t : inst.turns) {
        json outputs = json::array();
        for (const auto& o : t.outputs) {
            outputs.push_back({{"call", serialize_call(o.call)},
                               {"payload", o.payload},
                               {"is_error", o.is_error}});
        }
        turns.push_back({{"query", t.query},
                         {"miss_label", std::string(miss_label_text(t.miss))},
                         {"reference_calls", serialize_fc_list(t.reference_calls)},
                         {"hint_reference", t.hint_reference},
                         {"tools", t.tools},
                         {"outputs", std::move(outputs)}});
    }
    return json{{"id", inst.id},
                {"turns", std::move(turns)},
                {"source_fsp_seed", inst.source_fsp_seed},
                {"tools", inst.tools},
                {"provenance",
                 {{"start", inst.provenance.start},
                  {"ops", inst.provenance.ops},
                  {"seed", inst.provenance.seed}}}};
}

translation_instance instance_from_json(const json& j) {
    translation_instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.source_fsp_seed = j.value("source_fsp_seed", uint64_t{0});
    if (j.contains("tools")) inst.tools = j.at("tools").get<std::vector<std::string>>();
    if (j.contains("provenance")) {
        const json& p = j.at("provenance");
        inst.provenance.start = p.value("start", "");
        inst.provenance.seed = p.value("seed", uint64_t{0});
        if (p.contains("ops")) inst.provenance.ops = p.at("ops").get<std::vector<std::string>>();
    }
    for (const auto& t : j.at("turns")) {
        query_fc_turn turn;
        turn.query = t.at("query").get<std::string>();
        turn.miss = miss_label_from_text(t.value("miss_label", ""));
        turn.reference_calls = parse_fc_list(t.at("reference_calls").get<std::string>());
        turn.hint_reference = t.value("hint_reference", "");
        if (t.contains("tools")) turn.tools = t.at("tools").get<std::vector<std::string>>();
        for (const auto& o : t.value("outputs", json::array())) {
            tool_output out;
            fc_list parsed = parse_call_list(o.at("call").get<std::string>());
            out.call = parsed.calls.at(0);
            out.payload = o.at("payload");
            out.is_error = o.value("is_error", false);
            turn.outputs.push_back(std::move(out));
        }
        inst.turns.push_back(std::move(turn));
    }
    return inst;
}

void save_instances(const std::vector<translation_instance>& xs,
                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write instance file: " + path.string());
    for (const auto& inst : xs) out << instance_to_json(inst).dump() << "\n";
}

std::vector<translation_instance> load_instances(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open instance file: " + path.string());
    std::vector<translation_instance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(instance_from_json(json::parse(line)));
    }
    return out;
}

// -------- llm_translation_backend --------

namespace {

std::string history_text(const turn_context& ctx) {
    std::ostringstream os;
    if (!ctx.history || ctx.history->empty()) {
        os << "(no prior rounds)";
        return os.str();
    }
    const auto& turns = *ctx.history;
    for (size_t i = 0; i < turns.size(); ++i) {
        bool last = i + 1 == turns.size();
        os << (last ? "[Last Round] " : "") << "Round " << (i + 1) << ": "
           << serialize_fc_list(turns[i].reference_calls) << "\n";
    }
    return os.str();
}

std::string outputs_text(const turn_context& ctx) {
    if (!ctx.history || ctx.history->empty()) return "(empty)";
    const auto& outputs = ctx.history->back().outputs;
    if (outputs.empty()) return "(empty)";
    json arr = json::array();
    for (const auto& o : outputs) arr.push_back(o.payload);
    return arr.dump(2);
}

}  // namespace

llm_translation_backend::llm_translation_backend(chat_backend& backend, retry_policy policy,
                                                 request_gate* gate)
    : backend_(&backend), policy_(policy), gate_(gate) {}

std::string llm_translation_backend::back_translate(const turn_context& ctx) {
    json candidates = json::array();
    for (const function_signature* sig : ctx.functions) candidates.push_back(signature_to_json(*sig));
    std::string forbidden = "(none)";
    if (ctx.miss != miss_label::none && ctx.miss_target) {
        candidates.push_back(signature_to_json(*ctx.miss_target));
        if (ctx.miss == miss_label::miss_func) forbidden = ctx.miss_target->api_name;
    }
    auto messages = render(template_id::back_translate, {{"history", history_text(ctx)},
                                                         {"candidates", candidates.dump(2)},
                                                         {"forbidden", forbidden}});
    return complete_with_retry(*backend_, messages, chat_params{}, policy_, gate_);
}

std::string llm_translation_backend::forth_translate(const turn_context& ctx) {
    json candidate = json::array();
    for (const function_signature* sig : ctx.functions) candidate.push_back(signature_to_json(*sig));
    auto messages = render(template_id::forth_translate,
                           {{"history", history_text(ctx)},
                            {"candidate_function", candidate.dump(2)},
                            {"reference_output", outputs_text(ctx)},
                            {"query", ctx.query}});
    return complete_with_retry(*backend_, messages, chat_params{}, policy_, gate_);
}

}  // namespace fctraj
