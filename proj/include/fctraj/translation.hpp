#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fctraj/fc_language.hpp"
#include "fctraj/fsp_sampler.hpp"
#include "fctraj/function_pool.hpp"
#include "fctraj/llm_client.hpp"

namespace fctraj {

struct tool_output {
    function_call call;
    nlohmann::json payload;  // object on success, error text string on failure
    bool is_error = false;

    std::string payload_text() const;
    bool operator==(const tool_output&) const = default;
};

struct query_fc_turn {
    std::string query;
    miss_label miss = miss_label::none;
    fc_list reference_calls;             // empty for miss turns
    std::vector<tool_output> outputs;    // one per reference call
    std::vector<function_id> tools;      // functions available this turn
    std::string hint_reference;          // serialized calls, or the miss marker
};

struct translation_instance {
    std::string id;
    std::vector<query_fc_turn> turns;
    uint64_t source_fsp_seed = 0;
    std::vector<function_id> tools;  // union over turns
    fsp_provenance provenance;

    size_t total_calls() const;
};

// What a backend sees when asked to produce the turn's query or calls.
struct turn_context {
    size_t turn_index = 0;
    const std::vector<query_fc_turn>* history = nullptr;  // completed turns
    std::vector<const function_signature*> functions;     // f_h (empty for miss turns)
    miss_label miss = miss_label::none;
    const function_signature* miss_target = nullptr;      // next turn's first function
    // Set when the previous turn was a miss-params stub: the user now
    // supplies the withheld value for this signature.
    const function_signature* resume_target = nullptr;
    std::string query;  // filled before forth-translation
    uint64_t instance_seed = 0;
};

class translation_backend {
public:
    virtual ~translation_backend() = default;
    // Returns the user query text for the turn.
    virtual std::string back_translate(const turn_context& ctx) = 0;
    // Returns raw text in the Thought:/Answer: protocol (answer line holds
    // comma-separated calls or FINISH).
    virtual std::string forth_translate(const turn_context& ctx) = 0;
};

class executor {
public:
    virtual ~executor() = default;
    virtual tool_output execute(const function_call& fc, const function_signature& sig) = 0;
};

struct simulated_executor_config {
    uint64_t seed = 0;
    double error_rate = 0.0;
    std::vector<std::string> error_keywords = {"Bad request", "does not match"};
};

// Deterministic stand-in for live calls: the payload is a pure function of
// (seed, name, canonical args) shaped after the signature's response_info.
class simulated_executor final : public executor {
public:
    explicit simulated_executor(simulated_executor_config config) : config_(std::move(config)) {}
    tool_output execute(const function_call& fc, const function_signature& sig) override;

private:
    simulated_executor_config config_;
};

// FINISH sentinel plus parsed calls for one forth-translation reply.
struct forth_answer {
    bool finish = false;
    fc_list calls;
};

// Extracts the Answer: line and parses it (bare or bracketed form).
forth_answer parse_forth_reply(const std::string& raw);

struct translate_config {
    size_t min_turns = 2;
    int backend_retries = 2;     // transport/parse failures
    int validation_retries = 1;  // calls that fail validate_args
    size_t max_parallel_calls = 3;
};

struct translate_result {
    std::optional<translation_instance> instance;
    std::string drop_reason;  // set when instance is empty
};

// Strictly sequential over turns: turn h executes before turn h+1 is
// translated. FINISH truncates; instances shorter than min_turns drop.
translate_result translate_fsp(const fsp& path, const function_pool& pool,
                               translation_backend& backend, executor& exec,
                               const translate_config& config);

nlohmann::json instance_to_json(const translation_instance& inst);
translation_instance instance_from_json(const nlohmann::json& j);
void save_instances(const std::vector<translation_instance>& xs,
                    const std::filesystem::path& path);
std::vector<translation_instance> load_instances(const std::filesystem::path& path);

// Deterministic template backend: queries are filled from per-(seed, api,
// param) placeholder values, and forth-translation recomputes the same
// values, threading the previous turn's "output" field into the first
// required parameter of the first call.
class mock_translation_backend final : public translation_backend {
public:
    mock_translation_backend() = default;
    std::string back_translate(const turn_context& ctx) override;
    std::string forth_translate(const turn_context& ctx) override;

    // Reference calls the mock will produce for a context; exposed so tests
    // and the mock's two directions agree by construction.
    static fc_list reference_calls(const turn_context& ctx);

    // (turn_index of forth call, max history turn whose outputs were read)
    const std::vector<std::pair<size_t, std::optional<size_t>>>& access_log() const {
        return access_log_;
    }

private:
    std::vector<std::pair<size_t, std::optional<size_t>>> access_log_;
};

// Deterministic pseudo-value for one required parameter.
std::string placeholder_text(uint64_t seed, std::string_view api, std::string_view param);
fc_value placeholder_value(uint64_t seed, const function_signature& sig, const std::string& param);

// LLM-backed backend speaking the back-/forth-translation prompts.
class llm_translation_backend final : public translation_backend {
public:
    llm_translation_backend(chat_backend& backend, retry_policy policy = {},
                            request_gate* gate = nullptr);
    std::string back_translate(const turn_context& ctx) override;
    std::string forth_translate(const turn_context& ctx) override;

private:
    chat_backend* backend_;
    retry_policy policy_;
    request_gate* gate_;
};

}  // namespace fctraj
