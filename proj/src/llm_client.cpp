#include "fctraj/llm_client.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fctraj/rng.hpp"

namespace fctraj {

namespace {

// Prompt bodies are pinned; the checksum test catches any drift. Placeholder
// slots use {name}; the bodies themselves contain no braces.

const std::string kNestedJudge = R"__(You will be given two function information including their descriptions, parameters, response info etc. Your task is to determine whether the two functions can be nested.
We call two functions to be nested when some parameter values for the later function call can be obtained by the first function call. For example when the first function is convert_usd_from_rmb(rmb_number=), and the second function is set_budget_limit(budget_limit_in_usd=). The two functions are nested because set_budget_limit needs a parameter value in dollars and convert_usd_from_rmb could output a dollar value. As another example, when the first function is get_airport_symbol_by_city(city=,range=), the second function get_flight_by_airport(airport_symbol=). The two functions are nested because the second function needs a symbol of airport while the first function provides that in the output. Please judge whether the input functions satisfy this nesting relationship. Return two lines: In the first line, If those two functions are nested, output yes, otherwise output no, Use lower case. In the second line, give a brief explanation on why you think they are nested.

First function:
{first_function}

Second function:
{second_function}
)__";

const std::string kDependencyJudge = R"__(You will be given a few API functions. You will also be given a target API. Your task is to create the adjacent list of the target API from those APIs.
Each element in the adjacent list should be related to the target API.
We say another function is related to the target API if:
1) the output of the target API is the premise of executing the function. For example, the output of fileexists('file.txt') API determines whether we can call downloadfile('file.txt').
2) the output of the target API is exactly the input parameters of the function. For example, when calculating the area of a circle, the function getradius(obj) is the source node and calculate(radius) is the target node.
3) the output of the target API is partial input parameters of the function. For example, when posting something to social media, one might first get the content. In this case, the content = getcontent('file.txt') is the source node and posting(content, id, tags) is the target node.
Notice that the relation might cross the boundary of domains.
For example, when the given APIs are in the domain of weather and travel, it is possible that a weather API could be related to a travel API since the weather determines the travel schedule.
Also, the target API itself should not be in the adjacent list.
For example, if the target API is get_id, there should not be a get_id function in the adjacent list.
Return only the adjacency dictionary in a json format. Use exactly the original name of the tool as the key and values. In the adjacency dictionary, the only key is the target API, and each value is a list that contains the relevant APIs for that target API.
Target API:
{target_api}
Candidate APIs:
{candidates}
)__";

const std::string kDomainClassify = R"__(You will be given a few domains and a function from one of those domains. You will be given the function name, description, and the required parameters of it. Your task is to classify the function into one of the domains.
The domains are:
'Cybersecurity', 'Artificial_Intelligence', 'Commerce', 'Advertising', 'Payments', 'News_Media', 'Cryptography', 'Devices', 'Business', 'eCommerce', 'Logistics', 'Finance', 'Events', 'Email', 'Business_Software', 'Music', 'Database', 'Translation', 'Jobs', 'Gaming', 'Monitoring', 'func_source_code', 'Education', 'Entertainment', 'Visual_Recognition', 'Sports', 'SMS', 'Media', 'Search', 'Finance', 'Location', 'Movies', 'Transportation', 'Text_Analysis', 'Mapping', 'Energy', 'Customized', 'Medical', 'Storage', 'Food', 'Health', 'Video_Images', 'Science', 'Communication', 'Travel', 'Social', 'Data', 'Reward', 'Weather'. Return one line with the name of the domain. Or, if you cannot decide on which domain the function belongs to or think the function does not belong to any of the domains, output 'misc'.
Function:
{function}
)__";

const std::string kBackTranslate = R"__(Now you are role-playing as a user that involves in a multi-turn conversation with a function-calling agent. You will be given the functions called by the history of this multi-turn conversation, indicated by round numbers. The functions called last round start with [Last Round]. You will also be provided with a list of candidate functions in a dictionary format where the keys are the functions called last round and values are related and candidate functions that can be called in this round. I would like you to generate the query of this round which calls one or multiple functions from the candidate function list. When calling multiple functions, make sure you call no more than three functions at a single round.
Rules:
- The preferred next round query should be motivated by the outputs from the last round function output. Preferably, those outputs are used as the input parameters for as least one of the functions being called at this round.
- You should NOT mention which functions to use in your query explicitly.
- After you decide on which function to use, make sure your new query contains information for all the required parameters of the functions you want to call, although some information may be referred to implicitly as the outputs from the last round. If the value for some required parameters are not clear given the context, you may want to create a value for that required parameter but just remember, have information for all required parameters.
- Use no parameters besides the parameters indicated in the required and optional fields of the function documentation.
- For outputs from the last round, try not to mention the exact parameters that you will use. Instead, use references such as 'the location you just found', 'With the listed items'... to refer to the output of last round that will be leveraged next.
- Do not repeat any queries in the conversation history. This means your new query should not call the same function with the same set of parameters as any of the queries in the conversation, even the function exists in the adjacent list.
- Avoid using the APIs in [Do not use these APIs].
- Try to make the conversation as natural as possible. Mind the logic between two consecutive queries. Do not just create an independent new query.
- Below are some examples of good output given conversation history. Please follow the style of conversation and make your new query chained with previous queries.
Conversation history:
{history}
Candidate functions:
{candidates}
[Do not use these APIs]
{forbidden}
)__";

const std::string kForthTranslate = R"__(Now you are role-playing as a function-calling agent that involves in a multi-turn conversation with a user. You will be given the functions called by the history of this multi-turn conversation, indicated by round numbers. The functions called last round start with [Last Round].You will also be provided with a candidate function in a dictionary format with its descriptions and parameters.
I would like you to generate the function call for the next round using this function signature. Make sure the parameters for this candidate function should be derived from the user query and reference outputs from the last round function call.
Rules:
- You should use the function with the original name without any changes.
- For all the functions, make sure your generated function calls contain ALL the required parameters fields from the function documentation. You may also include some optional parameters. However, do not hallucinate any parameters outside of those. Use only the parameters indicated in the required and optional fields of the function documentation.
- Then, the parameter values for the new function should be related to the output from last round, please refer to the [Reference Output] for the corresponding values.
- You can have parallel function call with the candidate function, i.e., call the function with different set of parameters, for your new query. However, **do not call more than three parallel functions**.
Format:
Thought:
<the thought on which parameter values to use>
Answer:
<You need to provide a groundtruth for the function calls that will be invoked in the next round as well as the parameters. Separate your reference function calls by comma. No any other separator is acceptable, only using comma. Also, if any of your parameters are with string value, use double quotation marks to include the parameters. If no answer can be generated, output FINISH in this line>
Conversation history:
{history}
Candidate function:
{candidate_function}
[Reference Output]
{reference_output}
User query for this round:
{query}
)__";

const std::string kPositiveDistill = R"__(You are an expert in composing functions. You are given a question and a set of possible functions. Based on the question, you will need to make one or more function/tool calls to achieve the purpose. If none of the function can be used, point it out. If the given question lacks the parameters required by the function, also point it out. You should only return the function call in tools call sections. If you decide to invoke any of the function(s), you MUST put it in the format of [func_name1(params_name1=params_value1, params_name2=params_value2...), func_name2(params)]. You SHOULD NOT include any other text in the response.
Here is a list of functions in JSON format that you can invoke. Notice that for each question, I already added hint function calls, following the [Hint] key words. Please compose your answer based on those hints while not mentioning those hints explicitly in your responses, i.e., when you decide to invoke function calls, just return the functions, and when you provide textual response, do not mention that there is a hint. Your textual response should summarize the function call outputs. Most of the time the hints are correct answers, just follow it... However, sometimes, those hints might not be perfectly correct, for example, you might see placeholders in the hints parameters like param1=unknow. So, when the hints are not correct, you need to identify them and compose the proper functions by looking for those parameter values from all previous turns. When you see [Hint]: miss function, this means the function needed in this step is missed. You should not simply output miss function in this case but try to use natural language to describe the situation and what functionality is missed. Similarly, when you see [Hint]: missed params, this means that some required parameters for the function is not mentioned in the query, just output some pure texts to ask for the information. However, in your response, do not mention the hint, just answer to the query. When you encounter errors in function outputs, please try composing the functions again based on the error information in the errors. Do not just output textual response at once. **This is important**: when you see the [Hint] contains multiple function calls, i.e., more than one functions should be called for the query, this means those functions are relevant and nested. In this case, at each turn of your response, call only one function. Then, wait for the feedback from the user and then, call the next function. This is because sometimes the parameters of the later functions are missed without the user feedback. For example, when you see [Hint]: func_name1(params_name1=params_value1), func_name2(params_name2=params_value2), you should first output [func_name1(...)] with the correct parameter values  and wait for the user response. Then, after you get the user response, based on the response, you call the next function [func_name2(...)] with the correct parameter values.
{functions}
)__";

const std::string kNegativeJudge = R"__(You will be given a multi-turn conversation between a user and an agent, the agent response for a single turn, which is possibly a function call, and a reference response. Your task is to judge whether the model response is a correct one based on the reference response. Below are possible error types. When both the reference and the model response are function calls, your judgement is for whether the model response accurately invoke the correct function call.
A response might be wrong in the following way:
1. Nested function calls: There are missing function calls. Model fails to call some necessary functions because they are not explicitly mentioned in the query.
2. Short dependency: There are outputs from a previous function call in this turn that is not used correctly in later function calls.
3. Long dependency: There are some parameter values exist in the conversation history but not properly used in this turn.
When both the reference and the model response are not function call but general textual response, your judgement is for whether the model response covers all the necessary information but also not hallucination based on the reference response.
4. Wrong summarization: whether the model response is a wrong summarization of the reference response.
When either one of the reference or the model response is not a function call while the other one is:
5. Missed function or parameters: there are some parameter values or functions present or not present in the context while the model thinks the opposite.
Additional guidelines:
If one of the reference and model responses is function call while the other is not, directly output no.
Notice that when you see redundant parameters from the model response when it is function call, it might because it gives all the parameters even the default ones. So, as long as other parameters take the same values, regard this as correct.
In the first line, return yes or no. If your answer is no, in the second line, return a number to represent the error type.
Conversation:
{conversation}
Model response:
{model_response}
Reference response:
{reference_response}
)__";

const std::string kSystemPrompt = R"__(You are an expert in composing functions. You are given a question and a set of possible functions. Based on the question, you will need to make one or more function/tool calls to achieve the purpose. If none of the function can be used, point it out. If the given question lacks the parameters required by the function, also point it out. You should only return the function call in tools call sections. If you decide to invoke any of the function(s), you MUST put it in the format of [func_name1(params_name1=params_value1, params_name2=params_value2...), func_name2(params)]. You SHOULD NOT include any other text in the response.
Here is a list of functions in JSON format that you can invoke.
{functions}
)__";

struct template_entry {
    template_id id;
    std::string_view name;
    const std::string* text;
};

const std::array<template_entry, template_count>& registry() {
    static const std::array<template_entry, template_count> entries = {{
        {template_id::nested_judge, "nested_judge", &kNestedJudge},
        {template_id::dependency_judge, "dependency_judge", &kDependencyJudge},
        {template_id::domain_classify, "domain_classify", &kDomainClassify},
        {template_id::back_translate, "back_translate", &kBackTranslate},
        {template_id::forth_translate, "forth_translate", &kForthTranslate},
        {template_id::positive_distill, "positive_distill", &kPositiveDistill},
        {template_id::negative_judge, "negative_judge", &kNegativeJudge},
        {template_id::system_prompt, "system_prompt", &kSystemPrompt},
    }};
    return entries;
}

const template_entry& entry_for(template_id id) {
    for (const auto& e : registry()) {
        if (e.id == id) return e;
    }
    throw validation_error("unknown template id");
}

bool is_placeholder_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

const std::vector<template_id>& all_template_ids() {
    static const std::vector<template_id> ids = [] {
        std::vector<template_id> out;
        for (const auto& e : registry()) out.push_back(e.id);
        return out;
    }();
    return ids;
}

std::string_view template_name(template_id id) { return entry_for(id).name; }

const std::string& template_text(template_id id) { return *entry_for(id).text; }

std::vector<std::string> template_placeholders(template_id id) {
    const std::string& text = template_text(id);
    std::vector<std::string> out;
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        size_t j = i + 1;
        while (j < text.size() && is_placeholder_char(text[j])) ++j;
        if (j > i + 1 && j < text.size() && text[j] == '}') {
            std::string name = text.substr(i + 1, j - i - 1);
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
            i = j;
        }
    }
    return out;
}

std::string template_checksum(template_id id) {
    uint64_t h = fnv1a64(template_text(id));
    std::ostringstream os;
    os << std::hex;
    for (int shift = 60; shift >= 0; shift -= 4) os << ((h >> shift) & 0xf);
    return os.str();
}

std::vector<chat_message> render(template_id id,
                                 const std::map<std::string, std::string>& bindings) {
    const std::string& text = template_text(id);
    std::vector<std::string> slots = template_placeholders(id);
    for (const auto& [key, _] : bindings) {
        if (std::find(slots.begin(), slots.end(), key) == slots.end()) {
            throw validation_error("render(" + std::string(template_name(id)) +
                                   "): unknown placeholder '" + key + "'");
        }
    }
    std::string rendered;
    rendered.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '{') {
            size_t j = i + 1;
            while (j < text.size() && is_placeholder_char(text[j])) ++j;
            if (j > i + 1 && j < text.size() && text[j] == '}') {
                std::string name = text.substr(i + 1, j - i - 1);
                auto it = bindings.find(name);
                if (it == bindings.end()) {
                    throw validation_error("render(" + std::string(template_name(id)) +
                                           "): missing binding '" + name + "'");
                }
                rendered += it->second;
                i = j;
                continue;
            }
        }
        rendered.push_back(text[i]);
    }
    std::string role = (id == template_id::system_prompt) ? "system" : "user";
    return {chat_message{role, std::move(rendered)}};
}

std::pair<bool, std::string> parse_yes_no_line(const std::string& text) {
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        size_t b = line.find_first_not_of(" \t\r");
        if (b != std::string::npos) {
            size_t e = line.find_last_not_of(" \t\r");
            std::string word = line.substr(b, e - b + 1);
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            bool flag;
            if (word == "yes") {
                flag = true;
            } else if (word == "no") {
                flag = false;
            } else {
                throw protocol_error("expected yes/no in first line, got '" + word + "'");
            }
            std::string rest = eol < text.size() ? text.substr(eol + 1) : "";
            size_t rb = rest.find_first_not_of(" \t\r\n");
            rest = rb == std::string::npos ? "" : rest.substr(rb);
            size_t re = rest.find_last_not_of(" \t\r\n");
            if (re != std::string::npos) rest.resize(re + 1);
            return {flag, rest};
        }
        pos = eol + 1;
    }
    throw protocol_error("empty response, expected yes/no line");
}

request_gate::request_gate(size_t limit) : limit_(limit == 0 ? 1 : limit) {}

void request_gate::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
}

void request_gate::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

std::string complete_with_retry(chat_backend& backend, const std::vector<chat_message>& messages,
                                const chat_params& params, const retry_policy& policy,
                                request_gate* gate) {
    std::string attempt_log;
    int attempts = policy.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0 && policy.base_backoff.count() > 0) {
            std::this_thread::sleep_for(policy.base_backoff * (1 << (attempt - 1)));
        }
        if (gate) gate->acquire();
        struct release_guard {
            request_gate* g;
            ~release_guard() {
                if (g) g->release();
            }
        } guard{gate};
        try {
            return backend.complete(messages, params);
        } catch (const std::exception& e) {
            attempt_log += "attempt " + std::to_string(attempt + 1) + ": " + e.what() + "; ";
        }
    }
    throw transport_error("backend failed after " + std::to_string(attempts) +
                          " attempts: " + attempt_log);
}

std::string replay_chat_backend::complete(const std::vector<chat_message>&, const chat_params&) {
    size_t i = next_.fetch_add(1);
    if (i >= responses_.size()) {
        throw transport_error("replay backend exhausted after " +
                              std::to_string(responses_.size()) + " responses");
    }
    return responses_[i];
}

http_chat_backend::http_chat_backend(http_backend_config config) : config_(std::move(config)) {
    if (config_.host.empty()) throw validation_error("http backend: host is required");
}

std::string http_chat_backend::complete(const std::vector<chat_message>& messages,
                                        const chat_params& params) {
    nlohmann::json body;
    body["model"] = params.model.empty() ? config_.model : params.model;
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_tokens;
    auto& msgs = body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});

    httplib::Headers headers;
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    auto send = [&](auto& client) -> httplib::Result {
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        return client.Post(config_.path, headers, body.dump(), "application/json");
    };

    httplib::Result res = [&] {
        if (config_.use_tls) {
            httplib::SSLClient client(config_.host, config_.port);
            return send(client);
        }
        httplib::Client client(config_.host, config_.port);
        return send(client);
    }();

    if (!res) {
        throw transport_error("http backend: no response from " + config_.host + ":" +
                              std::to_string(config_.port) + " (" +
                              httplib::to_string(res.error()) + ")");
    }
    if (res->status < 200 || res->status >= 300) {
        throw transport_error("http backend: status " + std::to_string(res->status));
    }
    try {
        nlohmann::json reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw protocol_error(std::string("http backend: malformed completion body: ") + e.what());
    }
}

}  // namespace fctraj
