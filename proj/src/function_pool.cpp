#include "fctraj/function_pool.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fctraj/llm_client.hpp"

namespace fctraj {

using nlohmann::json;

void validate_signature(const function_signature& sig) {
    auto fail = [&](const std::string& what) {
        throw validation_error("function '" + (sig.api_name.empty() ? sig.id : sig.api_name) +
                               "': " + what);
    };
    if (sig.api_name.empty()) fail("api_name is empty");
    std::set<std::string> required(sig.parameters.required.begin(), sig.parameters.required.end());
    std::set<std::string> optional(sig.parameters.optional.begin(), sig.parameters.optional.end());
    if (required.size() != sig.parameters.required.size()) fail("duplicate name in required");
    if (optional.size() != sig.parameters.optional.size()) fail("duplicate name in optional");
    for (const auto& name : required) {
        if (optional.count(name)) fail("parameter '" + name + "' is both required and optional");
        if (!sig.parameters.properties.count(name)) {
            fail("required parameter '" + name + "' missing from properties");
        }
    }
    for (const auto& name : optional) {
        if (!sig.parameters.properties.count(name)) {
            fail("optional parameter '" + name + "' missing from properties");
        }
    }
    for (const auto& [name, _] : sig.parameters.properties) {
        if (!required.count(name) && !optional.count(name)) {
            fail("property '" + name + "' listed in neither required nor optional");
        }
    }
}

json signature_to_json(const function_signature& sig) {
    json props = json::object();
    for (const auto& [name, spec] : sig.parameters.properties) {
        props[name] = {{"type", spec.type}, {"description", spec.description}};
    }
    return json{
        {"category", sig.category},
        {"tool_name", sig.tool_name},
        {"tool_description", sig.tool_description},
        {"api_name", sig.api_name},
        {"api_description", sig.api_description},
        {"parameters",
         {{"type", "dict"},
          {"properties", props},
          {"required", sig.parameters.required},
          {"optional", sig.parameters.optional}}},
        {"response_info", sig.response_info},
        {"tool_class", sig.tool_class},
    };
}

function_signature signature_from_json(const json& j) {
    function_signature sig;
    auto str = [&](const char* key) -> std::string {
        if (!j.contains(key)) return "";
        if (!j.at(key).is_string()) {
            throw validation_error(std::string("field '") + key + "' must be a string");
        }
        return j.at(key).get<std::string>();
    };
    sig.category = str("category");
    sig.tool_class = str("tool_class");
    sig.tool_name = str("tool_name");
    sig.tool_description = str("tool_description");
    sig.api_name = str("api_name");
    sig.api_description = str("api_description");
    sig.response_info = str("response_info");
    sig.id = sig.api_name;
    if (j.contains("parameters")) {
        const json& p = j.at("parameters");
        if (p.contains("properties")) {
            for (const auto& [name, spec] : p.at("properties").items()) {
                param_spec ps;
                if (spec.is_object()) {
                    ps.type = spec.value("type", "string");
                    ps.description = spec.value("description", "");
                } else if (spec.is_string()) {
                    ps.type = "string";
                    ps.description = spec.get<std::string>();
                }
                sig.parameters.properties[name] = std::move(ps);
            }
        }
        if (p.contains("required")) {
            sig.parameters.required = p.at("required").get<std::vector<std::string>>();
        }
        if (p.contains("optional")) {
            sig.parameters.optional = p.at("optional").get<std::vector<std::string>>();
        }
    }
    return sig;
}

function_pool function_pool::from_signatures(std::vector<function_signature> sigs) {
    function_pool pool;
    pool.functions_ = std::move(sigs);
    for (size_t i = 0; i < pool.functions_.size(); ++i) {
        function_signature& sig = pool.functions_[i];
        if (sig.id.empty()) sig.id = sig.api_name;
        validate_signature(sig);
        if (!pool.by_id_.emplace(sig.id, i).second) {
            throw validation_error("duplicate api_name '" + sig.api_name + "'");
        }
        pool.by_group_[{sig.category, sig.tool_class}].push_back(sig.id);
    }
    return pool;
}

const function_signature* function_pool::find(const function_id& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &functions_[it->second];
}

const function_signature& function_pool::at(const function_id& id) const {
    if (const function_signature* sig = find(id)) return *sig;
    throw validation_error("function '" + id + "' not in pool");
}

std::vector<function_id> function_pool::group_members(const std::string& category,
                                                      const std::string& tool_class) const {
    auto it = by_group_.find({category, tool_class});
    return it == by_group_.end() ? std::vector<function_id>{} : it->second;
}

std::vector<function_id> function_pool::ids() const {
    std::vector<function_id> out;
    out.reserve(functions_.size());
    for (const auto& sig : functions_) out.push_back(sig.id);
    return out;
}

function_pool parse_pool_text(std::string_view text, bool jsonl) {
    std::vector<function_signature> sigs;
    try {
        if (jsonl) {
            std::istringstream is{std::string(text)};
            std::string line;
            while (std::getline(is, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                sigs.push_back(signature_from_json(json::parse(line)));
            }
        } else {
            json doc = json::parse(text);
            if (!doc.is_array()) throw validation_error("pool file must hold a JSON array");
            for (const auto& item : doc) sigs.push_back(signature_from_json(item));
        }
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("pool parse error: ") + e.what());
    }
    if (sigs.empty()) throw validation_error("pool is empty");
    return function_pool::from_signatures(std::move(sigs));
}

function_pool load_pool(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open pool file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_pool_text(buf.str(), path.extension() == ".jsonl");
}

std::string serialize_pool(const function_pool& pool) {
    json arr = json::array();
    for (const auto& sig : pool.functions()) arr.push_back(signature_to_json(sig));
    return arr.dump(2) + "\n";
}

void save_pool(const function_pool& pool, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write pool file: " + path.string());
    out << serialize_pool(pool);
}

const std::vector<std::string>& domain_labels() {
    // As printed in the classification prompt: 49 entries, "Finance" twice.
    static const std::vector<std::string> labels = {
        "Cybersecurity", "Artificial_Intelligence", "Commerce", "Advertising", "Payments",
        "News_Media", "Cryptography", "Devices", "Business", "eCommerce",
        "Logistics", "Finance", "Events", "Email", "Business_Software",
        "Music", "Database", "Translation", "Jobs", "Gaming",
        "Monitoring", "func_source_code", "Education", "Entertainment", "Visual_Recognition",
        "Sports", "SMS", "Media", "Search", "Finance",
        "Location", "Movies", "Transportation", "Text_Analysis", "Mapping",
        "Energy", "Customized", "Medical", "Storage", "Food",
        "Health", "Video_Images", "Science", "Communication", "Travel",
        "Social", "Data", "Reward", "Weather",
    };
    return labels;
}

bool is_known_domain(std::string_view label) {
    const auto& labels = domain_labels();
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::pair<std::string, std::string> classify_function(const function_signature& sig,
                                                      taxonomy_judge& judge) {
    auto [category, tool_class] = judge.classify(sig);
    if (!is_known_domain(category)) category = "misc";
    if (category == "misc" && tool_class.empty()) tool_class = "uncategorized";
    if (tool_class.empty()) tool_class = "uncategorized";
    return {category, tool_class};
}

std::pair<std::string, std::string> map_taxonomy_judge::classify(const function_signature& sig) {
    auto it = table_.find(sig.api_name);
    if (it == table_.end()) return {"misc", ""};
    return it->second;
}

llm_taxonomy_judge::llm_taxonomy_judge(chat_backend& backend, int max_retries)
    : backend_(&backend), max_retries_(max_retries) {}

std::pair<std::string, std::string> llm_taxonomy_judge::classify(const function_signature& sig) {
    json info = {{"api_name", sig.api_name},
                 {"api_description", sig.api_description},
                 {"required", sig.parameters.required}};
    auto messages = render(template_id::domain_classify, {{"function", info.dump()}});
    retry_policy policy;
    policy.max_retries = max_retries_;
    std::string reply = complete_with_retry(*backend_, messages, chat_params{}, policy);
    std::istringstream is(reply);
    std::string line;
    while (std::getline(is, line)) {
        size_t b = line.find_first_not_of(" \t\r'");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t\r'.");
        std::string category = line.substr(b, e - b + 1);
        std::string tool_class = !sig.tool_class.empty() ? sig.tool_class
                                 : !sig.tool_name.empty() ? sig.tool_name + " tool"
                                                          : "";
        return {category, tool_class};
    }
    throw judgment_error("empty classification reply for '" + sig.api_name + "'");
}

}  // namespace fctraj
