#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/errors.hpp"

namespace fctraj {

using function_id = std::string;

struct param_spec {
    std::string type;  // string|number|integer|boolean|array|object
    std::string description;
    bool operator==(const param_spec&) const = default;
};

struct parameter_schema {
    std::map<std::string, param_spec> properties;
    std::vector<std::string> required;
    std::vector<std::string> optional;
    bool operator==(const parameter_schema&) const = default;
};

struct function_signature {
    function_id id;  // equals api_name for pools loaded from disk
    std::string category;
    std::string tool_class;
    std::string tool_name;
    std::string tool_description;
    std::string api_name;
    std::string api_description;
    parameter_schema parameters;
    std::string response_info;
    bool operator==(const function_signature&) const = default;
};

// Throws validation_error naming the api_name and offending field.
void validate_signature(const function_signature& sig);

nlohmann::json signature_to_json(const function_signature& sig);
function_signature signature_from_json(const nlohmann::json& j);

// Immutable after construction; safe to share read-only across workers.
class function_pool {
public:
    static function_pool from_signatures(std::vector<function_signature> sigs);

    const std::vector<function_signature>& functions() const { return functions_; }
    size_t size() const { return functions_.size(); }

    const function_signature* find(const function_id& id) const;
    const function_signature& at(const function_id& id) const;  // throws validation_error

    // Members of one (category, tool_class) group, in pool order.
    std::vector<function_id> group_members(const std::string& category,
                                           const std::string& tool_class) const;
    std::vector<function_id> ids() const;

private:
    std::vector<function_signature> functions_;
    std::map<function_id, size_t> by_id_;
    std::map<std::pair<std::string, std::string>, std::vector<function_id>> by_group_;
};

// JSON array of template-shaped objects; ".jsonl" paths stream one object
// per line instead.
function_pool load_pool(const std::filesystem::path& path);
function_pool parse_pool_text(std::string_view text, bool jsonl);

// Canonical form: sorted keys, two-space indent, trailing newline.
// load ∘ serialize is the identity on validated pools.
std::string serialize_pool(const function_pool& pool);
void save_pool(const function_pool& pool, const std::filesystem::path& path);

// The closed domain label set from the classification prompt, as printed
// (49 entries, one duplicate). Membership checks use the distinct set.
const std::vector<std::string>& domain_labels();
bool is_known_domain(std::string_view label);

class taxonomy_judge {
public:
    virtual ~taxonomy_judge() = default;
    // Raw (category, tool_class) labels; closed-set enforcement is the
    // caller's job, in classify_function.
    virtual std::pair<std::string, std::string> classify(const function_signature& sig) = 0;
};

// Out-of-set categories collapse to "misc"; a misc result with no class
// information gets class "uncategorized".
std::pair<std::string, std::string> classify_function(const function_signature& sig,
                                                      taxonomy_judge& judge);

// Fixed api_name -> (category, tool_class) table; unlisted functions map
// to ("misc", "").
class map_taxonomy_judge final : public taxonomy_judge {
public:
    explicit map_taxonomy_judge(std::map<std::string, std::pair<std::string, std::string>> table)
        : table_(std::move(table)) {}
    std::pair<std::string, std::string> classify(const function_signature& sig) override;

private:
    std::map<std::string, std::pair<std::string, std::string>> table_;
};

class chat_backend;

// Prompts the backend with the domain-classification template; tool_class
// falls back to the signature's own class or tool_name.
class llm_taxonomy_judge final : public taxonomy_judge {
public:
    llm_taxonomy_judge(chat_backend& backend, int max_retries = 2);
    std::pair<std::string, std::string> classify(const function_signature& sig) override;

private:
    chat_backend* backend_;
    int max_retries_;
};

}  // namespace fctraj
