#pragma once

#include <optional>
#include <set>
#include <utility>

#include "fctraj/fsp_sampler.hpp"

namespace fctraj {

// Says whether `second` can be nested after `first` (second's inputs
// obtainable from first's outputs).
class nested_judge {
public:
    virtual ~nested_judge() = default;
    virtual bool nested(const function_signature& first, const function_signature& second) = 0;
};

class const_nested_judge final : public nested_judge {
public:
    explicit const_nested_judge(bool answer) : answer_(answer) {}
    bool nested(const function_signature&, const function_signature&) override { return answer_; }

private:
    bool answer_;
};

// Explicit (first, second) pairs for tests.
class map_nested_judge final : public nested_judge {
public:
    explicit map_nested_judge(std::set<std::pair<std::string, std::string>> pairs)
        : pairs_(std::move(pairs)) {}
    bool nested(const function_signature& first, const function_signature& second) override {
        return pairs_.count({first.api_name, second.api_name}) > 0;
    }

private:
    std::set<std::pair<std::string, std::string>> pairs_;
};

// Deterministic pseudo-judge for mock pipeline runs.
class hash_nested_judge final : public nested_judge {
public:
    hash_nested_judge(uint64_t seed, double density) : seed_(seed), density_(density) {}
    bool nested(const function_signature& first, const function_signature& second) override;

private:
    uint64_t seed_;
    double density_;
};

class chat_backend;

// Renders the nested-check prompt; expects yes/no in the first line.
class llm_nested_judge final : public nested_judge {
public:
    explicit llm_nested_judge(chat_backend& backend, int max_retries = 2);
    bool nested(const function_signature& first, const function_signature& second) override;

private:
    chat_backend* backend_;
    int max_retries_;
};

struct node_ops_config {
    double merge_p = 0.3;
    double q_long = 0.5;  // chance an inserted function becomes its own later turn
    std::optional<miss_label> force_split_label;
};

// Left-to-right, non-chaining pass: each accepted coin merges a pair and the
// merged turn is not reconsidered. Requires an unlabeled path.
fsp op_merge(const fsp& path, double p, rng64& rng);

// For each original turn, the first neighbor of its last function judged
// nested is appended to the turn (prob 1-q_long) or inserted as its own turn
// at a uniform position strictly after it (prob q_long). At most one
// insertion per original turn.
fsp op_insert(const fsp& path, const graph_set& graphs, const function_pool& pool,
              nested_judge& judge, double q_long, rng64& rng);

// Inserts one empty turn labeled miss params / miss func (uniform unless
// forced) immediately after a uniformly chosen turn.
fsp op_split(const fsp& path, rng64& rng, std::optional<miss_label> force = std::nullopt);

// merge then insert yields the enhanced path; split on that yields the
// missing-information variant. Returns (enhanced, enhanced_with_miss).
std::pair<fsp, fsp> enhance(const fsp& path, const graph_set& graphs, const function_pool& pool,
                            nested_judge& judge, const node_ops_config& config, rng64& rng);

}  // namespace fctraj
