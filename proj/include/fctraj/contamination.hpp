#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/errors.hpp"

namespace fctraj {

using token_sequence = std::vector<std::string>;

// Percentage of test sequences appearing verbatim in the train corpus.
// Throws on an empty test corpus.
double exact_match_rate(const std::vector<token_sequence>& train,
                        const std::vector<token_sequence>& test);

// Distinct-set n-gram overlap: |test n-grams ∩ train n-grams| /
// |test n-grams| * 100. Throws when no test sequence reaches length n.
double ngram_overlap(const std::vector<token_sequence>& train,
                     const std::vector<token_sequence>& test, size_t n);

struct contamination_report {
    double exact_match_pct = 0.0;
    double ngram_pct = 0.0;
    size_t n = 2;
};

contamination_report contamination_between(const std::vector<token_sequence>& train,
                                           const std::vector<token_sequence>& test, size_t n);
nlohmann::json report_to_json(const contamination_report& r);

// FSP JSONL -> token sequences (turn functions flattened in order).
std::vector<token_sequence> load_token_sequences(const std::filesystem::path& fsp_jsonl);

}  // namespace fctraj
