#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/llm_client.hpp"
#include "fctraj/postprocess_mixture.hpp"
#include "fctraj/trajectory_distiller.hpp"

namespace fctraj {

struct pipeline_config {
    std::filesystem::path pool_path;
    std::filesystem::path out_dir;
    uint64_t seed = 1;
    size_t jobs = 1;

    // graph stage
    size_t k_cand = 30;
    bool cross_category = false;
    std::string graph_judge = "mock";  // mock | llm
    double edge_density = 0.35;

    // fsp stage
    size_t steps = 7;
    size_t fsp_count = 16;
    size_t min_turns = 2;

    // node-ops stage
    double merge_p = 0.3;
    double q_long = 0.5;
    std::string nested_judge_kind = "mock";
    double nested_density = 0.5;

    // translate stage
    std::string translate_backend = "mock";
    double error_rate = 0.0;
    size_t singles_count = 8;

    // distill stage
    std::string teacher = "mock";
    std::string student = "mock";
    std::string judge = "mock";
    bool negatives = true;
    size_t rollouts = 4;
    double student_wrong_rate = 0.35;
    bool substep_split = false;

    // postprocess stage
    std::vector<std::string> keywords = default_filter_keywords();
    bool shuffle = true;
    size_t irrelevance_count = 4;

    // mix stage; 0 means "all available of this type"
    size_t mix_single = 0;
    size_t mix_multi = 0;
    size_t mix_irrelevance = 0;

    http_backend_config http;  // used when any role is "llm"
};

pipeline_config config_from_json(const nlohmann::json& j);
pipeline_config load_pipeline_config(const std::filesystem::path& path);
// Throws validation_error before any work when paths/counts are unusable.
void validate_config(const pipeline_config& cfg);

struct stage_report {
    std::string name;
    bool ran = false;  // false = restored from checkpoint
    double wall_ms = 0.0;
    std::map<std::string, size_t> counts;
    std::map<std::string, size_t> drops;
};

struct run_report {
    std::vector<stage_report> stages;
    uint64_t seed = 0;
};

nlohmann::json run_report_to_json(const run_report& r);

// Stage order: graph, fsp, node_ops, translate, distill, postprocess, mix,
// stats. Each stage persists its outputs under out_dir and records a content
// hash in checkpoints.json; a stage reruns iff its checkpoint is invalid or
// an earlier stage reran.
run_report run_pipeline(const pipeline_config& cfg);

}  // namespace fctraj
