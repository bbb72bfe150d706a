#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fctraj/errors.hpp"

namespace fctraj {

// Tabular state -> action distribution, parameterized by logits (softmax
// rows). Probabilities are therefore strictly positive and sum to one.
class categorical_policy {
public:
    categorical_policy(size_t n_states, size_t n_actions);
    categorical_policy(size_t n_states, size_t n_actions, std::vector<double> logits);

    size_t n_states() const { return n_states_; }
    size_t n_actions() const { return n_actions_; }

    double logit(size_t state, size_t action) const;
    void set_logit(size_t state, size_t action, double value);
    const std::vector<double>& logits() const { return logits_; }
    void set_logits(std::vector<double> logits);

    double prob(size_t state, size_t action) const;
    double log_prob(size_t state, size_t action) const;
    std::vector<double> probs_row(size_t state) const;

private:
    void check(size_t state, size_t action) const;
    size_t n_states_;
    size_t n_actions_;
    std::vector<double> logits_;  // row-major [state][action]
};

struct tokenized_trajectory {
    std::vector<std::pair<size_t, size_t>> steps;  // (state, action)
    std::vector<bool> action_mask;                 // true = model-action step

    size_t masked_count() const;
};

// Throws when sizes disagree, no step is masked, or an id is out of range.
void validate_trajectory(const tokenized_trajectory& traj, const categorical_policy& policy);

enum class mdpo_form : uint8_t {
    log_ratio,   // -log sigma(eta * (sum_w log r - sum_l log r))
    as_printed,  // -log sigma(eta * (sum_l r - sum_w r)), r = prob ratios
};

struct loss_config {
    double lambda = 1.0;
    double eta = 1.0;
    mdpo_form form = mdpo_form::log_ratio;
    bool mean_sft = true;  // mean over masked steps (sum when false)
};

struct preference_pair {
    tokenized_trajectory chosen;    // tau_w
    tokenized_trajectory rejected;  // tau_l
};

// Mean (or sum) of -log pi(a|s) over masked steps.
double sft_loss(const categorical_policy& policy, const tokenized_trajectory& traj,
                bool mean = true);

double mdpo_loss(const categorical_policy& theta, const categorical_policy& ref,
                 const preference_pair& pair, const loss_config& cfg);

// sft(theta, chosen) + lambda * mdpo(theta, ref, pair).
double combined_loss(const categorical_policy& theta, const categorical_policy& ref,
                     const preference_pair& pair, const loss_config& cfg);

// Analytic gradient of combined_loss w.r.t. every theta logit (row-major).
std::vector<double> grad_combined(const categorical_policy& theta, const categorical_policy& ref,
                                  const preference_pair& pair, const loss_config& cfg);

// Central finite differences of combined_loss, for verification.
std::vector<double> fd_grad_combined(const categorical_policy& theta,
                                     const categorical_policy& ref, const preference_pair& pair,
                                     const loss_config& cfg, double step = 1e-5);

// max over coordinates of |a - b| / max(1, |a|, |b|).
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b);

// Toy-instance file: {"n_states", "n_actions", "theta_logits", "ref_logits",
// "pairs": [{"w": {"steps": [[s,a],..], "mask": [..]}, "l": {...}}]}.
struct toy_instance {
    categorical_policy theta;
    categorical_policy ref;
    std::vector<preference_pair> pairs;
};

toy_instance toy_instance_from_json(const nlohmann::json& j);
toy_instance load_toy_instance(const std::filesystem::path& path);

double logistic_sigmoid(double x);

}  // namespace fctraj
