#include "fctraj/training_losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fctraj {

using nlohmann::json;

categorical_policy::categorical_policy(size_t n_states, size_t n_actions)
    : n_states_(n_states), n_actions_(n_actions), logits_(n_states * n_actions, 0.0) {
    if (n_states == 0 || n_actions == 0) {
        throw validation_error("policy needs at least one state and action");
    }
}

categorical_policy::categorical_policy(size_t n_states, size_t n_actions,
                                       std::vector<double> logits)
    : categorical_policy(n_states, n_actions) {
    set_logits(std::move(logits));
}

void categorical_policy::set_logits(std::vector<double> logits) {
    if (logits.size() != n_states_ * n_actions_) {
        throw validation_error("logit table size mismatch");
    }
    logits_ = std::move(logits);
}

void categorical_policy::check(size_t state, size_t action) const {
    if (state >= n_states_ || action >= n_actions_) {
        throw validation_error("state/action id out of range: (" + std::to_string(state) + ", " +
                               std::to_string(action) + ")");
    }
}

double categorical_policy::logit(size_t state, size_t action) const {
    check(state, action);
    return logits_[state * n_actions_ + action];
}

void categorical_policy::set_logit(size_t state, size_t action, double value) {
    check(state, action);
    logits_[state * n_actions_ + action] = value;
}

double categorical_policy::log_prob(size_t state, size_t action) const {
    check(state, action);
    const double* row = logits_.data() + state * n_actions_;
    double m = *std::max_element(row, row + n_actions_);
    double sum = 0.0;
    for (size_t a = 0; a < n_actions_; ++a) sum += std::exp(row[a] - m);
    return row[action] - m - std::log(sum);
}

double categorical_policy::prob(size_t state, size_t action) const {
    return std::exp(log_prob(state, action));
}

std::vector<double> categorical_policy::probs_row(size_t state) const {
    check(state, 0);
    std::vector<double> out(n_actions_);
    const double* row = logits_.data() + state * n_actions_;
    double m = *std::max_element(row, row + n_actions_);
    double sum = 0.0;
    for (size_t a = 0; a < n_actions_; ++a) {
        out[a] = std::exp(row[a] - m);
        sum += out[a];
    }
    for (double& p : out) p /= sum;
    return out;
}

size_t tokenized_trajectory::masked_count() const {
    size_t n = 0;
    for (bool m : action_mask) n += m ? 1 : 0;
    return n;
}

void validate_trajectory(const tokenized_trajectory& traj, const categorical_policy& policy) {
    if (traj.steps.size() != traj.action_mask.size()) {
        throw validation_error("trajectory mask length differs from step count");
    }
    if (traj.masked_count() == 0) throw validation_error("trajectory has no masked step");
    for (const auto& [s, a] : traj.steps) {
        if (s >= policy.n_states() || a >= policy.n_actions()) {
            throw validation_error("trajectory step (" + std::to_string(s) + ", " +
                                   std::to_string(a) + ") outside the policy table");
        }
    }
}

double logistic_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sft_loss(const categorical_policy& policy, const tokenized_trajectory& traj, bool mean) {
    validate_trajectory(traj, policy);
    double sum = 0.0;
    size_t masked = 0;
    for (size_t i = 0; i < traj.steps.size(); ++i) {
        if (!traj.action_mask[i]) continue;
        sum -= policy.log_prob(traj.steps[i].first, traj.steps[i].second);
        ++masked;
    }
    return mean ? sum / static_cast<double>(masked) : sum;
}

namespace {

// Sum of probability ratios over masked steps (the as-printed form).
double ratio_sum(const categorical_policy& theta, const categorical_policy& ref,
                 const tokenized_trajectory& traj) {
    double sum = 0.0;
    for (size_t i = 0; i < traj.steps.size(); ++i) {
        if (!traj.action_mask[i]) continue;
        auto [s, a] = traj.steps[i];
        sum += std::exp(theta.log_prob(s, a) - ref.log_prob(s, a));
    }
    return sum;
}

// Sum of log ratios over masked steps.
double log_ratio_sum(const categorical_policy& theta, const categorical_policy& ref,
                     const tokenized_trajectory& traj) {
    double sum = 0.0;
    for (size_t i = 0; i < traj.steps.size(); ++i) {
        if (!traj.action_mask[i]) continue;
        auto [s, a] = traj.steps[i];
        sum += theta.log_prob(s, a) - ref.log_prob(s, a);
    }
    return sum;
}

// -log sigma(x), stable for both signs.
double neg_log_sigmoid(double x) { return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

}  // namespace

double mdpo_loss(const categorical_policy& theta, const categorical_policy& ref,
                 const preference_pair& pair, const loss_config& cfg) {
    if (cfg.eta <= 0.0) throw validation_error("eta must be positive");
    validate_trajectory(pair.chosen, theta);
    validate_trajectory(pair.rejected, theta);
    validate_trajectory(pair.chosen, ref);
    validate_trajectory(pair.rejected, ref);
    double inner;
    if (cfg.form == mdpo_form::as_printed) {
        inner = ratio_sum(theta, ref, pair.rejected) - ratio_sum(theta, ref, pair.chosen);
    } else {
        inner = log_ratio_sum(theta, ref, pair.chosen) - log_ratio_sum(theta, ref, pair.rejected);
    }
    return neg_log_sigmoid(cfg.eta * inner);
}

double combined_loss(const categorical_policy& theta, const categorical_policy& ref,
                     const preference_pair& pair, const loss_config& cfg) {
    if (cfg.lambda < 0.0) throw validation_error("lambda must be >= 0");
    double loss = sft_loss(theta, pair.chosen, cfg.mean_sft);
    if (cfg.lambda != 0.0) loss += cfg.lambda * mdpo_loss(theta, ref, pair, cfg);
    return loss;
}

std::vector<double> grad_combined(const categorical_policy& theta, const categorical_policy& ref,
                                  const preference_pair& pair, const loss_config& cfg) {
    if (cfg.lambda < 0.0) throw validation_error("lambda must be >= 0");
    validate_trajectory(pair.chosen, theta);
    validate_trajectory(pair.rejected, theta);
    const size_t A = theta.n_actions();
    std::vector<double> grad(theta.n_states() * A, 0.0);

    // SFT part: d(-log pi(a|s))/dz_{s,b} = pi(b|s) - [b == a].
    {
        const double scale =
            cfg.mean_sft ? 1.0 / static_cast<double>(pair.chosen.masked_count()) : 1.0;
        for (size_t i = 0; i < pair.chosen.steps.size(); ++i) {
            if (!pair.chosen.action_mask[i]) continue;
            auto [s, a] = pair.chosen.steps[i];
            std::vector<double> probs = theta.probs_row(s);
            for (size_t b = 0; b < A; ++b) {
                grad[s * A + b] += scale * (probs[b] - (b == a ? 1.0 : 0.0));
            }
        }
    }
    if (cfg.lambda == 0.0) return grad;

    // mDPO part.
    if (cfg.form == mdpo_form::as_printed) {
        double inner =
            ratio_sum(theta, ref, pair.rejected) - ratio_sum(theta, ref, pair.chosen);
        double outer = -cfg.eta * logistic_sigmoid(-cfg.eta * inner) * cfg.lambda;
        auto add_side = [&](const tokenized_trajectory& traj, double sign) {
            for (size_t i = 0; i < traj.steps.size(); ++i) {
                if (!traj.action_mask[i]) continue;
                auto [s, a] = traj.steps[i];
                double r = std::exp(theta.log_prob(s, a) - ref.log_prob(s, a));
                std::vector<double> probs = theta.probs_row(s);
                // d r / d z_{s,b} = r * ([b == a] - pi_theta(b|s))
                for (size_t b = 0; b < A; ++b) {
                    grad[s * A + b] +=
                        outer * sign * r * ((b == a ? 1.0 : 0.0) - probs[b]);
                }
            }
        };
        add_side(pair.rejected, +1.0);
        add_side(pair.chosen, -1.0);
    } else {
        double inner = log_ratio_sum(theta, ref, pair.chosen) -
                       log_ratio_sum(theta, ref, pair.rejected);
        double outer = -cfg.eta * logistic_sigmoid(-cfg.eta * inner) * cfg.lambda;
        auto add_side = [&](const tokenized_trajectory& traj, double sign) {
            for (size_t i = 0; i < traj.steps.size(); ++i) {
                if (!traj.action_mask[i]) continue;
                auto [s, a] = traj.steps[i];
                std::vector<double> probs = theta.probs_row(s);
                for (size_t b = 0; b < A; ++b) {
                    grad[s * A + b] += outer * sign * ((b == a ? 1.0 : 0.0) - probs[b]);
                }
            }
        };
        add_side(pair.chosen, +1.0);
        add_side(pair.rejected, -1.0);
    }
    return grad;
}

std::vector<double> fd_grad_combined(const categorical_policy& theta,
                                     const categorical_policy& ref, const preference_pair& pair,
                                     const loss_config& cfg, double step) {
    categorical_policy probe = theta;
    std::vector<double> grad(theta.n_states() * theta.n_actions(), 0.0);
    const size_t A = theta.n_actions();
    for (size_t s = 0; s < theta.n_states(); ++s) {
        for (size_t a = 0; a < A; ++a) {
            double base = theta.logit(s, a);
            probe.set_logit(s, a, base + step);
            double up = combined_loss(probe, ref, pair, cfg);
            probe.set_logit(s, a, base - step);
            double down = combined_loss(probe, ref, pair, cfg);
            probe.set_logit(s, a, base);
            grad[s * A + a] = (up - down) / (2.0 * step);
        }
    }
    return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw validation_error("gradient size mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

namespace {

tokenized_trajectory trajectory_from_json_obj(const json& j) {
    tokenized_trajectory traj;
    for (const auto& step : j.at("steps")) {
        traj.steps.emplace_back(step.at(0).get<size_t>(), step.at(1).get<size_t>());
    }
    for (const auto& m : j.at("mask")) traj.action_mask.push_back(m.get<bool>());
    return traj;
}

std::vector<double> flatten_logits(const json& rows, size_t n_states, size_t n_actions) {
    std::vector<double> out;
    out.reserve(n_states * n_actions);
    if (rows.size() != n_states) throw validation_error("logit row count mismatch");
    for (const auto& row : rows) {
        if (row.size() != n_actions) throw validation_error("logit column count mismatch");
        for (const auto& v : row) out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace

toy_instance toy_instance_from_json(const json& j) {
    size_t n_states = j.at("n_states").get<size_t>();
    size_t n_actions = j.at("n_actions").get<size_t>();
    toy_instance inst{
        categorical_policy(n_states, n_actions,
                           flatten_logits(j.at("theta_logits"), n_states, n_actions)),
        categorical_policy(n_states, n_actions,
                           flatten_logits(j.at("ref_logits"), n_states, n_actions)),
        {}};
    for (const auto& p : j.at("pairs")) {
        preference_pair pair;
        pair.chosen = trajectory_from_json_obj(p.at("w"));
        pair.rejected = trajectory_from_json_obj(p.at("l"));
        validate_trajectory(pair.chosen, inst.theta);
        validate_trajectory(pair.rejected, inst.theta);
        inst.pairs.push_back(std::move(pair));
    }
    if (inst.pairs.empty()) throw validation_error("toy instance has no pairs");
    return inst;
}

toy_instance load_toy_instance(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open toy instance file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("toy instance parse error: ") + e.what());
    }
    return toy_instance_from_json(j);
}

}  // namespace fctraj
