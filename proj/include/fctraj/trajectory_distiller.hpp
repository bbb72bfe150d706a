#pragma once

#include <map>
#include <optional>

#include "fctraj/trajectory.hpp"

namespace fctraj {

struct turn_judgement {
    bool correct = false;
    std::optional<int> error_type;  // 1..5, present iff not correct
};

struct distill_config {
    bool substep_split = false;  // enforce the one-call-at-a-time protocol
    size_t max_substeps = 6;
    int retries = 2;
    size_t rollouts = 10;  // student trajectories mined per instance
    enum class negative_selection_t { first_turn, all_turns };
    negative_selection_t negative_selection = negative_selection_t::first_turn;
};

// The hinted view of one instance: per-turn user text "query\n[Hint]: ...".
struct hinted_conversation {
    std::vector<function_signature> system_functions;
    std::vector<std::string> user_messages;
    std::vector<std::optional<hint>> hints;  // none = un-hinted rollout
    const translation_instance* source = nullptr;
};

// Correct hints for normal turns, the miss markers for miss turns.
// Throws validation_error on an empty instance.
hinted_conversation inject_hints(const translation_instance& inst, const function_pool& pool);
// Same, with per-turn overrides (misleading hints for negatives).
hinted_conversation inject_hints(const translation_instance& inst, const function_pool& pool,
                                 const std::map<size_t, hint>& overrides);
// No hints at all (student mining rollouts).
hinted_conversation plain_conversation(const translation_instance& inst,
                                       const function_pool& pool);

// Drives `model` turn by turn, executing any emitted calls and feeding the
// outputs back before the next completion. Actions containing "[Hint]" are
// retried and then dropped. The result still carries its hints; strip_hints
// before persisting.
trajectory sample_trajectory(chat_backend& model, const hinted_conversation& conversation,
                             executor& exec, const function_pool& pool,
                             const distill_config& config, polarity pol, uint64_t rollout_seed = 0);

trajectory sample_positive(chat_backend& teacher, const hinted_conversation& conversation,
                           executor& exec, const function_pool& pool,
                           const distill_config& config = {});

// Two-line protocol: yes/no, then the error number when no.
turn_judgement judge_turn(chat_backend& judge, const std::string& conversation,
                          const std::string& model_action, const std::string& reference_action);

// k un-hinted student rollouts; every turn judged against the reference;
// wrong turns whose action parses as calls contribute misleading-hint texts.
// Judgement failures reduce coverage but never abort.
std::map<size_t, std::vector<std::string>> mine_negative_hints(
    chat_backend& student, const translation_instance& inst, chat_backend& judge, executor& exec,
    const function_pool& pool, size_t k, const distill_config& config = {});

// Misleading hints where mined (per config.negative_selection), correct
// elsewhere. Throws validation_error when nothing was mined.
trajectory sample_negative(chat_backend& student, const translation_instance& inst,
                           const std::map<size_t, std::vector<std::string>>& mined, executor& exec,
                           const function_pool& pool, const distill_config& config = {});

// Truncates every user message at the "[Hint]:" marker and drops the hint
// records; actions are untouched. Idempotent.
trajectory strip_hints(const trajectory& traj);

struct distill_outcome {
    std::optional<trajectory> positive;           // stripped
    std::optional<trajectory_pair> pair;          // stripped on both sides
    std::map<size_t, std::vector<std::string>> mined;
    std::string drop_reason;
};

distill_outcome distill_instance(const translation_instance& inst, const function_pool& pool,
                                 chat_backend& teacher, chat_backend* student,
                                 chat_backend* judge, executor& exec,
                                 const distill_config& config);

// Deterministic teacher double: follows whatever [Hint] the last user
// message carries (calls echoed, markers answered with text), then
// summarizes the tool feedback.
class hint_following_backend final : public chat_backend {
public:
    explicit hint_following_backend(bool substep_split = false) : substep_split_(substep_split) {}
    std::string complete(const std::vector<chat_message>& messages,
                         const chat_params& params) override;

private:
    bool substep_split_;
};

// Deterministic SFT-model double for mining: replays the instance's
// reference calls but corrupts turns chosen by (seed, rollout seed, turn).
class scripted_student_backend final : public chat_backend {
public:
    scripted_student_backend(const translation_instance& inst, uint64_t seed, double wrong_rate);
    std::string complete(const std::vector<chat_message>& messages,
                         const chat_params& params) override;

private:
    std::vector<std::string> reference_;  // per-turn hint_reference text
    uint64_t seed_;
    double wrong_rate_;
};

// Deterministic judge double: pulls the model/reference sections back out
// of the rendered negative_judge prompt and compares parsed call lists, so
// the real prompt + parsing path is exercised.
class comparing_judge_backend final : public chat_backend {
public:
    std::string complete(const std::vector<chat_message>& messages,
                         const chat_params& params) override;
};

}  // namespace fctraj
