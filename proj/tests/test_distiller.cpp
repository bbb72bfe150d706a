#include <doctest.h>

#include "fctraj/trajectory_distiller.hpp"
#include "test_helpers.hpp"

using namespace fctraj;

namespace {

simulated_executor make_exec() {
    simulated_executor_config cfg;
    cfg.seed = 909;
    return simulated_executor(cfg);
}

// A 2-turn instance over the toy pool with the paper's reference call.
translation_instance sample_instance() {
    translation_instance inst;
    inst.id = "unit-1";
    inst.source_fsp_seed = 4242;
    inst.tools = {"get_distance", "set_navigation"};

    query_fc_turn t1;
    t1.query = "Please check how far it is from San Francisco to San Mateo.";
    t1.reference_calls =
        parse_fc_list(R"([get_distance(from_loc="San Francisco", to_loc="San Mateo")])");
    t1.hint_reference = serialize_calls(t1.reference_calls);
    t1.tools = inst.tools;
    simulated_executor exec = make_exec();
    t1.outputs.push_back(
        exec.execute(t1.reference_calls.calls[0], testing::toy_pool().at("get_distance")));

    query_fc_turn t2;
    t2.query = "Now set up navigation with the obtained distance.";
    function_call nav;
    nav.name = "set_navigation";
    nav.args.emplace_back("distance",
                          fc_value::of(t1.outputs[0].payload.at("output").get<std::string>()));
    t2.reference_calls.calls.push_back(nav);
    t2.hint_reference = serialize_calls(t2.reference_calls);
    t2.tools = inst.tools;
    t2.outputs.push_back(exec.execute(nav, testing::toy_pool().at("set_navigation")));

    inst.turns = {t1, t2};
    return inst;
}

translation_instance miss_instance(miss_label label) {
    translation_instance inst = sample_instance();
    query_fc_turn miss;
    miss.query = "And one more thing, but I will hold back a detail.";
    miss.miss = label;
    miss.hint_reference = label == miss_label::miss_func ? "miss function" : "missed params";
    miss.tools = inst.tools;
    inst.turns.insert(inst.turns.begin() + 1, miss);
    return inst;
}

}  // namespace

TEST_CASE("inject_hints appends the serialized reference after each query") {
    translation_instance inst = sample_instance();
    hinted_conversation conv = inject_hints(inst, testing::toy_pool());
    REQUIRE(conv.user_messages.size() == 2);
    std::string expected_tail =
        "[Hint]: get_distance(from_loc=\"San Francisco\", to_loc=\"San Mateo\")";
    const std::string& first = conv.user_messages[0];
    REQUIRE(first.size() >= expected_tail.size());
    CHECK(first.substr(first.size() - expected_tail.size()) == expected_tail);
    CHECK(conv.hints[0]->kind == hint_kind::correct);
    CHECK(conv.system_functions.size() == 2);
}

TEST_CASE("miss turns carry the marker hints") {
    translation_instance inst = miss_instance(miss_label::miss_params);
    hinted_conversation conv = inject_hints(inst, testing::toy_pool());
    CHECK(conv.user_messages[1].find("[Hint]: missed params") != std::string::npos);
    CHECK(conv.hints[1]->kind == hint_kind::miss_params);

    translation_instance inst2 = miss_instance(miss_label::miss_func);
    hinted_conversation conv2 = inject_hints(inst2, testing::toy_pool());
    CHECK(conv2.user_messages[1].find("[Hint]: miss function") != std::string::npos);
}

TEST_CASE("an empty instance cannot be hinted") {
    translation_instance inst;
    inst.id = "empty";
    CHECK_THROWS_AS(inject_hints(inst, testing::toy_pool()), validation_error);
}

TEST_CASE("the echo teacher reproduces the reference calls turn by turn") {
    translation_instance inst = sample_instance();
    hinted_conversation conv = inject_hints(inst, testing::toy_pool());
    hint_following_backend teacher(false);
    simulated_executor exec = make_exec();
    trajectory traj = sample_positive(teacher, conv, exec, testing::toy_pool(), {});

    CHECK(traj.pol == polarity::positive);
    CHECK(traj.id == "unit-1#pos");
    CHECK(traj.type == "multi_turn");
    REQUIRE(traj.turns.size() == 2);
    for (size_t h = 0; h < traj.turns.size(); ++h) {
        fc_list acted = traj.turns[h].actions_calls();
        CHECK(serialize_calls(acted) == inst.turns[h].hint_reference);
        // call/output alignment
        CHECK(traj.turns[h].output_count() == acted.size());
    }
    // first step holds the calls, second step the summary text
    CHECK(traj.turns[0].steps.size() == 2);
    CHECK(traj.turns[0].steps[1].action.find("[") != 0);
}

TEST_CASE("miss-params turns produce a pure-text question") {
    translation_instance inst = miss_instance(miss_label::miss_params);
    hinted_conversation conv = inject_hints(inst, testing::toy_pool());
    hint_following_backend teacher(false);
    simulated_executor exec = make_exec();
    trajectory traj = sample_positive(teacher, conv, exec, testing::toy_pool(), {});
    REQUIRE(traj.turns.size() == 3);
    const traj_turn& miss = traj.turns[1];
    REQUIRE(miss.steps.size() == 1);
    CHECK(miss.steps[0].action.find('?') != std::string::npos);
    CHECK(miss.actions_calls().empty());
    CHECK(miss.steps[0].outputs.empty());
}

TEST_CASE("substep splitting emits one call per assistant step") {
    translation_instance inst = sample_instance();
    // merge both calls into one turn to exercise the one-at-a-time protocol
    translation_instance merged;
    merged.id = "unit-multi";
    merged.tools = inst.tools;
    query_fc_turn turn;
    turn.query = "Check the distance and then set navigation with it.";
    turn.reference_calls.calls = {inst.turns[0].reference_calls.calls[0],
                                  inst.turns[1].reference_calls.calls[0]};
    turn.hint_reference = serialize_calls(turn.reference_calls);
    turn.tools = merged.tools;
    merged.turns = {turn};

    hinted_conversation conv = inject_hints(merged, testing::toy_pool());
    hint_following_backend teacher(true);
    simulated_executor exec = make_exec();
    distill_config cfg;
    cfg.substep_split = true;
    trajectory traj = sample_trajectory(teacher, conv, exec, testing::toy_pool(), cfg,
                                        polarity::positive);
    REQUIRE(traj.turns.size() == 1);
    // two call steps then one summary step
    REQUIRE(traj.turns[0].steps.size() == 3);
    CHECK(parse_fc_list(traj.turns[0].steps[0].action).size() == 1);
    CHECK(parse_fc_list(traj.turns[0].steps[1].action).size() == 1);
    CHECK(traj.turns[0].steps[2].outputs.empty());
    CHECK(traj.turns[0].output_count() == 2);
}

TEST_CASE("judge_turn parses the two-line protocol") {
    replay_chat_backend no2("no\n2" == "" ? std::vector<std::string>{} : std::vector<std::string>{"no\n2"});
    turn_judgement j = judge_turn(no2, "conv", "[f(x=1)]", "[f(x=2)]");
    CHECK(!j.correct);
    CHECK(j.error_type == 2);

    replay_chat_backend yes({"yes"});
    turn_judgement j2 = judge_turn(yes, "conv", "[f(x=1)]", "[f(x=1)]");
    CHECK(j2.correct);
    CHECK(!j2.error_type.has_value());

    replay_chat_backend maybe({"maybe", "maybe", "maybe"});
    CHECK_THROWS_AS(judge_turn(maybe, "c", "m", "r"), judgment_error);

    replay_chat_backend no_number({"no\nbad", "no\nbad", "no\nbad"});
    CHECK_THROWS_AS(judge_turn(no_number, "c", "m", "r"), judgment_error);

    replay_chat_backend out_of_range({"no\n9", "no\n9", "no\n9"});
    CHECK_THROWS_AS(judge_turn(out_of_range, "c", "m", "r"), judgment_error);
}

TEST_CASE("the comparing judge distinguishes the error families") {
    comparing_judge_backend judge;
    auto verdict = [&](const std::string& model, const std::string& reference) {
        auto msgs = render(template_id::negative_judge, {{"conversation", "c"},
                                                         {"model_response", model},
                                                         {"reference_response", reference}});
        return judge.complete(msgs, {});
    };
    CHECK(parse_yes_no_line(verdict("[f(x=1)]", "f(x=1)")).first);
    CHECK(verdict("[f(x=1)]", "f(x=2)") == "no\n2");
    CHECK(verdict("just text", "f(x=1)") == "no\n5");
    CHECK(verdict("[f(x=1)]", "missed params") == "no\n5");
    CHECK(verdict("same text", "same text") == "yes\nidentical text");
    CHECK(verdict("one text", "another text") == "no\n4");
}

TEST_CASE("mining collects wrong calls from an error-prone student") {
    translation_instance inst = sample_instance();
    scripted_student_backend student(inst, /*seed=*/5, /*wrong_rate=*/0.6);
    comparing_judge_backend judge;
    simulated_executor exec = make_exec();
    auto mined = mine_negative_hints(student, inst, judge, exec, testing::toy_pool(), 10, {});
    REQUIRE(!mined.empty());
    size_t total = 0;
    for (const auto& [turn, texts] : mined) {
        CHECK(turn < inst.turns.size());
        for (const auto& text : texts) {
            fc_list parsed = parse_call_list(text);  // every mined hint parses
            CHECK(!parsed.empty());
            CHECK(text != inst.turns[turn].hint_reference);
            ++total;
        }
    }
    CHECK(total > 0);
}

TEST_CASE("a perfect student mines nothing") {
    translation_instance inst = sample_instance();
    scripted_student_backend student(inst, 5, 0.0);
    comparing_judge_backend judge;
    simulated_executor exec = make_exec();
    auto mined = mine_negative_hints(student, inst, judge, exec, testing::toy_pool(), 10, {});
    CHECK(mined.empty());
    CHECK_THROWS_AS(
        mine_negative_hints(student, inst, judge, exec, testing::toy_pool(), 0, {}),
        validation_error);
}

TEST_CASE("k bounds the number of mined texts per turn") {
    translation_instance inst = sample_instance();
    scripted_student_backend student(inst, 5, 1.0);  // always wrong
    comparing_judge_backend judge;
    simulated_executor exec = make_exec();
    auto mined = mine_negative_hints(student, inst, judge, exec, testing::toy_pool(), 1, {});
    for (const auto& [_, texts] : mined) CHECK(texts.size() <= 1);
}

TEST_CASE("judgement failures skip turns without aborting the mining") {
    translation_instance inst = sample_instance();
    scripted_student_backend student(inst, 5, 1.0);
    rule_chat_backend broken_judge([](const auto&, const auto&) -> std::string { return "?"; });
    simulated_executor exec = make_exec();
    auto mined = mine_negative_hints(student, inst, broken_judge, exec, testing::toy_pool(), 3, {});
    CHECK(mined.empty());  // nothing judged, nothing mined, no exception
}

TEST_CASE("negative sampling differs from the positive exactly at the misled turn") {
    translation_instance inst = sample_instance();
    hint_following_backend follower(false);
    simulated_executor exec = make_exec();
    trajectory positive =
        strip_hints(sample_positive(follower, inject_hints(inst, testing::toy_pool()), exec,
                                    testing::toy_pool(), {}));

    std::map<size_t, std::vector<std::string>> mined = {
        {1, {"set_navigation(distance=\"wrong_way\")"}}};
    trajectory negative = strip_hints(
        sample_negative(follower, inst, mined, exec, testing::toy_pool(), {}));
    CHECK(negative.pol == polarity::negative);
    CHECK(negative.id == "unit-1#neg");
    REQUIRE(negative.turns.size() == positive.turns.size());
    CHECK(negative.turns[0].steps[0].action == positive.turns[0].steps[0].action);
    CHECK(negative.turns[1].steps[0].action != positive.turns[1].steps[0].action);
    CHECK(negative.turns[1].steps[0].action.find("wrong_way") != std::string::npos);
    CHECK(negative.turns[1].query == positive.turns[1].query);
}

TEST_CASE("negative sampling requires mined hints that parse") {
    translation_instance inst = sample_instance();
    hint_following_backend follower(false);
    simulated_executor exec = make_exec();
    CHECK_THROWS_AS(sample_negative(follower, inst, {}, exec, testing::toy_pool(), {}),
                    validation_error);
    CHECK_THROWS_AS(misleading_hint("this is not a call"), validation_error);
    CHECK_THROWS_AS(validate_hint(hint{hint_kind::miss_function, "wrong text"}),
                    validation_error);
    CHECK_THROWS_AS(validate_hint(hint{hint_kind::miss_params, "miss function"}),
                    validation_error);
}

TEST_CASE("strip_hints removes markers exactly and idempotently") {
    translation_instance inst = sample_instance();
    hint_following_backend teacher(false);
    simulated_executor exec = make_exec();
    trajectory hinted =
        sample_positive(teacher, inject_hints(inst, testing::toy_pool()), exec,
                        testing::toy_pool(), {});
    CHECK(hinted.contains_hint_marker());

    trajectory stripped = strip_hints(hinted);
    CHECK(!stripped.contains_hint_marker());
    for (const auto& m : render_messages(stripped)) {
        CHECK(m.content.find("[Hint]") == std::string::npos);
    }
    // queries are intact up to the marker
    CHECK(stripped.turns[0].query == inst.turns[0].query);
    // idempotent
    CHECK(strip_hints(stripped) == stripped);
}

TEST_CASE("a lowercase 'hint' in the query survives stripping") {
    trajectory traj;
    traj.id = "t";
    traj.type = "single_turn";
    traj.system_functions = {testing::toy_pool().at("get_distance")};
    traj_turn turn;
    turn.query = "give me a hint about the distance\n[Hint]: get_distance(from_loc=\"a\", to_loc=\"b\")";
    turn.steps.push_back(turn_step{"ok", {}});
    traj.turns.push_back(turn);
    trajectory stripped = strip_hints(traj);
    CHECK(stripped.turns[0].query == "give me a hint about the distance");
}

TEST_CASE("a teacher that leaks the marker is rejected") {
    translation_instance inst = sample_instance();
    rule_chat_backend leaky(
        [](const auto&, const auto&) -> std::string { return "look: [Hint]: f(x=1)"; });
    simulated_executor exec = make_exec();
    distill_config cfg;
    CHECK_THROWS_AS(sample_trajectory(leaky, inject_hints(inst, testing::toy_pool()), exec,
                                      testing::toy_pool(), cfg, polarity::positive),
                    protocol_error);
}

TEST_CASE("distill_instance produces a stripped positive and a valid pair") {
    translation_instance inst = sample_instance();
    hint_following_backend teacher(false);
    scripted_student_backend student(inst, 5, 0.7);
    comparing_judge_backend judge;
    simulated_executor exec = make_exec();
    distill_config cfg;
    cfg.rollouts = 10;
    distill_outcome outcome =
        distill_instance(inst, testing::toy_pool(), teacher, &student, &judge, exec, cfg);
    REQUIRE(outcome.positive.has_value());
    CHECK(!outcome.positive->contains_hint_marker());
    REQUIRE(outcome.pair.has_value());
    const trajectory_pair& pair = *outcome.pair;
    CHECK(pair.instance_id == "unit-1");
    REQUIRE(pair.chosen.turns.size() == pair.rejected.turns.size());
    bool differs = false;
    for (size_t h = 0; h < pair.chosen.turns.size(); ++h) {
        CHECK(pair.chosen.turns[h].query == pair.rejected.turns[h].query);
        if (pair.chosen.turns[h].steps.front().action !=
            pair.rejected.turns[h].steps.front().action) {
            differs = true;
        }
    }
    CHECK(differs);
    CHECK(!outcome.mined.empty());
}

TEST_CASE("trajectories round-trip through JSONL with spans intact") {
    translation_instance inst = miss_instance(miss_label::miss_func);
    hint_following_backend teacher(false);
    simulated_executor exec = make_exec();
    trajectory traj =
        strip_hints(sample_positive(teacher, inject_hints(inst, testing::toy_pool()), exec,
                                    testing::toy_pool(), {}));

    auto file = testing::tmp_dir("distill") / "traj.jsonl";
    save_trajectories({traj}, file);
    auto loaded = load_trajectories(file);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == traj);
    CHECK(trajectory_to_json(loaded[0]).dump() == trajectory_to_json(traj).dump());

    // rendered view: system prompt first, then user/assistant/tool
    auto messages = render_messages(traj);
    CHECK(messages[0].role == "system");
    CHECK(messages[0].content.find("You are an expert in composing functions") !=
          std::string::npos);
    CHECK(messages[1].role == "user");
    auto spans = action_spans(traj);
    REQUIRE(spans.size() == traj.turns.size());
    for (size_t h = 0; h < spans.size(); ++h) {
        REQUIRE(spans[h].size() == traj.turns[h].steps.size());
        for (size_t s = 0; s < spans[h].size(); ++s) {
            CHECK(messages[spans[h][s]].role == "assistant");
            CHECK(messages[spans[h][s]].content == traj.turns[h].steps[s].action);
        }
    }

    trajectory_pair pair{"unit-1", traj, traj};
    auto pair_file = testing::tmp_dir("distill") / "pairs.jsonl";
    save_pairs({pair}, pair_file);
    auto pairs = load_pairs(pair_file);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].chosen == traj);
}
