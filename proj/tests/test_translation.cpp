#include <doctest.h>

#include <set>

#include "fctraj/translation.hpp"
#include "test_helpers.hpp"

using namespace fctraj;
using nlohmann::json;

namespace {

fsp chain(const std::vector<std::string>& ids) {
    fsp path;
    for (const auto& id : ids) path.turns.push_back(turn_group{{id}, miss_label::none});
    path.provenance.start = ids.empty() ? "" : ids.front();
    path.provenance.seed = 4242;
    return path;
}

simulated_executor make_exec(double error_rate = 0.0,
                             std::vector<std::string> keywords = {"Bad request",
                                                                  "does not match"}) {
    simulated_executor_config cfg;
    cfg.seed = 77;
    cfg.error_rate = error_rate;
    cfg.error_keywords = std::move(keywords);
    return simulated_executor(cfg);
}

}  // namespace

TEST_CASE("two-turn chain threads turn-1 output into turn-2 args") {
    fsp path = chain({"get_distance", "set_navigation"});
    mock_translation_backend backend;
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());
    const translation_instance& inst = *r.instance;
    REQUIRE(inst.turns.size() == 2);
    CHECK(inst.turns[0].reference_calls.size() == 1);
    CHECK(inst.turns[0].outputs.size() == 1);

    // The second call's first required param equals the first output's value.
    std::string produced = inst.turns[0].outputs[0].payload.at("output").get<std::string>();
    const function_call& second = inst.turns[1].reference_calls.calls[0];
    CHECK(second.name == "set_navigation");
    REQUIRE(second.find_arg("distance"));
    CHECK(second.find_arg("distance")->s == produced);

    // and the query mentions the reuse rather than the literal
    CHECK(inst.turns[1].query.find("result you just obtained") != std::string::npos);
    CHECK(inst.tools == std::vector<function_id>{"get_distance", "set_navigation"});
}

TEST_CASE("every reference call validates against its turn signatures") {
    fsp path = chain({"get_distance", "convert_unit", "set_navigation"});
    mock_translation_backend backend;
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());
    for (const auto& turn : r.instance->turns) {
        for (const auto& fc : turn.reference_calls) {
            CHECK(validate_args(fc, testing::toy_pool().at(fc.name)).ok());
        }
        CHECK(turn.outputs.size() == turn.reference_calls.size());
        CHECK(turn.reference_calls.size() <= 3);
    }
}

TEST_CASE("FINISH on the first turn drops the instance") {
    struct finishing_backend final : translation_backend {
        std::string back_translate(const turn_context&) override { return "do something"; }
        std::string forth_translate(const turn_context&) override {
            return "Thought: nothing fits.\nAnswer: FINISH";
        }
    } backend;
    fsp path = chain({"get_distance", "set_navigation"});
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    CHECK(!r.instance.has_value());
    CHECK(r.drop_reason.find("min_turns") != std::string::npos);
}

TEST_CASE("FINISH later truncates but keeps a long-enough prefix") {
    struct finish_at_third final : translation_backend {
        mock_translation_backend inner;
        std::string back_translate(const turn_context& ctx) override {
            return inner.back_translate(ctx);
        }
        std::string forth_translate(const turn_context& ctx) override {
            if (ctx.turn_index == 2) return "Answer: FINISH";
            return inner.forth_translate(ctx);
        }
    } backend;
    fsp path = chain({"get_distance", "set_navigation", "convert_unit"});
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());
    CHECK(r.instance->turns.size() == 2);
}

TEST_CASE("miss-params stub elides the last required parameter") {
    fsp path = chain({"set_navigation", "get_distance"});
    path.turns.insert(path.turns.begin() + 1, turn_group{{}, miss_label::miss_params});
    mock_translation_backend backend;
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());
    const translation_instance& inst = *r.instance;
    REQUIRE(inst.turns.size() == 3);

    const query_fc_turn& miss = inst.turns[1];
    CHECK(miss.miss == miss_label::miss_params);
    CHECK(miss.reference_calls.empty());
    CHECK(miss.outputs.empty());
    CHECK(miss.hint_reference == "missed params");
    // the from_loc value is present, the withheld to_loc value is not
    std::string kept = placeholder_text(4242, "get_distance", "from_loc");
    std::string withheld = placeholder_text(4242, "get_distance", "to_loc");
    CHECK(miss.query.find(kept) != std::string::npos);
    CHECK(miss.query.find(withheld) == std::string::npos);
    CHECK(miss.query.find("to_loc") != std::string::npos);  // asks about it

    // the resumption turn supplies the withheld value and still executes
    const query_fc_turn& resume = inst.turns[2];
    CHECK(resume.query.find(withheld) != std::string::npos);
    REQUIRE(resume.reference_calls.size() == 1);
    CHECK(resume.outputs.size() == 1);
}

TEST_CASE("miss-func stub withholds the target from that turn's tools") {
    fsp path = chain({"set_navigation", "get_distance"});
    path.turns.insert(path.turns.begin() + 1, turn_group{{}, miss_label::miss_func});
    mock_translation_backend backend;
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());
    const query_fc_turn& miss = r.instance->turns[1];
    CHECK(miss.miss == miss_label::miss_func);
    CHECK(miss.hint_reference == "miss function");
    // capability described, function withheld from this turn's tool list
    CHECK(miss.query.find("distance") != std::string::npos);
    CHECK(std::find(miss.tools.begin(), miss.tools.end(), "get_distance") == miss.tools.end());
    CHECK(std::find(miss.tools.begin(), miss.tools.end(), "set_navigation") != miss.tools.end());
    // other turns keep the full list
    const auto& t0 = r.instance->turns[0].tools;
    CHECK(std::find(t0.begin(), t0.end(), "get_distance") != t0.end());
}

TEST_CASE("invalid forth output is retried once and then dropped") {
    struct bad_param_backend final : translation_backend {
        int forth_calls = 0;
        std::string back_translate(const turn_context&) override { return "q"; }
        std::string forth_translate(const turn_context&) override {
            ++forth_calls;
            return "Answer: get_distance(from_loc=\"a\", to_loc=\"b\", speed=3)";
        }
    } backend;
    fsp path = chain({"get_distance", "set_navigation"});
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    CHECK(!r.instance.has_value());
    CHECK(backend.forth_calls == 2);  // first try + one validation retry
    CHECK(r.drop_reason.find("speed") != std::string::npos);
}

TEST_CASE("more than three parallel calls is a validation failure") {
    struct four_calls final : translation_backend {
        std::string back_translate(const turn_context&) override { return "q"; }
        std::string forth_translate(const turn_context&) override {
            return "Answer: get_distance(from_loc=\"a\", to_loc=\"b\"), "
                   "get_distance(from_loc=\"c\", to_loc=\"d\"), "
                   "get_distance(from_loc=\"e\", to_loc=\"f\"), "
                   "get_distance(from_loc=\"g\", to_loc=\"h\")";
        }
    } backend;
    fsp path = chain({"get_distance", "set_navigation"});
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    CHECK(!r.instance.has_value());
    CHECK(r.drop_reason.find("parallel") != std::string::npos);
}

TEST_CASE("calls outside the turn group are rejected") {
    struct wrong_fn final : translation_backend {
        std::string back_translate(const turn_context&) override { return "q"; }
        std::string forth_translate(const turn_context&) override {
            return "Answer: weather_alerts(region=\"here\")";
        }
    } backend;
    fsp path = chain({"get_distance", "set_navigation"});
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    CHECK(!r.instance.has_value());
    CHECK(r.drop_reason.find("outside the turn group") != std::string::npos);
}

TEST_CASE("forth reply parsing accepts both layouts and FINISH") {
    forth_answer a = parse_forth_reply("Thought: x\nAnswer: f(x=1)");
    CHECK(a.calls.size() == 1);
    forth_answer b = parse_forth_reply("Thought: y\nAnswer:\n[f(x=1), g(y=2)]");
    CHECK(b.calls.size() == 2);
    forth_answer c = parse_forth_reply("Answer: FINISH");
    CHECK(c.finish);
    CHECK_THROWS_AS(parse_forth_reply("no answer line at all"), parse_error);
    CHECK_THROWS_AS(parse_forth_reply("Answer:"), parse_error);
    CHECK_THROWS_AS(parse_forth_reply("Answer: f(x=1]"), parse_error);
}

TEST_CASE("sequencing: forth-translation reads only the previous turn's outputs") {
    fsp path = chain({"get_distance", "set_navigation", "cities_by_range"});
    mock_translation_backend backend;
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());
    for (const auto& [turn_index, read_turn] : backend.access_log()) {
        if (read_turn) CHECK(*read_turn == turn_index - 1);
    }
    // turn 0 must not read anything
    CHECK(!backend.access_log().front().second.has_value());
}

TEST_CASE("simulated execution is deterministic and argument-sensitive") {
    const function_signature& sig = testing::toy_pool().at("get_distance");
    simulated_executor exec = make_exec();
    function_call fc;
    fc.name = "get_distance";
    fc.args.emplace_back("from_loc", fc_value::of(std::string("a")));
    fc.args.emplace_back("to_loc", fc_value::of(std::string("b")));

    tool_output first = exec.execute(fc, sig);
    tool_output second = exec.execute(fc, sig);
    CHECK(first.payload == second.payload);
    CHECK(!first.is_error);
    CHECK(first.payload.at("api") == "get_distance");
    // response_info tokens become fields
    CHECK(first.payload.at("fields").contains("distance"));

    // 10k distinct argument sets -> 10k distinct payloads
    std::set<std::string> payloads;
    for (int i = 0; i < 10000; ++i) {
        function_call probe = fc;
        probe.args[0].second = fc_value::of("loc_" + std::to_string(i));
        payloads.insert(exec.execute(probe, sig).payload.dump());
    }
    CHECK(payloads.size() == 10000);
}

TEST_CASE("full error injection plants the configured keyword") {
    const function_signature& sig = testing::toy_pool().at("get_distance");
    simulated_executor exec = make_exec(1.0, {"Bad request"});
    function_call fc;
    fc.name = "get_distance";
    fc.args.emplace_back("from_loc", fc_value::of(std::string("x")));
    fc.args.emplace_back("to_loc", fc_value::of(std::string("y")));
    tool_output out = exec.execute(fc, sig);
    CHECK(out.is_error);
    CHECK(out.payload_text().find("Bad request") != std::string::npos);

    // rate 0 never injects
    simulated_executor clean = make_exec(0.0);
    CHECK(!clean.execute(fc, sig).is_error);
}

TEST_CASE("instances round-trip through JSONL") {
    fsp path = chain({"get_distance", "set_navigation"});
    path.turns.insert(path.turns.begin() + 1, turn_group{{}, miss_label::miss_params});
    mock_translation_backend backend;
    simulated_executor exec = make_exec();
    translate_result r = translate_fsp(path, testing::toy_pool(), backend, exec, {});
    REQUIRE(r.instance.has_value());

    auto file = testing::tmp_dir("translate") / "instances.jsonl";
    save_instances({*r.instance}, file);
    auto loaded = load_instances(file);
    REQUIRE(loaded.size() == 1);
    CHECK(instance_to_json(loaded[0]).dump() == instance_to_json(*r.instance).dump());
}

TEST_CASE("whole translation is deterministic under the mock") {
    fsp path = chain({"get_distance", "set_navigation", "convert_unit"});
    mock_translation_backend b1, b2;
    simulated_executor e1 = make_exec(), e2 = make_exec();
    translate_result r1 = translate_fsp(path, testing::toy_pool(), b1, e1, {});
    translate_result r2 = translate_fsp(path, testing::toy_pool(), b2, e2, {});
    REQUIRE(r1.instance.has_value());
    REQUIRE(r2.instance.has_value());
    CHECK(instance_to_json(*r1.instance).dump() == instance_to_json(*r2.instance).dump());
}
