#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fctraj/llm_client.hpp"
#include "test_helpers.hpp"

using namespace fctraj;
using nlohmann::json;

TEST_CASE("rendered nested-judge prompt carries the task sentence") {
    auto msgs = render(template_id::nested_judge,
                       {{"first_function", "{f1}"}, {"second_function", "{f2}"}});
    REQUIRE(msgs.size() == 1);
    CHECK(msgs[0].role == "user");
    CHECK(msgs[0].content.find("determine whether the two functions can be nested") !=
          std::string::npos);
    CHECK(msgs[0].content.find("{f1}") != std::string::npos);
}

TEST_CASE("system prompt pins the bracket format and renders as system role") {
    auto msgs = render(template_id::system_prompt, {{"functions", "[]"}});
    REQUIRE(msgs.size() == 1);
    CHECK(msgs[0].role == "system");
    CHECK(msgs[0].content.find("[func_name1(params_name1=params_value1") != std::string::npos);
    CHECK(msgs[0].content.find("You are an expert in composing functions") != std::string::npos);
}

TEST_CASE("unbound placeholder errors name the slot") {
    try {
        render(template_id::nested_judge, {{"first_function", "x"}});
        FAIL("expected validation_error");
    } catch (const validation_error& e) {
        CHECK(std::string(e.what()).find("second_function") != std::string::npos);
    }
    CHECK_THROWS_AS(render(template_id::system_prompt, {{"functions", "x"}, {"bogus", "y"}}),
                    validation_error);
}

TEST_CASE("placeholder inventory per template") {
    using tid = template_id;
    CHECK(template_placeholders(tid::nested_judge) ==
          std::vector<std::string>{"first_function", "second_function"});
    CHECK(template_placeholders(tid::dependency_judge) ==
          std::vector<std::string>{"target_api", "candidates"});
    CHECK(template_placeholders(tid::domain_classify) == std::vector<std::string>{"function"});
    CHECK(template_placeholders(tid::back_translate) ==
          std::vector<std::string>{"history", "candidates", "forbidden"});
    CHECK(template_placeholders(tid::forth_translate) ==
          std::vector<std::string>{"history", "candidate_function", "reference_output", "query"});
    CHECK(template_placeholders(tid::positive_distill) == std::vector<std::string>{"functions"});
    CHECK(template_placeholders(tid::negative_judge) ==
          std::vector<std::string>{"conversation", "model_response", "reference_response"});
    CHECK(template_placeholders(tid::system_prompt) == std::vector<std::string>{"functions"});
}

TEST_CASE("template bodies quote their paper anchors") {
    CHECK(template_text(template_id::dependency_judge)
              .find("Return only the adjacency dictionary in a json format") !=
          std::string::npos);
    CHECK(template_text(template_id::domain_classify).find("output 'misc'") != std::string::npos);
    CHECK(template_text(template_id::forth_translate).find("output FINISH in this line") !=
          std::string::npos);
    CHECK(template_text(template_id::back_translate)
              .find("You should NOT mention which functions to use in your query explicitly") !=
          std::string::npos);
    CHECK(template_text(template_id::positive_distill).find("[Hint]: miss function") !=
          std::string::npos);
    CHECK(template_text(template_id::positive_distill).find("[Hint]: missed params") !=
          std::string::npos);
    CHECK(template_text(template_id::negative_judge).find("2. Short dependency") !=
          std::string::npos);
    CHECK(template_text(template_id::nested_judge)
              .find("In the first line, If those two functions are nested, output yes, otherwise "
                    "output no") != std::string::npos);
}

TEST_CASE("template checksums match the pinned goldens") {
    std::ifstream in(testing::data_dir() / "prompt_checksums.json");
    REQUIRE_MESSAGE(in.good(), "missing prompt_checksums.json golden");
    json golden = json::parse(in);
    CHECK(golden.size() == template_count);
    for (template_id id : all_template_ids()) {
        std::string name(template_name(id));
        REQUIRE_MESSAGE(golden.contains(name), name);
        CHECK_MESSAGE(golden.at(name).get<std::string>() == template_checksum(id), name);
    }
}

TEST_CASE("yes/no first-line protocol") {
    auto [a, ra] = parse_yes_no_line("yes\nbecause outputs feed inputs");
    CHECK(a);
    CHECK(ra == "because outputs feed inputs");

    auto [b, rb] = parse_yes_no_line("No\n5");
    CHECK(!b);
    CHECK(rb == "5");

    auto [c, rc] = parse_yes_no_line("\n  YES  ");
    CHECK(c);
    CHECK(rc.empty());

    CHECK_THROWS_AS(parse_yes_no_line("maybe"), protocol_error);
    CHECK_THROWS_AS(parse_yes_no_line("   \n \n"), protocol_error);
}

TEST_CASE("retry succeeds after transient failures") {
    int calls = 0;
    rule_chat_backend flaky([&](const auto&, const auto&) -> std::string {
        if (++calls <= 2) throw transport_error("transient");
        return "ok";
    });
    retry_policy policy{2, std::chrono::milliseconds{0}};
    CHECK(complete_with_retry(flaky, {{"user", "x"}}, {}, policy) == "ok");
    CHECK(calls == 3);
}

TEST_CASE("retries exhaust into a transport error with an attempt log") {
    int calls = 0;
    rule_chat_backend dead([&](const auto&, const auto&) -> std::string {
        ++calls;
        throw transport_error("down");
    });
    retry_policy policy{2, std::chrono::milliseconds{0}};
    try {
        complete_with_retry(dead, {{"user", "x"}}, {}, policy);
        FAIL("expected transport_error");
    } catch (const transport_error& e) {
        CHECK(calls == 3);
        std::string msg = e.what();
        CHECK(msg.find("attempt 1") != std::string::npos);
        CHECK(msg.find("attempt 3") != std::string::npos);
    }
}

TEST_CASE("the request gate bounds in-flight calls") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    rule_chat_backend slow([&](const auto&, const auto&) -> std::string {
        int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        --in_flight;
        return "ok";
    });
    request_gate gate(8);
    std::vector<std::thread> threads;
    for (int i = 0; i < 100; ++i) {
        threads.emplace_back([&] {
            complete_with_retry(slow, {{"user", "x"}}, {}, retry_policy{0, {}}, &gate);
        });
    }
    for (auto& t : threads) t.join();
    CHECK(peak.load() <= 8);
    CHECK(in_flight.load() == 0);
}

TEST_CASE("replay backend plays its script then trips") {
    replay_chat_backend replay({"one", "two"});
    CHECK(replay.complete({}, {}) == "one");
    CHECK(replay.complete({}, {}) == "two");
    CHECK_THROWS_AS(replay.complete({}, {}), transport_error);
}

TEST_CASE("http transport round-trips a chat completion") {
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        json reply = {{"choices", {{{"message", {{"content", "hello from server"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("FCTRAJ_TEST_TOKEN", "sekrit", 1);
    http_backend_config cfg;
    cfg.host = "127.0.0.1";
    cfg.port = port;
    cfg.use_tls = false;
    cfg.model = "test-model";
    cfg.token_env = "FCTRAJ_TEST_TOKEN";
    http_chat_backend backend(cfg);

    std::string reply = backend.complete({{"user", "ping"}}, {});
    CHECK(reply == "hello from server");
    CHECK(seen_auth == "Bearer sekrit");
    json body = json::parse(seen_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("messages").at(0).at("content") == "ping");

    server.stop();
    server_thread.join();
}

TEST_CASE("http transport maps failures to typed errors") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    server.Post("/malformed", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"weird\": true}", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    http_backend_config cfg;
    cfg.host = "127.0.0.1";
    cfg.port = port;
    cfg.use_tls = false;
    http_chat_backend backend(cfg);
    CHECK_THROWS_AS(backend.complete({{"user", "x"}}, {}), transport_error);

    cfg.path = "/malformed";
    http_chat_backend backend2(cfg);
    CHECK_THROWS_AS(backend2.complete({{"user", "x"}}, {}), protocol_error);

    cfg.path = "/v1/chat/completions";
    cfg.port = 1;  // nothing listens there
    http_chat_backend backend3(cfg);
    CHECK_THROWS_AS(backend3.complete({{"user", "x"}}, {}), transport_error);

    server.stop();
    server_thread.join();
}
