#include <doctest.h>

#include <cmath>

#include "fctraj/fc_language.hpp"
#include "fctraj/rng.hpp"
#include "test_helpers.hpp"

using namespace fctraj;

TEST_CASE("parses the two-argument reference call") {
    fc_list fcs = parse_fc_list(R"([get_distance(from_loc="San Francisco", to_loc="San Mateo")])");
    REQUIRE(fcs.size() == 1);
    const function_call& fc = fcs.calls[0];
    CHECK(fc.name == "get_distance");
    REQUIRE(fc.args.size() == 2);
    CHECK(fc.args[0].first == "from_loc");
    CHECK(fc.args[0].second.k == fc_value::kind::string);
    CHECK(fc.args[0].second.s == "San Francisco");
    CHECK(fc.args[1].second.s == "San Mateo");
}

TEST_CASE("empty list") {
    CHECK(parse_fc_list("[]").empty());
    CHECK(serialize_fc_list(fc_list{}) == "[]");
}

TEST_CASE("parallel calls of the same function") {
    fc_list fcs = parse_fc_list("[f(x=1), f(x=2)]");
    REQUIRE(fcs.size() == 2);
    CHECK(fcs.calls[0].name == "f");
    CHECK(fcs.calls[1].name == "f");
    CHECK(fcs.calls[0].args[0].second.i == 1);
    CHECK(fcs.calls[1].args[0].second.i == 2);
}

TEST_CASE("value grammar corners") {
    fc_list fcs = parse_fc_list(
        "[f(a=true, b=false, c=null, d=-3.5e2, e=[1, \"two\", [3]], g=\"q\\\"uote\")]");
    const auto& args = fcs.calls[0].args;
    CHECK(args[0].second.b == true);
    CHECK(args[1].second.b == false);
    CHECK(args[2].second.k == fc_value::kind::null_marker);
    CHECK(args[3].second.k == fc_value::kind::real);
    CHECK(args[3].second.d == doctest::Approx(-350.0));
    REQUIRE(args[4].second.k == fc_value::kind::list);
    CHECK(args[4].second.items.size() == 3);
    CHECK(args[5].second.s == "q\"uote");
}

TEST_CASE("barewords become strings and keep inner spaces") {
    fc_list fcs = parse_fc_list("[f(x=San Francisco, y=2nd_street)]");
    CHECK(fcs.calls[0].args[0].second.s == "San Francisco");
    CHECK(fcs.calls[0].args[1].second.s == "2nd_street");
    // Serialization always quotes.
    CHECK(serialize_fc_list(fcs) == "[f(x=\"San Francisco\", y=\"2nd_street\")]");
}

TEST_CASE("integers and reals stay distinct through a round trip") {
    fc_list fcs = parse_fc_list("[f(i=1, r=1.0)]");
    CHECK(fcs.calls[0].args[0].second.k == fc_value::kind::integer);
    CHECK(fcs.calls[0].args[1].second.k == fc_value::kind::real);
    std::string text = serialize_fc_list(fcs);
    CHECK(text == "[f(i=1, r=1.0)]");
    CHECK(parse_fc_list(text) == fcs);
}

TEST_CASE("escaped string round trip") {
    fc_list fcs;
    function_call fc;
    fc.name = "note";
    fc.args.emplace_back("text", fc_value::of(std::string("line1\n\"x\\y\"\ttab")));
    fcs.calls.push_back(fc);
    std::string text = serialize_fc_list(fcs);
    CHECK(parse_fc_list(text) == fcs);
}

TEST_CASE("syntax errors carry positions") {
    CHECK_THROWS_AS(parse_fc_list("[f(x=1]"), parse_error);
    CHECK_THROWS_AS(parse_fc_list("[f(x 1)]"), parse_error);
    CHECK_THROWS_AS(parse_fc_list("f(x=1)"), parse_error);     // no brackets
    CHECK_THROWS_AS(parse_fc_list("[f(x=\"a\\q\")]"), parse_error);  // bad escape
    CHECK_THROWS_AS(parse_fc_list("[f(x=1) g(y=2)]"), parse_error);
    CHECK_THROWS_AS(parse_fc_list("[f(x=1, x=2)]"), parse_error);  // duplicate arg
    try {
        parse_fc_list("[f(x=1]");
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.position != std::string::npos);
        CHECK(std::string(e.what()).find("position") != std::string::npos);
    }
}

TEST_CASE("bare call lists are accepted by the lenient entry point") {
    fc_list fcs = parse_call_list("get_distance(from_loc=\"a\", to_loc=\"b\"), convert_unit(in_value=3, out_unit=\"km\")");
    REQUIRE(fcs.size() == 2);
    CHECK(fcs.calls[1].name == "convert_unit");
    // and the strict form still parses through the same entry
    CHECK(parse_call_list("[f(x=1)]").size() == 1);
}

namespace {

fc_value random_value(rng64& rng, int depth) {
    switch (rng.bounded(depth > 0 ? 6 : 5)) {
        case 0: return fc_value::null();
        case 1: return fc_value::of(rng.bounded(2) == 0);
        case 2: return fc_value::of(static_cast<int64_t>(rng.bounded(2000)) - 1000);
        case 3: {
            double d = (static_cast<double>(rng.bounded(1000000)) - 500000.0) / 128.0;
            return fc_value::of(d);
        }
        case 4: {
            std::string s;
            size_t len = rng.bounded(12);
            const std::string alphabet = "ab c\"\\\n\tzøé9-_.";
            for (size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.bounded(alphabet.size())]);
            return fc_value::of(std::move(s));
        }
        default: {
            std::vector<fc_value> items;
            size_t len = rng.bounded(4);
            for (size_t i = 0; i < len; ++i) items.push_back(random_value(rng, depth - 1));
            return fc_value::of(std::move(items));
        }
    }
}

fc_list random_fc_list(rng64& rng) {
    fc_list fcs;
    size_t n = rng.bounded(4);
    for (size_t c = 0; c < n; ++c) {
        function_call fc;
        fc.name = "fn_" + std::to_string(rng.bounded(50));
        size_t args = rng.bounded(4);
        for (size_t a = 0; a < args; ++a) {
            fc.args.emplace_back("p" + std::to_string(a), random_value(rng, 2));
        }
        fcs.calls.push_back(std::move(fc));
    }
    return fcs;
}

}  // namespace

TEST_CASE("1000 randomized lists round-trip exactly") {
    rng64 rng(20240814);
    for (int i = 0; i < 1000; ++i) {
        fc_list fcs = random_fc_list(rng);
        std::string text = serialize_fc_list(fcs);
        fc_list back = parse_fc_list(text);
        REQUIRE(back == fcs);
        // canonical text is a fixed point
        CHECK(serialize_fc_list(back) == text);
    }
}

TEST_CASE("validate_args reports each defect class") {
    const function_signature& sig = testing::toy_pool().at("get_distance");

    function_call ok;
    ok.name = "get_distance";
    ok.args.emplace_back("from_loc", fc_value::of(std::string("a")));
    ok.args.emplace_back("to_loc", fc_value::of(std::string("b")));
    CHECK(validate_args(ok, sig).ok());

    function_call missing = ok;
    missing.args.pop_back();
    validation_report r1 = validate_args(missing, sig);
    REQUIRE(r1.missing_required.size() == 1);
    CHECK(r1.missing_required[0] == "to_loc");
    CHECK(!r1.ok());

    function_call unknown = ok;
    unknown.args.emplace_back("speed", fc_value::of(int64_t{3}));
    validation_report r2 = validate_args(unknown, sig);
    REQUIRE(r2.unknown.size() == 1);
    CHECK(r2.unknown[0] == "speed");

    function_call renamed = ok;
    renamed.name = "get_route";
    CHECK_THROWS_AS(validate_args(renamed, sig), validation_error);
}

TEST_CASE("validate_args checks declared types") {
    const function_signature& sig = testing::toy_pool().at("get_forecast");
    function_call fc;
    fc.name = "get_forecast";
    fc.args.emplace_back("location", fc_value::of(std::string("Oslo")));
    fc.args.emplace_back("days", fc_value::of(std::string("three")));
    validation_report r = validate_args(fc, sig);
    REQUIRE(r.mismatched.size() == 1);
    CHECK(r.mismatched[0].find("days") == 0);

    fc.args[1].second = fc_value::of(int64_t{3});
    CHECK(validate_args(fc, sig).ok());
    // integral real is accepted for integer params
    fc.args[1].second = fc_value::of(3.0);
    CHECK(validate_args(fc, sig).ok());
    fc.args[1].second = fc_value::of(3.5);
    CHECK(!validate_args(fc, sig).ok());
}

TEST_CASE("validated calls satisfy the supplied-set property") {
    // ok => required ⊆ supplied ⊆ required ∪ optional
    const function_signature& sig = testing::toy_pool().at("get_route");
    function_call fc;
    fc.name = "get_route";
    fc.args.emplace_back("from_loc", fc_value::of(std::string("a")));
    fc.args.emplace_back("to_loc", fc_value::of(std::string("b")));
    fc.args.emplace_back("mode", fc_value::of(std::string("car")));
    REQUIRE(validate_args(fc, sig).ok());
    for (const auto& req : sig.parameters.required) CHECK(fc.find_arg(req) != nullptr);
    for (const auto& [name, _] : fc.args) {
        bool known = sig.parameters.properties.count(name) > 0;
        CHECK(known);
    }
}
