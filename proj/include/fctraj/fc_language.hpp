#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fctraj/errors.hpp"

namespace fctraj {

struct function_signature;

// A literal argument value. The grammar is closed: string, number (integer
// or real), boolean, list, or the null marker. Nested call expressions are
// not values; nesting happens across turns through tool outputs.
struct fc_value {
    enum class kind : uint8_t { null_marker, boolean, integer, real, string, list };

    kind k = kind::null_marker;
    bool b = false;
    int64_t i = 0;
    double d = 0.0;
    std::string s;
    std::vector<fc_value> items;

    static fc_value null() { return {}; }
    static fc_value of(bool v) {
        fc_value x; x.k = kind::boolean; x.b = v; return x;
    }
    static fc_value of(int64_t v) {
        fc_value x; x.k = kind::integer; x.i = v; return x;
    }
    static fc_value of(double v) {
        fc_value x; x.k = kind::real; x.d = v; return x;
    }
    static fc_value of(std::string v) {
        fc_value x; x.k = kind::string; x.s = std::move(v); return x;
    }
    static fc_value of(std::vector<fc_value> v) {
        fc_value x; x.k = kind::list; x.items = std::move(v); return x;
    }

    bool operator==(const fc_value& o) const;
};

struct function_call {
    std::string name;
    std::vector<std::pair<std::string, fc_value>> args;  // ordered; names unique

    const fc_value* find_arg(std::string_view param) const;
    bool operator==(const function_call& o) const = default;
};

struct fc_list {
    std::vector<function_call> calls;

    bool empty() const { return calls.empty(); }
    size_t size() const { return calls.size(); }
    auto begin() const { return calls.begin(); }
    auto end() const { return calls.end(); }
    bool operator==(const fc_list& o) const = default;
};

// Parses the bracket-list wire format:
//   fc_list : '[' ']' | '[' call (',' call)* ']'
//   call    : name '(' (param '=' value (',' param '=' value)*)? ')'
//   value   : string | number | boolean | null | list | bareword
// Whitespace-insensitive between tokens. Strings are double-quoted with
// backslash escapes. Unquoted barewords are accepted on parse (model output
// is sloppy) and become strings; serialization always quotes.
// Throws parse_error with the offending position.
fc_list parse_fc_list(std::string_view text);

// Lenient entry point: accepts the bracket list or the bare comma-separated
// call form used by hints and forth-translation answers.
fc_list parse_call_list(std::string_view text);

// Canonical text: single space after commas, strings always quoted; reals
// always carry a '.' or exponent so integers and reals round-trip distinctly.
std::string serialize_fc_list(const fc_list& fcs);
// Same, without the outer brackets (the [Hint] form).
std::string serialize_calls(const fc_list& fcs);
std::string serialize_call(const function_call& fc);
std::string serialize_value(const fc_value& v);

struct validation_report {
    std::vector<std::string> missing_required;
    std::vector<std::string> unknown;
    std::vector<std::string> mismatched;  // "name: expected T, got K"

    bool ok() const {
        return missing_required.empty() && unknown.empty() && mismatched.empty();
    }
    std::string describe() const;
};

// Checks a call against its signature: required coverage, no hallucinated
// names, declared types. Throws validation_error on a name mismatch.
validation_report validate_args(const function_call& fc, const function_signature& sig);

}  // namespace fctraj
