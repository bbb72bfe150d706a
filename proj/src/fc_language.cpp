#include "fctraj/fc_language.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>

#include "fctraj/function_pool.hpp"

namespace fctraj {

bool fc_value::operator==(const fc_value& o) const {
    if (k != o.k) return false;
    switch (k) {
        case kind::null_marker: return true;
        case kind::boolean: return b == o.b;
        case kind::integer: return i == o.i;
        case kind::real: return d == o.d;
        case kind::string: return s == o.s;
        case kind::list: return items == o.items;
    }
    return false;
}

const fc_value* function_call::find_arg(std::string_view param) const {
    for (const auto& [name, value] : args) {
        if (name == param) return &value;
    }
    return nullptr;
}

namespace {

class fc_parser {
public:
    explicit fc_parser(std::string_view text) : text_(text) {}

    fc_list parse_bracket_list() {
        skip_ws();
        expect('[');
        fc_list out;
        skip_ws();
        if (peek() == ']') {
            ++pos_;
        } else {
            out.calls.push_back(parse_call());
            skip_ws();
            while (peek() == ',') {
                ++pos_;
                out.calls.push_back(parse_call());
                skip_ws();
            }
            expect(']');
        }
        skip_ws();
        if (pos_ != text_.size()) fail("trailing characters after list");
        return out;
    }

    fc_list parse_bare_list() {
        fc_list out;
        out.calls.push_back(parse_call());
        skip_ws();
        while (peek() == ',') {
            ++pos_;
            out.calls.push_back(parse_call());
            skip_ws();
        }
        if (pos_ != text_.size()) fail("trailing characters after call list");
        return out;
    }

private:
    function_call parse_call() {
        function_call fc;
        fc.name = parse_identifier("function name");
        skip_ws();
        expect('(');
        skip_ws();
        if (peek() != ')') {
            parse_arg(fc);
            skip_ws();
            while (peek() == ',') {
                ++pos_;
                parse_arg(fc);
                skip_ws();
            }
        }
        expect(')');
        return fc;
    }

    void parse_arg(function_call& fc) {
        skip_ws();
        std::string name = parse_identifier("parameter name");
        for (const auto& [existing, _] : fc.args) {
            if (existing == name) fail("duplicate argument '" + name + "'");
        }
        skip_ws();
        expect('=');
        fc.args.emplace_back(std::move(name), parse_value());
    }

    fc_value parse_value() {
        skip_ws();
        char c = peek();
        if (c == '"') return fc_value::of(parse_string());
        if (c == '[') return parse_value_list();
        if (c == '-' || c == '+' || (c >= '0' && c <= '9')) {
            if (auto num = try_parse_number()) return *num;
        }
        if (match_keyword("true")) return fc_value::of(true);
        if (match_keyword("false")) return fc_value::of(false);
        if (match_keyword("null")) return fc_value::null();
        return fc_value::of(parse_bareword());
    }

    fc_value parse_value_list() {
        expect('[');
        std::vector<fc_value> items;
        skip_ws();
        if (peek() != ']') {
            items.push_back(parse_value());
            skip_ws();
            while (peek() == ',') {
                ++pos_;
                items.push_back(parse_value());
                skip_ws();
            }
        }
        expect(']');
        return fc_value::of(std::move(items));
    }

    std::string parse_string() {
        expect('"');
        std::string out;
        for (;;) {
            if (pos_ >= text_.size()) fail("unterminated string");
            char c = text_[pos_++];
            if (c == '"') break;
            if (c == '\\') {
                if (pos_ >= text_.size()) fail("unterminated escape");
                char e = text_[pos_++];
                switch (e) {
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case '/': out.push_back('/'); break;
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    default: fail(std::string("bad string escape '\\") + e + "'");
                }
            } else {
                out.push_back(c);
            }
        }
        return out;
    }

    std::optional<fc_value> try_parse_number() {
        size_t start = pos_;
        size_t p = pos_;
        if (p < text_.size() && (text_[p] == '-' || text_[p] == '+')) ++p;
        size_t digits_begin = p;
        while (p < text_.size() && isdigit(static_cast<unsigned char>(text_[p]))) ++p;
        if (p == digits_begin) return std::nullopt;
        bool is_real = false;
        if (p < text_.size() && text_[p] == '.') {
            is_real = true;
            ++p;
            while (p < text_.size() && isdigit(static_cast<unsigned char>(text_[p]))) ++p;
        }
        if (p < text_.size() && (text_[p] == 'e' || text_[p] == 'E')) {
            size_t e = p + 1;
            if (e < text_.size() && (text_[e] == '-' || text_[e] == '+')) ++e;
            if (e < text_.size() && isdigit(static_cast<unsigned char>(text_[e]))) {
                is_real = true;
                p = e;
                while (p < text_.size() && isdigit(static_cast<unsigned char>(text_[p]))) ++p;
            }
        }
        // A number must end at a token boundary, else it is a bareword
        // like "2nd_street".
        if (p < text_.size()) {
            char next = text_[p];
            if (next != ',' && next != ')' && next != ']' && !isspace(static_cast<unsigned char>(next))) {
                return std::nullopt;
            }
        }
        std::string_view token = text_.substr(start, p - start);
        if (!is_real) {
            int64_t v = 0;
            const char* first = token.data() + (token.front() == '+' ? 1 : 0);
            auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
            if (ec == std::errc() && ptr == token.data() + token.size()) {
                pos_ = p;
                return fc_value::of(v);
            }
            // Out of int64 range: fall through to real.
        }
        double v = 0.0;
        size_t token_start = token.front() == '+' ? 1 : 0;
        auto [ptr, ec] = std::from_chars(token.data() + token_start, token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
        pos_ = p;
        return fc_value::of(v);
    }

    bool match_keyword(std::string_view kw) {
        if (text_.substr(pos_, kw.size()) != kw) return false;
        size_t after = pos_ + kw.size();
        if (after < text_.size()) {
            char c = text_[after];
            if (c != ',' && c != ')' && c != ']' && !isspace(static_cast<unsigned char>(c))) {
                return false;
            }
        }
        pos_ = after;
        return true;
    }

    std::string parse_bareword() {
        size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == ',' || c == ')' || c == ']' || c == '(' || c == '[' || c == '=' || c == '"') break;
            ++pos_;
        }
        if (pos_ == start) fail("expected a value");
        std::string_view raw = text_.substr(start, pos_ - start);
        size_t b = raw.find_first_not_of(" \t\r\n");
        size_t e = raw.find_last_not_of(" \t\r\n");
        if (b == std::string_view::npos) fail("expected a value");
        return std::string(raw.substr(b, e - b + 1));
    }

    std::string parse_identifier(const char* what) {
        skip_ws();
        size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-') {
                ++pos_;
            } else {
                break;
            }
        }
        if (pos_ == start) fail(std::string("expected ") + what);
        return std::string(text_.substr(start, pos_ - start));
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void expect(char c) {
        if (pos_ >= text_.size() || text_[pos_] != c) {
            fail(std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    void skip_ws() {
        while (pos_ < text_.size() && isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw parse_error(msg + " at position " + std::to_string(pos_), pos_);
    }

    std::string_view text_;
    size_t pos_ = 0;
};

void append_escaped(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
}

void append_value(std::string& out, const fc_value& v) {
    switch (v.k) {
        case fc_value::kind::null_marker:
            out += "null";
            break;
        case fc_value::kind::boolean:
            out += v.b ? "true" : "false";
            break;
        case fc_value::kind::integer:
            out += std::to_string(v.i);
            break;
        case fc_value::kind::real: {
            char buf[32];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v.d);
            std::string rep(buf, ptr);
            // Keep reals distinguishable from integers on re-parse.
            if (rep.find('.') == std::string::npos && rep.find('e') == std::string::npos &&
                rep.find("inf") == std::string::npos && rep.find("nan") == std::string::npos) {
                rep += ".0";
            }
            out += rep;
            break;
        }
        case fc_value::kind::string:
            append_escaped(out, v.s);
            break;
        case fc_value::kind::list: {
            out.push_back('[');
            for (size_t i = 0; i < v.items.size(); ++i) {
                if (i) out += ", ";
                append_value(out, v.items[i]);
            }
            out.push_back(']');
            break;
        }
    }
}

bool value_matches_type(const fc_value& v, const std::string& type) {
    using kind = fc_value::kind;
    if (v.k == kind::null_marker) return true;  // null is an explicit "no value"
    if (type == "string") return v.k == kind::string;
    if (type == "number") return v.k == kind::integer || v.k == kind::real;
    if (type == "integer") {
        if (v.k == kind::integer) return true;
        return v.k == kind::real && std::trunc(v.d) == v.d;
    }
    if (type == "boolean") return v.k == kind::boolean;
    if (type == "array") return v.k == kind::list;
    if (type == "object") return true;  // not expressible in the grammar; unchecked
    return true;  // unknown declared type: do not flag
}

const char* kind_name(fc_value::kind k) {
    switch (k) {
        case fc_value::kind::null_marker: return "null";
        case fc_value::kind::boolean: return "boolean";
        case fc_value::kind::integer: return "integer";
        case fc_value::kind::real: return "number";
        case fc_value::kind::string: return "string";
        case fc_value::kind::list: return "array";
    }
    return "?";
}

}  // namespace

fc_list parse_fc_list(std::string_view text) {
    return fc_parser(text).parse_bracket_list();
}

fc_list parse_call_list(std::string_view text) {
    size_t b = text.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) throw parse_error("empty call list", 0);
    if (text[b] == '[') return parse_fc_list(text);
    return fc_parser(text).parse_bare_list();
}

std::string serialize_call(const function_call& fc) {
    std::string out = fc.name;
    out.push_back('(');
    for (size_t i = 0; i < fc.args.size(); ++i) {
        if (i) out += ", ";
        out += fc.args[i].first;
        out.push_back('=');
        append_value(out, fc.args[i].second);
    }
    out.push_back(')');
    return out;
}

std::string serialize_calls(const fc_list& fcs) {
    std::string out;
    for (size_t i = 0; i < fcs.calls.size(); ++i) {
        if (i) out += ", ";
        out += serialize_call(fcs.calls[i]);
    }
    return out;
}

std::string serialize_fc_list(const fc_list& fcs) {
    return "[" + serialize_calls(fcs) + "]";
}

std::string serialize_value(const fc_value& v) {
    std::string out;
    append_value(out, v);
    return out;
}

std::string validation_report::describe() const {
    std::ostringstream os;
    if (ok()) {
        os << "ok";
        return os.str();
    }
    auto join = [&](const char* label, const std::vector<std::string>& xs) {
        if (xs.empty()) return;
        os << label << ": ";
        for (size_t i = 0; i < xs.size(); ++i) os << (i ? ", " : "") << xs[i];
        os << "; ";
    };
    join("missing required", missing_required);
    join("unknown", unknown);
    join("type mismatch", mismatched);
    return os.str();
}

validation_report validate_args(const function_call& fc, const function_signature& sig) {
    if (fc.name != sig.api_name) {
        throw validation_error("validate_args: call '" + fc.name + "' does not match signature '" +
                               sig.api_name + "'");
    }
    validation_report report;
    for (const auto& name : sig.parameters.required) {
        if (!fc.find_arg(name)) report.missing_required.push_back(name);
    }
    for (const auto& [name, value] : fc.args) {
        auto it = sig.parameters.properties.find(name);
        if (it == sig.parameters.properties.end()) {
            report.unknown.push_back(name);
            continue;
        }
        if (!value_matches_type(value, it->second.type)) {
            report.mismatched.push_back(name + ": expected " + it->second.type + ", got " +
                                        kind_name(value.k));
        }
    }
    return report;
}

}  // namespace fctraj
