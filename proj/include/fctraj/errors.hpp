#pragma once

#include <stdexcept>
#include <string>

namespace fctraj {

// Invariant or schema violation in user-supplied data or config.
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed textual input (fc expressions, JSON, protocol lines).
struct parse_error : std::runtime_error {
    explicit parse_error(const std::string& msg, size_t position = std::string::npos)
        : std::runtime_error(msg), position(position) {}
    size_t position;
};

// Backend answered, but not in the agreed response protocol.
struct protocol_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Backend unreachable or retries exhausted.
struct transport_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A judge could not produce a usable judgement for one target.
struct judgment_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fctraj
