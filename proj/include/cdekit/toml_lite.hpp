#pragma once

#include <string>

#include "cdekit/serialize.hpp"

namespace cdekit {

// Reads the TOML subset used by experiment configs into a JSON object:
// tables, dotted keys, arrays of tables, basic and literal strings, integers,
// floats (incl. inf and nan), booleans, arrays and inline tables. Multi-line
// strings and dates are rejected. Errors name the source and line.
Json parse_toml(const std::string& text, const std::string& source = "<toml>");

}  // namespace cdekit
