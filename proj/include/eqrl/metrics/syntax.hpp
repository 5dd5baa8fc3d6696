#pragma once

#include <string_view>

#include "eqrl/python/parser.hpp"

namespace eqrl::metrics {

using python::ParseResult;
using python::SyntaxFailure;

inline ParseResult parse_subject(std::string_view source) { return python::parse(source); }

// 1 iff the source parses (empty and whitespace-only sources parse).
inline int check_syntax(std::string_view source) { return python::parse(source).ok() ? 1 : 0; }

}  // namespace eqrl::metrics
