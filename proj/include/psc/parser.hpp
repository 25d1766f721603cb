#pragma once

#include <string>
#include <utility>
#include <vector>

#include "psc/rtl_ast.hpp"

namespace psc {

/// Parses a synthesizable Verilog subset:
///   - module declarations (ANSI or non-ANSI headers), input/output/inout,
///     wire/reg declarations with [msb:lsb] ranges and optional reg
///     initializers
///   - continuous assign, always @(*) / @(signal list) / @(posedge clk)
///   - begin/end, if/else, case/endcase, blocking and nonblocking
///     assignments (a leading `assign` inside procedural code is accepted
///     and treated as a blocking assignment)
///   - expressions: ternary, | ^ & == != < > <= >= << >> + - *, unary ~ -,
///     concatenation, replication, bit/part select, function calls,
///     decimal and based literals
///   - module instantiation (named or positional), Verilog-2001 function
///     declarations
/// Anything else raises UnsupportedConstruct.
DesignAst parse_design(const std::vector<std::pair<std::string, std::string>> &sources, const std::string &top);

/// Returns the module's top-level statements in source order. Indices are
/// consecutive from 1.
std::vector<const FunctionalStatement *> functional_statements(const DesignAst &ast, const std::string &module);

} // namespace psc
