#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psc/rtl_ast.hpp"
#include "psc/vcd.hpp"

namespace psc {

/// Drives a top-level input port to a value at an integer time step.
struct Stimulus {
	uint64_t time = 0;
	std::string signal;
	uint64_t value = 0;
};

/// Forces any signal (hierarchical path relative to the top instance, e.g.
/// "u0.r" or "r") to a value at a time step, bypassing its normal driver for
/// that step. Intended for registers; wires are re-driven on the next settle.
struct Deposit {
	uint64_t time = 0;
	std::string path;
	uint64_t value = 0;
};

/// Event-driven evaluation over the parsed subset: continuous assigns and
/// combinational always blocks settle to a fixpoint at every step;
/// posedge-clocked blocks fire when their clock rises, with nonblocking
/// assignments applied simultaneously. All state starts at zero (the
/// four-state x is normalized away) except registers with declaration
/// initializers. Steps run at integer times 0..cycles-1; every signal is
/// recorded at time 0 and on change afterwards, under hierarchical names
/// rooted at the top module name.
TraceSet simulate_fixture(const DesignAst &ast, const std::vector<Stimulus> &stimulus, uint64_t cycles);

/// Same, with forced values. Used by equivalence checking to enumerate
/// register states exhaustively.
TraceSet simulate_fixture(const DesignAst &ast, const std::vector<Stimulus> &stimulus, uint64_t cycles,
			  const std::vector<Deposit> &deposits);

/// Convenience: stimulus toggling `signal` 0,1,0,1,… one change per step,
/// giving a rising edge at every odd time.
std::vector<Stimulus> clock_stimulus(const std::string &signal, uint64_t cycles);

} // namespace psc
