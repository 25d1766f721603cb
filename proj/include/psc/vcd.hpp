#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psc/bitvec.hpp"
#include "psc/cdfg.hpp"

namespace psc {

/// Time-ordered value history of one signal. states[i] was entered at
/// times[i]; consecutive states differ (a dump records changes only), except
/// that the initial snapshot may repeat.
struct SignalTrace {
	std::string signal; // qualified "scope.name"
	int width = 1;
	std::vector<BitVec> states;
	std::vector<uint64_t> times;
	bool xz_normalized = false; // saw x/z bits (mapped to 0)

	bool operator==(const SignalTrace &) const = default;
};

struct TraceSet {
	std::map<std::string, SignalTrace> traces;
	std::string timescale = "1ns";

	bool operator==(const TraceSet &) const = default;
};

/// Parses the textual value-change-dump subset: $timescale/$scope/$var
/// declarations, $enddefinitions, #time markers, scalar (0/1/x/z)id and
/// vector b<bits> id changes. Repeated changes at one timestamp keep the
/// last value.
TraceSet parse_vcd(const std::string &text);

/// Serializes a TraceSet back to dump text; parse_vcd(emit_vcd(t)) == t for
/// traces produced by the simulator.
std::string emit_vcd(const TraceSet &ts);

/// popcount(prev ^ next); the switching cost of one transition.
int step_hamming(const BitVec &prev, const BitVec &next);

/// Sum of step costs over the whole history; 0 for a single-state trace.
uint64_t total_hamming(const SignalTrace &trace);

/// Largest single step cost in the history; 0 for a single-state trace.
uint64_t max_step_hamming(const SignalTrace &trace);

/// How one signal's history folds into a single activity number: the sum of
/// all step costs, or only the largest step.
enum class HammingAggregation { Sum, MaxStep };

/// Switching activity of a graph node: the maximum per-signal activity over
/// the node's signals. A node signal matches a trace named exactly like it or
/// ending in ".signal" (any scope); among several matches the largest value
/// wins. Signals with no trace contribute 0 and are reported in *warnings.
uint64_t node_hamming(const CdfgNode &node, const TraceSet &traces, std::vector<std::string> *warnings = nullptr,
		      HammingAggregation agg = HammingAggregation::Sum);

} // namespace psc
