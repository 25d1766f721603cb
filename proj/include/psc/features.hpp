#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "psc/cdfg.hpp"
#include "psc/vardep.hpp"
#include "psc/vcd.hpp"

namespace psc {

/// Column order of the per-node feature matrix. This is a frozen contract:
/// serialized models record it and refuse matrices that disagree.
inline constexpr std::array<const char *, 7> kFeatureColumns = {"paths", "degree", "hamming",
								"xor",	 "or",	   "and", "mux"};

/// kFeatureColumns joined with commas; the form stored in model files.
std::string feature_contract();

/// Knobs for feature extraction.
struct FeatureConfig {
	/// Signals treated as the secret (e.g. a key input). Either full
	/// "module.signal" vertex names or bare names that are unambiguous.
	std::vector<std::string> sensitive_signals;

	/// Whether a case statement sets the MUX bit (it synthesizes to one).
	bool mux_includes_case = true;

	HammingAggregation hamming_aggregation = HammingAggregation::Sum;

	uint64_t max_paths = kDefaultMaxPaths;
	int max_depth = kDefaultMaxDepth;
};

/// Per-column statistics captured at training time and replayed verbatim at
/// inference. Op-bit columns keep mean 0 / std 1 (pass-through), as do
/// zero-variance columns.
struct NormalizationRecord {
	bool applied = false;
	std::array<double, 7> mean{0, 0, 0, 0, 0, 0, 0};
	std::array<double, 7> stdev{1, 1, 1, 1, 1, 1, 1};

	bool operator==(const NormalizationRecord &) const = default;
};

/// N×7 per-node feature matrix; row order equals CDFG node-id order.
struct FeatureMatrix {
	std::vector<int> node_ids;
	std::vector<std::array<double, 7>> rows;
	NormalizationRecord norm;
};

/// Operator presence bits (XOR, OR, AND, MUX) over the expressions owned by
/// the node: assignment right-hand sides and index expressions for AS and
/// CALL nodes, the condition for IF, the selector (and arm labels) for CASE,
/// port-binding expressions for instance CALLs. Shifts and arithmetic do not
/// set any bit; a ternary sets MUX, and a CASE node sets MUX when
/// mux_includes_case is on.
std::array<int, 4> op_type_vector(const CdfgNode &node, bool mux_includes_case = true);

/// In-degree + out-degree of the node.
int node_degree(const Cdfg &g, int id);

/// Worst-case dependency exposure per node: the maximum over (sensitive
/// signal × node signal) of count_vulnerable_paths. Node signals missing
/// from the dependency graph contribute 0; sensitive names must resolve.
std::map<int, PathCount> node_path_counts(const Cdfg &g, const VarDepGraph &dep, const FeatureConfig &cfg);

/// Assembles the raw (un-normalized) matrix. ENTRY/EXIT rows are all-zero
/// except the degree column. Missing trace data leaves hamming at 0 with a
/// warning. Throws DimensionMismatch when `paths` covers a node set different
/// from the graph's.
FeatureMatrix assemble_features(const Cdfg &g, const std::map<int, PathCount> &paths, const TraceSet &traces,
				const FeatureConfig &cfg, std::vector<std::string> *warnings = nullptr);

/// Z-scores the paths/degree/hamming columns with population statistics
/// computed from the matrix itself, passes op bits through, and stores the
/// record for replay at inference. Zero-variance columns use std 1, mapping
/// to all-zero. Needs at least 2 rows. An already-normalized matrix is
/// returned unchanged.
FeatureMatrix normalize(const FeatureMatrix &m);

/// Applies a stored record (training-time statistics) to a raw matrix. A
/// matrix already normalized with the same record is returned unchanged.
FeatureMatrix normalize(const FeatureMatrix &m, const NormalizationRecord &record);

/// CSV export with the fixed header `node_id,paths,degree,hamming,xor,or,and,mux`.
std::string to_csv(const FeatureMatrix &m);

} // namespace psc
