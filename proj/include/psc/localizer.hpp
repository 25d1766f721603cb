#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "psc/cdfg.hpp"
#include "psc/gnn.hpp"
#include "psc/vardep.hpp"

namespace psc {

/// Four additive source-code leakiness metrics for one functional statement.
struct LeakageScore {
	int conditional_dependency = 0; // if/case/ternary conditions
	int bit_manipulation = 0;	// bitwise and/or/xor/not and shifts
	int function_calls = 0;		// call sites
	int dependency_depth = 0;	// longest prior-writer chain feeding the reads
	int total = 0;			// always the equal-weight sum of the four

	bool operator==(const LeakageScore &) const = default;
};

struct LocalizeConfig {
	/// When set, a condition only scores if its signals are data-dependent
	/// on a sensitive signal; by default every condition counts.
	bool conditional_requires_taint = false;

	/// Corroboration rule: frequency rank within the top fraction of the
	/// ranking and leakage total at or above this quantile of all scored
	/// statements.
	double rank_fraction = 0.25;
	double score_quantile = 0.5;
};

/// (module, line) key for leaky-node frequency counting.
struct LineKey {
	std::string module;
	int line = 0;

	auto operator<=>(const LineKey &) const = default;
};

struct LineFrequency {
	std::map<LineKey, int> counts; // every stored count ≥ 1
	std::vector<std::string> warnings;
};

/// Counts, per (module, line), how many nodes the prediction labels leaky.
/// ENTRY/EXIT nodes never contribute; zero leaky nodes yields an empty table
/// plus a warning.
LineFrequency collect_leaky_lines(const Prediction &pred, const Cdfg &g);

/// Keys ordered by count descending, ties by leakage total descending, final
/// ties by (module, line) ascending. Lines absent from `scores` total zero.
std::vector<LineKey> rank_lines(const LineFrequency &freq, const std::map<LineKey, LeakageScore> &scores);

/// Scores one functional statement. The dependency graph feeds the taint
/// check; depth itself walks the module's own assignments.
LeakageScore leakage_score(const RtlModule &mod, const FunctionalStatement &fs, const VarDepGraph &dep,
			   const std::set<std::string> &sensitive = {}, const LocalizeConfig &cfg = {});

struct StatementScore {
	std::string module;
	int fs_index = 0;
	SourceSpan span;
	LeakageScore score;
};

/// Scores every functional statement of every module.
std::vector<StatementScore> score_design(const DesignAst &ast, const VarDepGraph &dep,
					 const std::set<std::string> &sensitive = {},
					 const LocalizeConfig &cfg = {});

struct ReportEntry {
	std::string module;
	int fs_index = 0; // enclosing functional statement; 0 when unresolved
	int line = 0;
	SourceSpan span; // of the enclosing functional statement
	int frequency = 0;
	int rank = 0; // 1-based position in the frequency ranking
	LeakageScore score;
	bool corroborated = false;
	std::string masked_text; // filled in once the fortifier rewrites the line
};

struct VulnerabilityReport {
	std::vector<ReportEntry> entries;    // predicted-leaky lines, ranked
	std::vector<ReportEntry> score_only; // high-scoring lines never predicted leaky
	std::vector<std::string> warnings;
	LocalizeConfig config;
};

/// Correlates the frequency ranking with the per-statement scores.
/// corroborated = rank within the top `rank_fraction` of the ranking AND
/// leakage total ≥ the `score_quantile` quantile of all scored statements.
VulnerabilityReport build_report(const LineFrequency &freq, const std::vector<StatementScore> &scores,
				 const LocalizeConfig &cfg = {});

std::string report_to_json(const VulnerabilityReport &r);

/// Human-readable table: Benchmark | Vulnerable Module | Functional
/// Statement No. | Vulnerable Line | Masked Implementation. The source map
/// supplies the quoted line text.
std::string report_to_markdown(const VulnerabilityReport &r, const std::string &benchmark,
			       const SourceMap *source = nullptr);

} // namespace psc
