#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psc/rtl_ast.hpp"

namespace psc {

/// Directed signal dependency graph. Vertices are "module.signal" names;
/// an edge u→v means v is assigned from an expression reading u, or a port
/// binding carries u into v across an instance boundary.
struct VarDepGraph {
	std::vector<std::string> vertices;
	std::map<std::string, int> index;

	struct Edge {
		int src = 0;
		int dst = 0;
		bool combinational = true;
	};
	std::vector<Edge> edges;
	std::vector<std::vector<int>> out; // adjacency: vertex → successor vertices

	bool has_vertex(const std::string &name) const { return index.count(name) != 0; }
	int vertex_or_throw(const std::string &name) const;

	/// Accepts either a full "module.signal" vertex name or a bare signal
	/// name that is unambiguous across modules.
	int resolve(const std::string &name) const;
};

/// Builds the graph for a design. Cycles that pass only through
/// combinational assignments are reported as CombinationalLoop; register
/// feedback (clocked assignments) is fine.
VarDepGraph build_vardep(const DesignAst &ast);

struct PathCount {
	uint64_t count = 0;
	bool saturated = false;     // hit max_paths
	bool depth_clipped = false; // pruned at max_depth; deeper paths uncounted
};

inline constexpr uint64_t kDefaultMaxPaths = 10000;
inline constexpr int kDefaultMaxDepth = 64;

/// Number of distinct simple (vertex-non-repeating) directed paths from key
/// to target, found by DFS, saturating at max_paths. count(key, key) is 1 by
/// convention: the empty path.
PathCount count_vulnerable_paths(const VarDepGraph &g, const std::string &key, const std::string &target,
				 uint64_t max_paths = kDefaultMaxPaths, int max_depth = kDefaultMaxDepth);

} // namespace psc
