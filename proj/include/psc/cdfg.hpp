#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "psc/rtl_ast.hpp"

namespace psc {

/// Node flavor in the control-data flow graph. AS covers one maximal run of
/// branch-free assignments; CALL covers module instantiation and
/// function-call assigns.
enum class CdfgKind { AS, IF, CASE, ALWAYS, CALL, ENTRY, EXIT };

const char *to_string(CdfgKind kind);

struct CdfgNode {
	int id = 0;
	std::string label; // "Module.line:KIND", unique per design
	std::string module;
	int line = 0;
	CdfgKind kind = CdfgKind::AS;

	/// Signals of the owning module read or written inside this block.
	std::set<std::string> signals;

	/// Back references into the design (borrowed; the DesignAst must
	/// outlive the graph). Null where not applicable.
	const FunctionalStatement *fs = nullptr;
	std::vector<const Stmt *> stmts;
	const Instance *instance = nullptr;
};

struct CdfgEdge {
	int src = 0;
	int dst = 0;
	double weight = 1.0;
};

/// Control-data flow graph over basic blocks. Node ids are a dense 0-based
/// range assigned by DFS preorder from the top module's ENTRY node, so two
/// builds of the same design agree exactly.
struct Cdfg {
	std::vector<CdfgNode> nodes;
	std::vector<CdfgEdge> edges;

	const CdfgNode &node(int id) const { return nodes.at(size_t(id)); }
};

/// Builds the graph: one subgraph per module definition chained
/// ENTRY → statements → EXIT, an IF/CASE node per branch with arm blocks
/// rejoining at the successor, and instance CALL nodes detouring through the
/// child module (CALL → child ENTRY, child EXIT → the CALL's successor).
Cdfg build_cdfg(const DesignAst &ast);

/// Node id → (module, line) for every node; ENTRY/EXIT report the module
/// header line.
std::map<int, std::pair<std::string, int>> node_line_map(const Cdfg &g);

/// Plain-text export: one `id,label,module,line,kind` line per node followed
/// by one `src,dst` line per edge.
std::string export_cdfg(const Cdfg &g);

} // namespace psc
