#include "psc/vardep.hpp"

#include <algorithm>
#include <set>

#include "psc/errors.hpp"

namespace psc {

int VarDepGraph::vertex_or_throw(const std::string &name) const
{
	auto it = index.find(name);
	if (it == index.end()) {
		throw UnknownSignal(name);
	}
	return it->second;
}

int VarDepGraph::resolve(const std::string &name) const
{
	if (auto it = index.find(name); it != index.end()) {
		return it->second;
	}
	int found = -1;
	for (const auto &[vertex, id] : index) {
		if (vertex.size() > name.size() && vertex.compare(vertex.size() - name.size(), name.size(), name) == 0 &&
		    vertex[vertex.size() - name.size() - 1] == '.') {
			if (found >= 0) {
				throw UnknownSignal(name + " (ambiguous across modules)");
			}
			found = id;
		}
	}
	if (found < 0) {
		throw UnknownSignal(name);
	}
	return found;
}

namespace {

class Builder {
      public:
	explicit Builder(const DesignAst &ast) : ast_(ast) {}

	VarDepGraph run()
	{
		for (const auto &mod : ast_.modules) {
			for (const auto &p : mod.ports) {
				add_vertex(mod.name + "." + p.name);
			}
			for (const auto &s : mod.signals) {
				add_vertex(mod.name + "." + s.name);
			}
		}
		for (const auto &mod : ast_.modules) {
			module_ = &mod;
			for (const auto &fs : mod.statements) {
				collect_functional(fs);
			}
			for (const auto &inst : mod.instances) {
				collect_instance(inst);
			}
		}
		g_.out.assign(g_.vertices.size(), {});
		for (const auto &e : g_.edges) {
			g_.out[size_t(e.src)].push_back(e.dst);
		}
		check_combinational_loops();
		return std::move(g_);
	}

      private:
	void add_vertex(const std::string &name)
	{
		if (g_.index.emplace(name, int(g_.vertices.size())).second) {
			g_.vertices.push_back(name);
		}
	}

	void add_edge(const std::string &src, const std::string &dst, bool comb)
	{
		int s = g_.index.at(src);
		int d = g_.index.at(dst);
		auto [it, inserted] = edge_set_.emplace(std::make_pair(s, d), g_.edges.size());
		if (inserted) {
			g_.edges.push_back({s, d, comb});
		} else if (comb) {
			// any combinational driver makes the pair loop-relevant
			g_.edges[it->second].combinational = true;
		}
	}

	std::string qualify(const std::string &signal) const { return module_->name + "." + signal; }

	/// Signals read by an expression, with function calls expanded to the
	/// module-level signals the callee body reads.
	std::set<std::string> reads_of(const Expr &e) const
	{
		std::set<std::string> reads = expr_signals(e);
		for_each_expr(e, [&](const Expr &n) {
			if (n.kind == ExprKind::FunctionCall) {
				auto globals = function_global_reads(n.name, {});
				reads.insert(globals.begin(), globals.end());
			}
		});
		// expr_signals has no module scoping; drop anything undeclared
		// (function locals never appear here because call args were
		// already expressions of the caller).
		std::set<std::string> out;
		for (const auto &r : reads) {
			if (module_->is_declared(r)) {
				out.insert(r);
			}
		}
		return out;
	}

	std::set<std::string> function_global_reads(const std::string &fname, std::set<std::string> visiting) const
	{
		const RtlFunction *fn = module_->find_function(fname);
		if (!fn || visiting.count(fname)) {
			return {};
		}
		visiting.insert(fname);
		std::set<std::string> locals = {fn->name};
		for (const auto &p : fn->inputs) {
			locals.insert(p.name);
		}
		std::set<std::string> reads;
		collect_stmt_reads(*fn->body, reads, visiting);
		std::set<std::string> out;
		for (const auto &r : reads) {
			if (!locals.count(r) && module_->is_declared(r)) {
				out.insert(r);
			}
		}
		return out;
	}

	void collect_stmt_reads(const Stmt &st, std::set<std::string> &reads, const std::set<std::string> &visiting) const
	{
		auto take = [&](const Expr &e) {
			auto sub = expr_signals(e);
			reads.insert(sub.begin(), sub.end());
			for_each_expr(e, [&](const Expr &n) {
				if (n.kind == ExprKind::FunctionCall) {
					auto g = function_global_reads(n.name, visiting);
					reads.insert(g.begin(), g.end());
				}
			});
		};
		switch (st.kind) {
		case StmtKind::Assign:
			take(*st.rhs);
			for (const auto &s : lvalue_index_signals(*st.lhs)) {
				reads.insert(s);
			}
			break;
		case StmtKind::If:
			take(*st.cond);
			collect_stmt_reads(*st.then_branch, reads, visiting);
			if (st.else_branch) {
				collect_stmt_reads(*st.else_branch, reads, visiting);
			}
			break;
		case StmtKind::Case:
			take(*st.selector);
			for (const auto &arm : st.arms) {
				collect_stmt_reads(*arm.body, reads, visiting);
			}
			break;
		case StmtKind::Block:
			for (const auto &s : st.stmts) {
				collect_stmt_reads(*s, reads, visiting);
			}
			break;
		}
	}

	void collect_functional(const FunctionalStatement &fs)
	{
		switch (fs.kind) {
		case FsKind::ContinuousAssign:
		case FsKind::FunctionCallAssign:
			collect_assign(*fs.body, true);
			break;
		case FsKind::AlwaysBlock:
			collect_stmt(*fs.body, !fs.clocked);
			break;
		case FsKind::IfElse:
		case FsKind::CaseStatement:
			collect_stmt(*fs.body, true);
			break;
		case FsKind::FunctionDecl:
			break; // expanded at call sites
		}
	}

	void collect_stmt(const Stmt &st, bool comb)
	{
		switch (st.kind) {
		case StmtKind::Assign:
			collect_assign(st, comb);
			break;
		case StmtKind::If:
			collect_stmt(*st.then_branch, comb);
			if (st.else_branch) {
				collect_stmt(*st.else_branch, comb);
			}
			break;
		case StmtKind::Case:
			for (const auto &arm : st.arms) {
				collect_stmt(*arm.body, comb);
			}
			break;
		case StmtKind::Block:
			for (const auto &s : st.stmts) {
				collect_stmt(*s, comb);
			}
			break;
		}
	}

	void collect_assign(const Stmt &st, bool comb)
	{
		const std::string &target = lvalue_target(*st.lhs);
		if (!module_->is_declared(target)) {
			return; // function-local writes handled at call sites
		}
		std::set<std::string> reads = reads_of(*st.rhs);
		for (const auto &s : lvalue_index_signals(*st.lhs)) {
			if (module_->is_declared(s)) {
				reads.insert(s);
			}
		}
		for (const auto &r : reads) {
			add_edge(qualify(r), qualify(target), comb);
		}
	}

	void collect_instance(const Instance &inst)
	{
		const RtlModule *child = ast_.find_module(inst.module_name);
		for (const auto &b : inst.bindings) {
			if (!b.expr) {
				continue;
			}
			const Port *port = child->find_port(b.port);
			std::string child_vertex = child->name + "." + port->name;
			if (port->dir == PortDir::Input || port->dir == PortDir::Inout) {
				for (const auto &s : reads_of(*b.expr)) {
					add_edge(qualify(s), child_vertex, true);
				}
			}
			if (port->dir == PortDir::Output || port->dir == PortDir::Inout) {
				if (b.expr->kind == ExprKind::SignalRef || b.expr->kind == ExprKind::BitSelect ||
				    b.expr->kind == ExprKind::PartSelect) {
					const std::string &target = lvalue_target(*b.expr);
					if (module_->is_declared(target)) {
						add_edge(child_vertex, qualify(target), true);
					}
					for (const auto &s : lvalue_index_signals(*b.expr)) {
						if (module_->is_declared(s)) {
							add_edge(qualify(s), qualify(target), true);
						}
					}
				} else {
					// not a writable net; fall back to feeding
					// every signal mentioned
					for (const auto &s : reads_of(*b.expr)) {
						add_edge(child_vertex, qualify(s), true);
					}
				}
			}
		}
	}

	void check_combinational_loops() const
	{
		// DFS three-color cycle detection restricted to combinational
		// edges.
		std::vector<std::vector<int>> comb(g_.vertices.size());
		for (const auto &e : g_.edges) {
			if (e.combinational) {
				comb[size_t(e.src)].push_back(e.dst);
			}
		}
		std::vector<int> color(g_.vertices.size(), 0);
		std::vector<int> trail;

		std::function<void(int)> visit = [&](int v) {
			color[size_t(v)] = 1;
			trail.push_back(v);
			for (int w : comb[size_t(v)]) {
				if (color[size_t(w)] == 1) {
					std::string cycle;
					auto start = std::find(trail.begin(), trail.end(), w);
					for (auto it = start; it != trail.end(); ++it) {
						cycle += g_.vertices[size_t(*it)] + " -> ";
					}
					cycle += g_.vertices[size_t(w)];
					throw CombinationalLoop(cycle);
				}
				if (color[size_t(w)] == 0) {
					visit(w);
				}
			}
			trail.pop_back();
			color[size_t(v)] = 2;
		};
		for (size_t v = 0; v < g_.vertices.size(); ++v) {
			if (color[v] == 0) {
				visit(int(v));
			}
		}
	}

	const DesignAst &ast_;
	const RtlModule *module_ = nullptr;
	VarDepGraph g_;
	std::map<std::pair<int, int>, size_t> edge_set_;
};

struct PathSearch {
	const VarDepGraph &g;
	int target;
	uint64_t max_paths;
	int max_depth;
	PathCount result;
	std::vector<char> on_path;

	void dfs(int v, int depth)
	{
		if (result.saturated) {
			return;
		}
		if (v == target) {
			if (++result.count >= max_paths) {
				result.count = max_paths;
				result.saturated = true;
			}
			return;
		}
		if (depth == max_depth) {
			result.depth_clipped = true;
			return;
		}
		on_path[size_t(v)] = 1;
		for (int w : g.out[size_t(v)]) {
			if (!on_path[size_t(w)]) {
				dfs(w, depth + 1);
			}
		}
		on_path[size_t(v)] = 0;
	}
};

} // namespace

VarDepGraph build_vardep(const DesignAst &ast)
{
	return Builder(ast).run();
}

PathCount count_vulnerable_paths(const VarDepGraph &g, const std::string &key, const std::string &target,
				 uint64_t max_paths, int max_depth)
{
	int k = g.vertex_or_throw(key);
	int t = g.vertex_or_throw(target);
	if (k == t) {
		return {1, false, false}; // the empty path
	}
	PathSearch search{g, t, max_paths, max_depth, {}, std::vector<char>(g.vertices.size(), 0)};
	search.dfs(k, 0);
	return search.result;
}

} // namespace psc
