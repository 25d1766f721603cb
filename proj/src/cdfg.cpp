#include "psc/cdfg.hpp"

#include <algorithm>

#include "psc/errors.hpp"

namespace psc {

const char *to_string(CdfgKind kind)
{
	switch (kind) {
	case CdfgKind::AS:
		return "AS";
	case CdfgKind::IF:
		return "IF";
	case CdfgKind::CASE:
		return "CASE";
	case CdfgKind::ALWAYS:
		return "ALWAYS";
	case CdfgKind::CALL:
		return "CALL";
	case CdfgKind::ENTRY:
		return "ENTRY";
	case CdfgKind::EXIT:
		return "EXIT";
	}
	return "?";
}

namespace {

class Builder {
      public:
	explicit Builder(const DesignAst &ast) : ast_(ast) {}

	Cdfg run()
	{
		// Entry/exit first so instance edges can point at modules that
		// appear later in the instantiation order.
		for (const auto &mod : ast_.modules) {
			entry_[mod.name] = add_node(CdfgKind::ENTRY, mod.name, mod.header_line);
			exit_[mod.name] = add_node(CdfgKind::EXIT, mod.name, mod.header_line);
		}
		for (const auto &mod : ast_.modules) {
			build_module(mod);
		}
		renumber();
		label();
		return std::move(g_);
	}

      private:
	int add_node(CdfgKind kind, const std::string &module, int line)
	{
		CdfgNode n;
		n.id = int(g_.nodes.size());
		n.kind = kind;
		n.module = module;
		n.line = line;
		g_.nodes.push_back(std::move(n));
		return int(g_.nodes.size()) - 1;
	}

	void add_edge(int src, int dst) { g_.edges.push_back({src, dst, 1.0}); }

	void connect(const std::vector<int> &from, int to)
	{
		for (int f : from) {
			add_edge(f, to);
		}
	}

	void build_module(const RtlModule &mod)
	{
		module_ = &mod;

		// Statements and instances interleave in source order.
		struct Item {
			int line;
			int order;
			const FunctionalStatement *fs;
			const Instance *inst;
		};
		std::vector<Item> items;
		int order = 0;
		for (const auto &fs : mod.statements) {
			items.push_back({fs.span.first_line, order++, &fs, nullptr});
		}
		for (const auto &inst : mod.instances) {
			items.push_back({inst.line, order++, nullptr, &inst});
		}
		std::stable_sort(items.begin(), items.end(), [](const Item &a, const Item &b) {
			return a.line != b.line ? a.line < b.line : a.order < b.order;
		});

		std::vector<int> dangling = {entry_.at(mod.name)};
		for (const auto &item : items) {
			dangling = item.fs ? build_functional(*item.fs, dangling) : build_instance(*item.inst, dangling);
		}
		connect(dangling, exit_.at(mod.name));
	}

	std::vector<int> build_functional(const FunctionalStatement &fs, std::vector<int> dangling)
	{
		switch (fs.kind) {
		case FsKind::ContinuousAssign: {
			int n = add_node(CdfgKind::AS, module_->name, fs.span.first_line);
			attach(n, fs, {fs.body.get()});
			note_assign_signals(n, *fs.body);
			connect(dangling, n);
			return {n};
		}
		case FsKind::FunctionCallAssign: {
			int n = add_node(CdfgKind::CALL, module_->name, fs.span.first_line);
			attach(n, fs, {fs.body.get()});
			note_assign_signals(n, *fs.body);
			connect(dangling, n);
			return {n};
		}
		case FsKind::AlwaysBlock: {
			int h = add_node(CdfgKind::ALWAYS, module_->name, fs.span.first_line);
			attach(h, fs, {});
			if (fs.clocked) {
				note_signal(h, fs.clock);
			}
			for (const auto &s : fs.sens) {
				note_signal(h, s);
			}
			connect(dangling, h);
			return build_stmt(*fs.body, {h}, fs);
		}
		case FsKind::IfElse:
		case FsKind::CaseStatement:
			return build_stmt(*fs.body, std::move(dangling), fs);
		case FsKind::FunctionDecl:
			// Function bodies become ordinary blocks at their
			// declaration site; call sites are CALL nodes.
			return build_stmt(*fs.function->body, std::move(dangling), fs);
		}
		return dangling;
	}

	std::vector<int> build_instance(const Instance &inst, std::vector<int> dangling)
	{
		int c = add_node(CdfgKind::CALL, module_->name, inst.line);
		g_.nodes[size_t(c)].instance = &inst;
		for (const auto &b : inst.bindings) {
			if (b.expr) {
				for (const auto &s : expr_signals(*b.expr)) {
					note_signal(c, s);
				}
			}
		}
		connect(dangling, c);
		add_edge(c, entry_.at(inst.module_name));
		// Control returns from the child: its EXIT feeds whatever
		// follows this call.
		return {exit_.at(inst.module_name)};
	}

	std::vector<int> build_stmt(const Stmt &st, std::vector<int> dangling, const FunctionalStatement &fs)
	{
		switch (st.kind) {
		case StmtKind::Assign: {
			int n = add_node(CdfgKind::AS, module_->name, st.span.first_line);
			attach(n, fs, {&st});
			note_assign_signals(n, st);
			connect(dangling, n);
			return {n};
		}
		case StmtKind::If: {
			int i = add_node(CdfgKind::IF, module_->name, st.span.first_line);
			attach(i, fs, {&st});
			for (const auto &s : expr_signals(*st.cond)) {
				note_signal(i, s);
			}
			connect(dangling, i);
			std::vector<int> out = build_stmt(*st.then_branch, {i}, fs);
			if (st.else_branch) {
				std::vector<int> other = build_stmt(*st.else_branch, {i}, fs);
				out.insert(out.end(), other.begin(), other.end());
			} else {
				out.push_back(i); // fall-through when not taken
			}
			return out;
		}
		case StmtKind::Case: {
			int c = add_node(CdfgKind::CASE, module_->name, st.span.first_line);
			attach(c, fs, {&st});
			for (const auto &s : expr_signals(*st.selector)) {
				note_signal(c, s);
			}
			connect(dangling, c);
			std::vector<int> out;
			bool has_default = false;
			for (const auto &arm : st.arms) {
				std::vector<int> arm_out = build_stmt(*arm.body, {c}, fs);
				out.insert(out.end(), arm_out.begin(), arm_out.end());
				has_default = has_default || arm.is_default;
			}
			if (!has_default) {
				out.push_back(c); // no arm may match
			}
			return out;
		}
		case StmtKind::Block: {
			// Group maximal runs of assignments into one AS node.
			std::vector<const Stmt *> group;
			auto flush = [&]() {
				if (group.empty()) {
					return;
				}
				int n = add_node(CdfgKind::AS, module_->name, group.front()->span.first_line);
				attach(n, fs, group);
				for (const Stmt *s : group) {
					note_assign_signals(n, *s);
				}
				connect(dangling, n);
				dangling = {n};
				group.clear();
			};
			for (const auto &inner : st.stmts) {
				if (inner->kind == StmtKind::Assign) {
					group.push_back(inner.get());
				} else {
					flush();
					dangling = build_stmt(*inner, std::move(dangling), fs);
				}
			}
			flush();
			return dangling;
		}
		}
		return dangling;
	}

	void attach(int node, const FunctionalStatement &fs, std::vector<const Stmt *> stmts)
	{
		g_.nodes[size_t(node)].fs = &fs;
		g_.nodes[size_t(node)].stmts = std::move(stmts);
	}

	void note_signal(int node, const std::string &name)
	{
		// Only module-level names; function locals stay out of the set.
		if (module_->is_declared(name)) {
			g_.nodes[size_t(node)].signals.insert(name);
		}
	}

	void note_assign_signals(int node, const Stmt &assign)
	{
		for (const auto &s : expr_signals(*assign.rhs)) {
			note_signal(node, s);
		}
		for (const auto &s : lvalue_index_signals(*assign.lhs)) {
			note_signal(node, s);
		}
		note_signal(node, lvalue_target(*assign.lhs));
	}

	/// Reassigns ids by DFS preorder from the top module's ENTRY node so
	/// numbering is a function of the design alone.
	void renumber()
	{
		std::vector<std::vector<int>> out(g_.nodes.size());
		for (const auto &e : g_.edges) {
			out[size_t(e.src)].push_back(e.dst);
		}
		std::vector<int> new_id(g_.nodes.size(), -1);
		int next = 0;
		std::vector<int> stack = {entry_.at(ast_.modules.front().name)};
		while (!stack.empty()) {
			int n = stack.back();
			stack.pop_back();
			if (new_id[size_t(n)] >= 0) {
				continue;
			}
			new_id[size_t(n)] = next++;
			for (auto it = out[size_t(n)].rbegin(); it != out[size_t(n)].rend(); ++it) {
				stack.push_back(*it);
			}
		}
		for (auto &id : new_id) {
			if (id < 0) {
				id = next++; // defensive: keep any stragglers
			}
		}

		std::vector<CdfgNode> nodes(g_.nodes.size());
		for (size_t i = 0; i < g_.nodes.size(); ++i) {
			CdfgNode n = std::move(g_.nodes[i]);
			n.id = new_id[i];
			nodes[size_t(new_id[i])] = std::move(n);
		}
		g_.nodes = std::move(nodes);
		for (auto &e : g_.edges) {
			e.src = new_id[size_t(e.src)];
			e.dst = new_id[size_t(e.dst)];
		}
		std::sort(g_.edges.begin(), g_.edges.end(),
			  [](const CdfgEdge &a, const CdfgEdge &b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; });
	}

	/// Labels are Module.line:KIND; same-line same-kind repeats get a
	/// #2, #3… suffix so every label stays unique.
	void label()
	{
		std::map<std::string, int> seen;
		for (auto &n : g_.nodes) {
			std::string base = n.module + "." + std::to_string(n.line) + ":" + to_string(n.kind);
			int k = ++seen[base];
			n.label = k == 1 ? base : base + "#" + std::to_string(k);
		}
	}

	const DesignAst &ast_;
	const RtlModule *module_ = nullptr;
	Cdfg g_;
	std::map<std::string, int> entry_;
	std::map<std::string, int> exit_;
};

} // namespace

Cdfg build_cdfg(const DesignAst &ast)
{
	if (ast.modules.empty()) {
		throw UnknownModule(ast.top);
	}
	return Builder(ast).run();
}

std::map<int, std::pair<std::string, int>> node_line_map(const Cdfg &g)
{
	std::map<int, std::pair<std::string, int>> out;
	for (const auto &n : g.nodes) {
		out[n.id] = {n.module, n.line};
	}
	return out;
}

std::string export_cdfg(const Cdfg &g)
{
	std::string out;
	for (const auto &n : g.nodes) {
		out += std::to_string(n.id) + "," + n.label + "," + n.module + "," + std::to_string(n.line) + "," +
		       to_string(n.kind) + "\n";
	}
	for (const auto &e : g.edges) {
		out += std::to_string(e.src) + "," + std::to_string(e.dst) + "\n";
	}
	return out;
}

} // namespace psc
