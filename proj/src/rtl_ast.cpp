#include "psc/rtl_ast.hpp"

#include "psc/errors.hpp"

namespace psc {

const char *to_string(BinOp op)
{
	switch (op) {
	case BinOp::And:
		return "&";
	case BinOp::Or:
		return "|";
	case BinOp::Xor:
		return "^";
	case BinOp::Add:
		return "+";
	case BinOp::Sub:
		return "-";
	case BinOp::Mul:
		return "*";
	case BinOp::Shl:
		return "<<";
	case BinOp::Shr:
		return ">>";
	case BinOp::Eq:
		return "==";
	case BinOp::Neq:
		return "!=";
	case BinOp::Lt:
		return "<";
	case BinOp::Gt:
		return ">";
	case BinOp::Le:
		return "<=";
	case BinOp::Ge:
		return ">=";
	}
	return "?";
}

const char *to_string(UnOp op)
{
	return op == UnOp::BitNot ? "~" : "-";
}

const char *to_string(FsKind kind)
{
	switch (kind) {
	case FsKind::ContinuousAssign:
		return "ContinuousAssign";
	case FsKind::AlwaysBlock:
		return "AlwaysBlock";
	case FsKind::CaseStatement:
		return "CaseStatement";
	case FsKind::IfElse:
		return "IfElse";
	case FsKind::FunctionDecl:
		return "FunctionDecl";
	case FsKind::FunctionCallAssign:
		return "FunctionCallAssign";
	}
	return "?";
}

ExprPtr Expr::clone() const
{
	auto out = std::make_unique<Expr>();
	out->kind = kind;
	out->span = span;
	out->name = name;
	out->value = value;
	out->literal_width = literal_width;
	out->bin = bin;
	out->un = un;
	out->width = width;
	out->args.reserve(args.size());
	for (const auto &a : args) {
		out->args.push_back(a->clone());
	}
	return out;
}

StmtPtr Stmt::clone() const
{
	auto out = std::make_unique<Stmt>();
	out->kind = kind;
	out->span = span;
	out->nonblocking = nonblocking;
	out->continuous = continuous;
	if (lhs) {
		out->lhs = lhs->clone();
	}
	if (rhs) {
		out->rhs = rhs->clone();
	}
	if (cond) {
		out->cond = cond->clone();
	}
	if (then_branch) {
		out->then_branch = then_branch->clone();
	}
	if (else_branch) {
		out->else_branch = else_branch->clone();
	}
	if (selector) {
		out->selector = selector->clone();
	}
	for (const auto &arm : arms) {
		CaseArm a;
		a.is_default = arm.is_default;
		for (const auto &l : arm.labels) {
			a.labels.push_back(l->clone());
		}
		if (arm.body) {
			a.body = arm.body->clone();
		}
		out->arms.push_back(std::move(a));
	}
	for (const auto &s : stmts) {
		out->stmts.push_back(s->clone());
	}
	return out;
}

const Port *RtlModule::find_port(const std::string &n) const
{
	for (const auto &p : ports) {
		if (p.name == n) {
			return &p;
		}
	}
	return nullptr;
}

const Signal *RtlModule::find_signal(const std::string &n) const
{
	for (const auto &s : signals) {
		if (s.name == n) {
			return &s;
		}
	}
	return nullptr;
}

const RtlFunction *RtlModule::find_function(const std::string &n) const
{
	for (const auto &fs : statements) {
		if (fs.kind == FsKind::FunctionDecl && fs.function && fs.function->name == n) {
			return fs.function.get();
		}
	}
	return nullptr;
}

int RtlModule::declared_width(const std::string &n) const
{
	if (const Port *p = find_port(n)) {
		return p->width();
	}
	if (const Signal *s = find_signal(n)) {
		return s->width();
	}
	return -1;
}

const RtlModule *DesignAst::find_module(const std::string &name) const
{
	for (const auto &m : modules) {
		if (m.name == name) {
			return &m;
		}
	}
	return nullptr;
}

const RtlModule &DesignAst::module_or_throw(const std::string &name) const
{
	const RtlModule *m = find_module(name);
	if (!m) {
		throw UnknownModule(name);
	}
	return *m;
}

namespace {

bool eq(const ExprPtr &a, const ExprPtr &b)
{
	if (!a || !b) {
		return !a && !b;
	}
	return structurally_equal(*a, *b);
}

bool eq(const StmtPtr &a, const StmtPtr &b)
{
	if (!a || !b) {
		return !a && !b;
	}
	return structurally_equal(*a, *b);
}

} // namespace

bool structurally_equal(const Expr &a, const Expr &b)
{
	if (a.kind != b.kind) {
		return false;
	}
	switch (a.kind) {
	case ExprKind::SignalRef:
		return a.name == b.name;
	case ExprKind::Constant:
		return a.value == b.value && a.literal_width == b.literal_width;
	case ExprKind::Unary:
		if (a.un != b.un) {
			return false;
		}
		break;
	case ExprKind::Binary:
		if (a.bin != b.bin) {
			return false;
		}
		break;
	case ExprKind::FunctionCall:
		if (a.name != b.name) {
			return false;
		}
		break;
	default:
		break;
	}
	if (a.args.size() != b.args.size()) {
		return false;
	}
	for (size_t i = 0; i < a.args.size(); ++i) {
		if (!eq(a.args[i], b.args[i])) {
			return false;
		}
	}
	return true;
}

bool structurally_equal(const Stmt &a, const Stmt &b)
{
	if (a.kind != b.kind) {
		return false;
	}
	switch (a.kind) {
	case StmtKind::Assign:
		return a.nonblocking == b.nonblocking && a.continuous == b.continuous && eq(a.lhs, b.lhs) && eq(a.rhs, b.rhs);
	case StmtKind::If:
		return eq(a.cond, b.cond) && eq(a.then_branch, b.then_branch) && eq(a.else_branch, b.else_branch);
	case StmtKind::Case: {
		if (!eq(a.selector, b.selector) || a.arms.size() != b.arms.size()) {
			return false;
		}
		for (size_t i = 0; i < a.arms.size(); ++i) {
			const auto &x = a.arms[i];
			const auto &y = b.arms[i];
			if (x.is_default != y.is_default || x.labels.size() != y.labels.size() || !eq(x.body, y.body)) {
				return false;
			}
			for (size_t j = 0; j < x.labels.size(); ++j) {
				if (!eq(x.labels[j], y.labels[j])) {
					return false;
				}
			}
		}
		return true;
	}
	case StmtKind::Block: {
		if (a.stmts.size() != b.stmts.size()) {
			return false;
		}
		for (size_t i = 0; i < a.stmts.size(); ++i) {
			if (!eq(a.stmts[i], b.stmts[i])) {
				return false;
			}
		}
		return true;
	}
	}
	return false;
}

bool structurally_equal(const FunctionalStatement &a, const FunctionalStatement &b)
{
	if (a.index != b.index || a.kind != b.kind) {
		return false;
	}
	if (a.kind == FsKind::FunctionDecl) {
		if (!a.function || !b.function) {
			return false;
		}
		const auto &f = *a.function;
		const auto &g = *b.function;
		if (f.name != g.name || f.msb != g.msb || f.lsb != g.lsb || f.inputs.size() != g.inputs.size()) {
			return false;
		}
		for (size_t i = 0; i < f.inputs.size(); ++i) {
			if (f.inputs[i].name != g.inputs[i].name || f.inputs[i].msb != g.inputs[i].msb || f.inputs[i].lsb != g.inputs[i].lsb) {
				return false;
			}
		}
		return eq(f.body, g.body);
	}
	if (a.kind == FsKind::AlwaysBlock) {
		if (a.clocked != b.clocked || a.sens_star != b.sens_star || a.clock != b.clock || a.sens != b.sens) {
			return false;
		}
	}
	return eq(a.body, b.body);
}

bool structurally_equal(const RtlModule &a, const RtlModule &b)
{
	if (a.name != b.name || a.ports.size() != b.ports.size() || a.signals.size() != b.signals.size() ||
	    a.statements.size() != b.statements.size() || a.instances.size() != b.instances.size()) {
		return false;
	}
	for (size_t i = 0; i < a.ports.size(); ++i) {
		const auto &p = a.ports[i];
		const auto &q = b.ports[i];
		if (p.name != q.name || p.dir != q.dir || p.msb != q.msb || p.lsb != q.lsb) {
			return false;
		}
	}
	for (size_t i = 0; i < a.signals.size(); ++i) {
		const auto &s = a.signals[i];
		const auto &t = b.signals[i];
		if (s.name != t.name || s.kind != t.kind || s.msb != t.msb || s.lsb != t.lsb || !eq(s.init, t.init)) {
			return false;
		}
	}
	for (size_t i = 0; i < a.statements.size(); ++i) {
		if (!structurally_equal(a.statements[i], b.statements[i])) {
			return false;
		}
	}
	for (size_t i = 0; i < a.instances.size(); ++i) {
		const auto &x = a.instances[i];
		const auto &y = b.instances[i];
		if (x.module_name != y.module_name || x.instance_name != y.instance_name || x.bindings.size() != y.bindings.size()) {
			return false;
		}
		for (size_t j = 0; j < x.bindings.size(); ++j) {
			if (x.bindings[j].port != y.bindings[j].port || !eq(x.bindings[j].expr, y.bindings[j].expr)) {
				return false;
			}
		}
	}
	return true;
}

bool structurally_equal(const DesignAst &a, const DesignAst &b)
{
	if (a.top != b.top || a.modules.size() != b.modules.size()) {
		return false;
	}
	for (size_t i = 0; i < a.modules.size(); ++i) {
		if (!structurally_equal(a.modules[i], b.modules[i])) {
			return false;
		}
	}
	return true;
}

void for_each_expr(const Expr &e, const std::function<void(const Expr &)> &fn)
{
	fn(e);
	for (const auto &a : e.args) {
		for_each_expr(*a, fn);
	}
}

std::set<std::string> expr_signals(const Expr &e)
{
	std::set<std::string> out;
	for_each_expr(e, [&out](const Expr &n) {
		if (n.kind == ExprKind::SignalRef) {
			out.insert(n.name);
		}
	});
	return out;
}

const std::string &lvalue_target(const Expr &lhs)
{
	if (lhs.kind == ExprKind::SignalRef) {
		return lhs.name;
	}
	if (lhs.kind == ExprKind::BitSelect || lhs.kind == ExprKind::PartSelect) {
		return lvalue_target(*lhs.args[0]);
	}
	throw std::logic_error("malformed assignment target");
}

std::set<std::string> lvalue_index_signals(const Expr &lhs)
{
	std::set<std::string> out;
	if (lhs.kind == ExprKind::BitSelect || lhs.kind == ExprKind::PartSelect) {
		for (size_t i = 1; i < lhs.args.size(); ++i) {
			auto sub = expr_signals(*lhs.args[i]);
			out.insert(sub.begin(), sub.end());
		}
	}
	return out;
}

} // namespace psc
